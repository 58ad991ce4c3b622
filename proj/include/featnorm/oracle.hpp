#pragma once

// Machine feature vectors: a live text-generation endpoint behind a JSONL
// response cache, or a seeded noisy channel over a known truth matrix.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "featnorm/dataset.hpp"
#include "featnorm/error.hpp"

namespace featnorm {

struct FeatureQuery {
  std::string concept_label;
  std::string feature_label;
};

enum class AnswerSource { kLive, kCache, kSynthetic };

struct OracleAnswer {
  std::uint8_t value = 0;
  std::string raw_text;
  AnswerSource source = AnswerSource::kSynthetic;
};

// ---------------------------------------------------------------------------
// Prompting

/// Plural forms for the concept slot. Concepts without an override get a
/// literal "s" appended.
class ConceptPlurals {
 public:
  ConceptPlurals() = default;
  explicit ConceptPlurals(std::map<std::string, std::string> overrides)
      : overrides_(std::move(overrides)) {}

  /// Reads "concept<delim>plural" lines; blank lines and lines starting with
  /// '#' are skipped.
  static ConceptPlurals load(const std::filesystem::path& path, char delimiter = ',');

  std::string plural(const std::string& concept_label) const;

 private:
  std::map<std::string, std::string> overrides_;
};

/// The few-shot feature-verification prompt, ending in the open "A:" slot.
std::string build_prompt(const FeatureQuery& query, const ConceptPlurals& plurals = {});

class UnparseableAnswer : public ParseError {
 public:
  explicit UnparseableAnswer(const std::string& raw)
      : ParseError("unparseable completion '" + raw + "'"), raw_(raw) {}
  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// First alphabetic token, case-insensitive: "true" -> 1, "false" -> 0.
std::uint8_t parse_answer(std::string_view raw_text);

// ---------------------------------------------------------------------------
// Response cache

struct CacheRecord {
  std::string concept_label;
  std::string feature_label;
  std::string prompt_sha256;
  std::string raw_text;
  std::optional<std::uint8_t> value;  // empty when the completion was unparseable
  std::string timestamp;              // ISO-8601 UTC
};

/// Append-only JSON-lines cache keyed by (concept, feature, prompt digest).
/// Safe for concurrent use; appends are flushed line by line. A truncated
/// final line (interrupted write) is ignored on load.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<CacheRecord> find(const std::string& concept_label, const std::string& feature_label,
                                  const std::string& prompt_sha256) const;
  void append(const CacheRecord& record);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  static std::string key(const std::string& c, const std::string& f, const std::string& h);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, CacheRecord> records_;
};

// ---------------------------------------------------------------------------
// Oracles

class FeatureOracle {
 public:
  virtual ~FeatureOracle() = default;
  virtual OracleAnswer answer(const FeatureQuery& query) = 0;
};

struct OracleConfig {
  std::string endpoint_url;
  std::string model_id;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds min_request_interval{0};
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  std::optional<std::filesystem::path> cache_path;
  std::string auth_token_env_var = "FEATNORM_API_TOKEN";
  int max_new_tokens = 5;

  /// Throws ConfigError for out-of-range fields.
  void validate() const;
};

/// Transport failure; `retryable()` marks connection errors, 429 and 5xx.
class TransportError : public NetworkError {
 public:
  TransportError(const std::string& what, bool retryable)
      : NetworkError(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// One prompt in, one completion out. Implementations adapt endpoint dialects.
class CompletionTransport {
 public:
  virtual ~CompletionTransport() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// POSTs {"model", "prompt", "max_new_tokens"} as JSON with a bearer token.
/// Accepts {"text": ...}, {"generated_text": ...}, [{"generated_text": ...}]
/// or {"choices": [{"text": ...}]} responses.
class HttpCompletionTransport : public CompletionTransport {
 public:
  HttpCompletionTransport(const OracleConfig& config, std::string bearer_token);
  ~HttpCompletionTransport() override;
  std::string complete(const std::string& prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Extracts the completion string from a response body in any accepted dialect.
std::string extract_completion_text(std::string_view body);

/// Live oracle: cache first, then the endpoint under the rate limit and retry
/// budget. Outbound requests are serialised.
class LiveOracle : public FeatureOracle {
 public:
  /// With no transport, builds an HTTP transport and requires the bearer token
  /// in the configured environment variable (ConfigError otherwise).
  explicit LiveOracle(OracleConfig config, ConceptPlurals plurals = {},
                      std::unique_ptr<CompletionTransport> transport = nullptr);

  OracleAnswer answer(const FeatureQuery& query) override;

  /// Requests sent to the transport so far, retries included.
  std::size_t live_requests() const noexcept { return live_requests_.load(); }
  const ResponseCache* cache() const noexcept { return cache_.get(); }

 private:
  std::string request_with_retries(const std::string& prompt);

  OracleConfig config_;
  ConceptPlurals plurals_;
  std::unique_ptr<CompletionTransport> transport_;
  std::unique_ptr<ResponseCache> cache_;
  std::mutex request_mutex_;
  std::optional<std::chrono::steady_clock::time_point> last_request_;
  std::atomic<std::size_t> live_requests_{0};
};

/// One-off query through a freshly constructed LiveOracle.
OracleAnswer query(const OracleConfig& config, const FeatureQuery& query);

/// Reads the truth matrix and flips 0 -> 1 with probability fp_rate and
/// 1 -> 0 with probability fn_rate. Each cell's draw depends only on
/// (seed, concept label, feature label).
class SyntheticOracle : public FeatureOracle {
 public:
  SyntheticOracle(BinaryFeatureMatrix truth, double fp_rate, double fn_rate, std::uint64_t seed);

  OracleAnswer answer(const FeatureQuery& query) override;

  /// The uniform draw in [0, 1) used for a cell.
  double cell_draw(const std::string& concept_label, const std::string& feature_label) const;

  double fp_rate() const noexcept { return fp_rate_; }
  double fn_rate() const noexcept { return fn_rate_; }

 private:
  BinaryFeatureMatrix truth_;
  double fp_rate_;
  double fn_rate_;
  std::uint64_t seed_;
  std::unordered_map<std::string, Eigen::Index> concept_rows_;
  std::unordered_map<std::string, Eigen::Index> feature_cols_;
};

/// Failure while filling one cell; `index()` is the position in the feature list.
class OracleCellError : public Error {
 public:
  OracleCellError(ErrorKind kind, std::size_t index, const std::string& what)
      : Error(kind, "feature " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Answers every (concept, feature) query in order.
BinaryVector fill_feature_vector(FeatureOracle& oracle, const std::string& concept_label,
                                 const LabelList& features);

/// Row-by-row fill of a whole concept-by-feature matrix.
BinaryFeatureMatrix fill_matrix(FeatureOracle& oracle, const LabelList& concepts,
                                const LabelList& features);

}  // namespace featnorm
