#include "featnorm/oracle.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <regex>
#include <thread>

#include "featnorm/digest.hpp"
#include "featnorm/random.hpp"

namespace featnorm {
namespace {

using nlohmann::json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json to_json(const CacheRecord& r) {
  json j;
  j["concept"] = r.concept_label;
  j["feature"] = r.feature_label;
  j["prompt_sha256"] = r.prompt_sha256;
  j["raw_text"] = r.raw_text;
  j["value"] = r.value ? json(static_cast<int>(*r.value)) : json(nullptr);
  j["timestamp"] = r.timestamp;
  return j;
}

CacheRecord record_from_json(const json& j) {
  CacheRecord r;
  r.concept_label = j.at("concept").get<std::string>();
  r.feature_label = j.at("feature").get<std::string>();
  r.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
  r.raw_text = j.at("raw_text").get<std::string>();
  const auto& v = j.at("value");
  if (!v.is_null()) {
    const int value = v.get<int>();
    if (value != 0 && value != 1) throw std::invalid_argument("value must be 0, 1 or null");
    r.value = static_cast<std::uint8_t>(value);
  }
  r.timestamp = j.value("timestamp", "");
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;  // no cache yet
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& line = lines[k];
    if (line.empty()) continue;
    try {
      auto record = record_from_json(json::parse(line));
      auto id = key(record.concept_label, record.feature_label, record.prompt_sha256);
      records_.insert_or_assign(std::move(id), std::move(record));
    } catch (const std::exception& e) {
      if (k + 1 == lines.size()) break;  // torn final write
      throw ParseError(std::string("malformed cache record: ") + e.what(), k + 1);
    }
  }
}

std::string ResponseCache::key(const std::string& c, const std::string& f, const std::string& h) {
  std::string k;
  k.reserve(c.size() + f.size() + h.size() + 2);
  k.append(c).push_back('\x1f');
  k.append(f).push_back('\x1f');
  k.append(h);
  return k;
}

std::optional<CacheRecord> ResponseCache::find(const std::string& concept_label,
                                               const std::string& feature_label,
                                               const std::string& prompt_sha256) const {
  std::lock_guard lock(mutex_);
  const auto it = records_.find(key(concept_label, feature_label, prompt_sha256));
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::append(const CacheRecord& record) {
  std::lock_guard lock(mutex_);
  {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to cache " + path_.string());
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw IoError("write failed for cache " + path_.string());
  }
  records_.insert_or_assign(key(record.concept_label, record.feature_label, record.prompt_sha256),
                            record);
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

// ---------------------------------------------------------------------------
// HTTP transport

void OracleConfig::validate() const {
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
  if (min_request_interval.count() < 0) throw ConfigError("min_request_interval must be >= 0");
  if (initial_backoff.count() < 0 || max_backoff.count() < 0) {
    throw ConfigError("backoff durations must be >= 0");
  }
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
}

std::string extract_completion_text(std::string_view body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response is not JSON", false);
  if (j.is_object()) {
    if (auto it = j.find("text"); it != j.end() && it->is_string()) return it->get<std::string>();
    if (auto it = j.find("generated_text"); it != j.end() && it->is_string()) {
      return it->get<std::string>();
    }
    if (auto it = j.find("choices"); it != j.end() && it->is_array() && !it->empty()) {
      const auto& first = it->front();
      if (first.contains("text") && first["text"].is_string()) {
        return first["text"].get<std::string>();
      }
    }
  }
  if (j.is_array() && !j.empty() && j.front().is_object() && j.front().contains("generated_text")) {
    return j.front()["generated_text"].get<std::string>();
  }
  throw TransportError("response has no completion text", false);
}

struct HttpCompletionTransport::Impl {
  std::string origin;  // scheme://host[:port]
  std::string path;
  std::string model;
  std::string token;
  int max_new_tokens;
  std::chrono::milliseconds timeout;
};

HttpCompletionTransport::HttpCompletionTransport(const OracleConfig& config,
                                                 std::string bearer_token)
    : impl_(std::make_unique<Impl>()) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(config.endpoint_url, match, kUrl)) {
    throw ConfigError("endpoint URL '" + config.endpoint_url + "' is not an http(s) URL");
  }
  impl_->origin = match[1].str();
  impl_->path = match[2].matched ? match[2].str() : "/";
  impl_->model = config.model_id;
  impl_->token = std::move(bearer_token);
  impl_->max_new_tokens = config.max_new_tokens;
  impl_->timeout = config.timeout;
}

HttpCompletionTransport::~HttpCompletionTransport() = default;

std::string HttpCompletionTransport::complete(const std::string& prompt) {
  httplib::Client client(impl_->origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(impl_->timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(impl_->timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!impl_->token.empty()) headers.emplace("Authorization", "Bearer " + impl_->token);
  const json body = {{"model", impl_->model},
                     {"prompt", prompt},
                     {"max_new_tokens", impl_->max_new_tokens}};
  const auto res = client.Post(impl_->path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + impl_->origin + " failed: " +
                             httplib::to_string(res.error()),
                         true);
  }
  if (res->status < 200 || res->status >= 300) {
    const bool retryable = res->status == 429 || res->status >= 500;
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + impl_->origin,
                         retryable);
  }
  return extract_completion_text(res->body);
}

// ---------------------------------------------------------------------------
// LiveOracle

LiveOracle::LiveOracle(OracleConfig config, ConceptPlurals plurals,
                       std::unique_ptr<CompletionTransport> transport)
    : config_(std::move(config)), plurals_(std::move(plurals)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) {
    if (config_.endpoint_url.empty()) throw ConfigError("live oracle needs an endpoint URL");
    const char* token = std::getenv(config_.auth_token_env_var.c_str());
    if (token == nullptr || *token == '\0') {
      throw ConfigError("environment variable " + config_.auth_token_env_var +
                        " with the API token is not set");
    }
    transport_ = std::make_unique<HttpCompletionTransport>(config_, token);
  }
  if (config_.cache_path) cache_ = std::make_unique<ResponseCache>(*config_.cache_path);
}

std::string LiveOracle::request_with_retries(const std::string& prompt) {
  std::lock_guard lock(request_mutex_);
  auto backoff = config_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    if (last_request_) {
      const auto ready = *last_request_ + config_.min_request_interval;
      std::this_thread::sleep_until(ready);
    }
    last_request_ = std::chrono::steady_clock::now();
    ++live_requests_;
    try {
      return transport_->complete(prompt);
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt >= config_.max_retries) {
        throw NetworkError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) +
                           " attempt" + (attempt == 0 ? "" : "s") + ")");
      }
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, config_.max_backoff);
  }
}

OracleAnswer LiveOracle::answer(const FeatureQuery& q) {
  if (q.concept_label.empty() || q.feature_label.empty()) {
    throw PreconditionError("feature query needs a concept and a feature");
  }
  const std::string prompt = build_prompt(q, plurals_);
  const std::string digest = sha256_hex(prompt);

  if (cache_) {
    if (auto hit = cache_->find(q.concept_label, q.feature_label, digest)) {
      if (!hit->value) throw UnparseableAnswer(hit->raw_text);
      return {*hit->value, hit->raw_text, AnswerSource::kCache};
    }
  }

  std::string raw = request_with_retries(prompt);
  std::optional<std::uint8_t> value;
  try {
    value = parse_answer(raw);
  } catch (const UnparseableAnswer&) {
  }
  if (cache_) {
    cache_->append({q.concept_label, q.feature_label, digest, raw, value, utc_timestamp()});
  }
  if (!value) throw UnparseableAnswer(raw);
  return {*value, std::move(raw), AnswerSource::kLive};
}

OracleAnswer query(const OracleConfig& config, const FeatureQuery& q) {
  LiveOracle oracle(config);
  return oracle.answer(q);
}

// ---------------------------------------------------------------------------
// SyntheticOracle

SyntheticOracle::SyntheticOracle(BinaryFeatureMatrix truth, double fp_rate, double fn_rate,
                                 std::uint64_t seed)
    : truth_(std::move(truth)), fp_rate_(fp_rate), fn_rate_(fn_rate), seed_(seed) {
  if (!(fp_rate_ >= 0.0 && fp_rate_ < 1.0) || !(fn_rate_ >= 0.0 && fn_rate_ < 1.0)) {
    throw PreconditionError("synthetic flip rates must lie in [0, 1)");
  }
  for (Eigen::Index i = 0; i < truth_.rows(); ++i) {
    concept_rows_.emplace(truth_.concepts()[static_cast<std::size_t>(i)], i);
  }
  for (Eigen::Index j = 0; j < truth_.cols(); ++j) {
    feature_cols_.emplace(truth_.features()[static_cast<std::size_t>(j)], j);
  }
}

double SyntheticOracle::cell_draw(const std::string& concept_label,
                                  const std::string& feature_label) const {
  std::uint64_t h = fnv1a(concept_label);
  h = fnv1a("\x1f", h);
  h = fnv1a(feature_label, h);
  return to_unit_interval(splitmix64(splitmix64(seed_) ^ h));
}

OracleAnswer SyntheticOracle::answer(const FeatureQuery& q) {
  const auto ci = concept_rows_.find(q.concept_label);
  if (ci == concept_rows_.end()) {
    throw PreconditionError("unknown concept '" + q.concept_label + "'");
  }
  const auto fj = feature_cols_.find(q.feature_label);
  if (fj == feature_cols_.end()) {
    throw PreconditionError("unknown feature '" + q.feature_label + "'");
  }
  const bool truth = truth_(ci->second, fj->second) != 0;
  const double u = cell_draw(q.concept_label, q.feature_label);
  const bool flipped = truth ? u < fn_rate_ : u < fp_rate_;
  return {static_cast<std::uint8_t>(truth != flipped ? 1 : 0), {}, AnswerSource::kSynthetic};
}

// ---------------------------------------------------------------------------

BinaryVector fill_feature_vector(FeatureOracle& oracle, const std::string& concept_label,
                                 const LabelList& features) {
  BinaryVector out(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    try {
      out[j] = oracle.answer({concept_label, features[j]}).value;
    } catch (const Error& e) {
      throw OracleCellError(e.kind(), j, e.what());
    }
  }
  return out;
}

BinaryFeatureMatrix fill_matrix(FeatureOracle& oracle, const LabelList& concepts,
                                const LabelList& features) {
  BinaryFeatureMatrix::Cells cells(static_cast<Eigen::Index>(concepts.size()),
                                   static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    BinaryVector row;
    try {
      row = fill_feature_vector(oracle, concepts[i], features);
    } catch (const OracleCellError& e) {
      throw OracleCellError(e.kind(), e.index(), "concept '" + concepts[i] + "', " + e.what());
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  return BinaryFeatureMatrix(concepts, features, std::move(cells));
}

}  // namespace featnorm
