#include "featnorm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>
#include <unordered_set>

#include "featnorm/error.hpp"
#include "featnorm/random.hpp"

namespace featnorm {
namespace {

void check_labels(const LabelList& labels, const char* axis) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(labels.size());
  for (const auto& label : labels) {
    if (label.empty()) throw PreconditionError(std::string("empty ") + axis + " label");
    if (!seen.insert(label).second) {
      throw PreconditionError(std::string("duplicate ") + axis + " label '" + label + "'");
    }
  }
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t";
  const auto b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kSpace);
  return s.substr(b, e - b + 1);
}

struct RawTable {
  LabelList concepts;
  LabelList features;
  std::vector<int> cells;  // row-major
};

RawTable read_raw(std::istream& in, char delimiter, int max_value) {
  RawTable table;
  std::unordered_set<std::string> seen_concepts;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, delimiter);

    if (!have_header) {
      if (fields.size() < 2) throw ParseError("header has no feature columns", line_no);
      std::unordered_set<std::string_view> seen;
      for (std::size_t k = 1; k < fields.size(); ++k) {
        if (fields[k].empty()) throw ParseError("empty feature label in header", line_no);
        if (!seen.insert(fields[k]).second) {
          throw ParseError("duplicate feature label '" + std::string(fields[k]) + "'", line_no);
        }
        table.features.emplace_back(fields[k]);
      }
      have_header = true;
      continue;
    }

    if (fields.size() != table.features.size() + 1) {
      throw ParseError("ragged row: expected " + std::to_string(table.features.size() + 1) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::string concept_label(fields[0]);
    if (concept_label.empty()) throw ParseError("empty concept label", line_no);
    if (!seen_concepts.insert(concept_label).second) {
      throw ParseError("duplicate concept label '" + concept_label + "'", line_no);
    }
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const auto token = trim(fields[k]);
      int value = 0;
      const auto* end = token.data() + token.size();
      const auto [ptr, ec] = std::from_chars(token.data(), end, value);
      if (token.empty() || ec != std::errc{} || ptr != end) {
        throw ParseError("non-integer cell '" + std::string(fields[k]) + "' in column " +
                             std::to_string(k + 1),
                         line_no);
      }
      if (value < 0 || value > max_value) {
        throw ParseError("cell value " + std::to_string(value) + " in column " +
                             std::to_string(k + 1) + " outside [0, " +
                             std::to_string(max_value) + "]",
                         line_no);
      }
      table.cells.push_back(value);
    }
    table.concepts.push_back(std::move(concept_label));
  }

  if (!have_header) throw ParseError("empty table: missing header row");
  if (table.concepts.empty()) throw ParseError("table has no concept rows");
  return table;
}

template <typename Grid>
Grid to_grid(const RawTable& raw) {
  Grid grid(static_cast<Eigen::Index>(raw.concepts.size()),
            static_cast<Eigen::Index>(raw.features.size()));
  std::transform(raw.cells.begin(), raw.cells.end(), grid.data(),
                 [](int v) { return static_cast<typename Grid::Scalar>(v); });
  return grid;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

RaterCountMatrix::RaterCountMatrix(LabelList concepts, LabelList features, Counts counts,
                                   int rater_total)
    : concepts_(std::move(concepts)),
      features_(std::move(features)),
      counts_(std::move(counts)),
      rater_total_(rater_total) {
  if (rater_total_ < 1) throw PreconditionError("rater_total must be >= 1");
  if (counts_.rows() != static_cast<Eigen::Index>(concepts_.size()) ||
      counts_.cols() != static_cast<Eigen::Index>(features_.size())) {
    throw PreconditionError("count grid dimensions do not match the label lists");
  }
  check_labels(concepts_, "concept");
  check_labels(features_, "feature");
  if (counts_.size() > 0 && (counts_.minCoeff() < 0 || counts_.maxCoeff() > rater_total_)) {
    throw PreconditionError("rater count outside [0, rater_total]");
  }
}

BinaryFeatureMatrix::BinaryFeatureMatrix(LabelList concepts, LabelList features, Cells cells)
    : concepts_(std::move(concepts)), features_(std::move(features)), cells_(std::move(cells)) {
  if (cells_.rows() != static_cast<Eigen::Index>(concepts_.size()) ||
      cells_.cols() != static_cast<Eigen::Index>(features_.size())) {
    throw PreconditionError("cell grid dimensions do not match the label lists");
  }
  check_labels(concepts_, "concept");
  check_labels(features_, "feature");
  if (cells_.size() > 0 && cells_.maxCoeff() > 1) {
    throw PreconditionError("binary matrix cell outside {0, 1}");
  }
}

std::optional<Eigen::Index> BinaryFeatureMatrix::concept_index(const std::string& label) const {
  const auto it = std::find(concepts_.begin(), concepts_.end(), label);
  if (it == concepts_.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - concepts_.begin());
}

std::optional<Eigen::Index> BinaryFeatureMatrix::feature_index(const std::string& label) const {
  const auto it = std::find(features_.begin(), features_.end(), label);
  if (it == features_.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - features_.begin());
}

BinaryFeatureMatrix BinaryFeatureMatrix::select_rows(std::span<const Eigen::Index> indices) const {
  LabelList labels;
  labels.reserve(indices.size());
  Cells out(static_cast<Eigen::Index>(indices.size()), cells_.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    if (i < 0 || i >= rows()) throw PreconditionError("row index out of range");
    labels.push_back(concepts_[static_cast<std::size_t>(i)]);
    out.row(static_cast<Eigen::Index>(k)) = cells_.row(i);
  }
  return BinaryFeatureMatrix(std::move(labels), features_, std::move(out));
}

bool operator==(const BinaryFeatureMatrix& a, const BinaryFeatureMatrix& b) {
  return a.concepts_ == b.concepts_ && a.features_ == b.features_ &&
         a.cells_.rows() == b.cells_.rows() && a.cells_.cols() == b.cells_.cols() &&
         a.cells_ == b.cells_;
}

NormTable parse_norm_table(std::istream& in, char delimiter, ValueKind kind) {
  if (const auto* counts = std::get_if<CountCells>(&kind)) {
    return parse_count_table(in, delimiter, counts->rater_total);
  }
  return parse_binary_table(in, delimiter);
}

RaterCountMatrix parse_count_table(std::istream& in, char delimiter, int rater_total) {
  if (rater_total < 1) throw PreconditionError("rater_total must be >= 1");
  auto raw = read_raw(in, delimiter, rater_total);
  auto grid = to_grid<RaterCountMatrix::Counts>(raw);
  return RaterCountMatrix(std::move(raw.concepts), std::move(raw.features), std::move(grid),
                          rater_total);
}

BinaryFeatureMatrix parse_binary_table(std::istream& in, char delimiter) {
  auto raw = read_raw(in, delimiter, 1);
  auto grid = to_grid<BinaryFeatureMatrix::Cells>(raw);
  return BinaryFeatureMatrix(std::move(raw.concepts), std::move(raw.features), std::move(grid));
}

RaterCountMatrix read_count_table(const std::filesystem::path& path, char delimiter,
                                  int rater_total) {
  auto in = open_input(path);
  return parse_count_table(in, delimiter, rater_total);
}

BinaryFeatureMatrix read_binary_table(const std::filesystem::path& path, char delimiter) {
  auto in = open_input(path);
  return parse_binary_table(in, delimiter);
}

void write_norm_table(std::ostream& out, const BinaryFeatureMatrix& matrix, char delimiter) {
  out << "concept";
  for (const auto& f : matrix.features()) out << delimiter << f;
  out << '\n';
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    out << matrix.concepts()[static_cast<std::size_t>(i)];
    for (const auto cell : matrix.row(i)) out << delimiter << (cell ? '1' : '0');
    out << '\n';
  }
}

void write_norm_table(const std::filesystem::path& path, const BinaryFeatureMatrix& matrix,
                      char delimiter) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_norm_table(out, matrix, delimiter);
  if (!out) throw IoError("write failed for " + path.string());
}

BinaryFeatureMatrix threshold_unanimous(const RaterCountMatrix& counts,
                                        std::optional<int> threshold) {
  const int t = threshold.value_or(counts.rater_total());
  if (t < 1 || t > counts.rater_total()) {
    throw PreconditionError("threshold " + std::to_string(t) + " outside [1, " +
                            std::to_string(counts.rater_total()) + "]");
  }
  BinaryFeatureMatrix::Cells cells = (counts.counts().array() >= t).cast<std::uint8_t>();
  return BinaryFeatureMatrix(counts.concepts(), counts.features(), std::move(cells));
}

std::size_t holdout_size(std::size_t n, double holdout_fraction) {
  if (n < 2) throw PreconditionError("splitting needs at least 2 concepts");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw PreconditionError("holdout fraction must lie in (0, 1)");
  }
  const auto rounded = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * holdout_fraction + 0.5));
  return std::clamp<std::size_t>(rounded, 1, n - 1);
}

ConceptSplit split_concepts(const BinaryFeatureMatrix& matrix, double holdout_fraction,
                            std::uint64_t seed, std::size_t fold) {
  const auto n = static_cast<std::size_t>(matrix.rows());
  const std::size_t k = holdout_size(n, holdout_fraction);

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }

  std::vector<bool> held(n, false);
  const std::size_t start = (fold * k) % n;
  for (std::size_t r = 0; r < k; ++r) {
    held[static_cast<std::size_t>(order[(start + r) % n])] = true;
  }

  ConceptSplit split{matrix, matrix, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (held[i] ? split.held_out_rows : split.retained_rows).push_back(static_cast<Eigen::Index>(i));
  }
  split.retained = matrix.select_rows(split.retained_rows);
  split.held_out = matrix.select_rows(split.held_out_rows);
  return split;
}

double density(const BinaryFeatureMatrix& matrix) {
  if (matrix.cells().size() == 0) throw PreconditionError("density of an empty matrix");
  const auto ones = matrix.cells().cast<long long>().sum();
  return static_cast<double>(ones) / static_cast<double>(matrix.cells().size());
}

}  // namespace featnorm
