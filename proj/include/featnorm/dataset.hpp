#pragma once

// Concept-by-feature norm tables: parsing, rater thresholding and splits.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace featnorm {

using LabelList = std::vector<std::string>;
using BinaryVector = std::vector<std::uint8_t>;

/// Integer rater-agreement counts, one cell per (concept, feature).
class RaterCountMatrix {
 public:
  using Counts = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Validates labels, dimensions and 0 <= count <= rater_total.
  RaterCountMatrix(LabelList concepts, LabelList features, Counts counts, int rater_total);

  const LabelList& concepts() const noexcept { return concepts_; }
  const LabelList& features() const noexcept { return features_; }
  const Counts& counts() const noexcept { return counts_; }
  int rater_total() const noexcept { return rater_total_; }
  Eigen::Index rows() const noexcept { return counts_.rows(); }
  Eigen::Index cols() const noexcept { return counts_.cols(); }

 private:
  LabelList concepts_;
  LabelList features_;
  Counts counts_;
  int rater_total_;
};

/// A labelled {0,1} grid: the human matrix H, machine matrices and completions.
class BinaryFeatureMatrix {
 public:
  using Cells = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BinaryFeatureMatrix(LabelList concepts, LabelList features, Cells cells);

  const LabelList& concepts() const noexcept { return concepts_; }
  const LabelList& features() const noexcept { return features_; }
  const Cells& cells() const noexcept { return cells_; }
  Eigen::Index rows() const noexcept { return cells_.rows(); }
  Eigen::Index cols() const noexcept { return cells_.cols(); }

  std::uint8_t operator()(Eigen::Index i, Eigen::Index j) const { return cells_(i, j); }

  /// Contiguous view of one concept's feature vector.
  std::span<const std::uint8_t> row(Eigen::Index i) const {
    return {cells_.data() + i * cells_.cols(), static_cast<std::size_t>(cells_.cols())};
  }

  std::optional<Eigen::Index> concept_index(const std::string& label) const;
  std::optional<Eigen::Index> feature_index(const std::string& label) const;

  /// Rows in the given order, features untouched.
  BinaryFeatureMatrix select_rows(std::span<const Eigen::Index> indices) const;

  /// Cells as doubles, for the decomposition.
  Eigen::MatrixXd to_real() const { return cells_.cast<double>(); }

  /// True when labels (in order) and all cells are identical.
  friend bool operator==(const BinaryFeatureMatrix&, const BinaryFeatureMatrix&);

 private:
  LabelList concepts_;
  LabelList features_;
  Cells cells_;
};

struct CountCells {
  int rater_total;
};
struct BinaryCells {};
using ValueKind = std::variant<CountCells, BinaryCells>;
using NormTable = std::variant<RaterCountMatrix, BinaryFeatureMatrix>;

/// Parses a delimiter-separated table: a header row (corner token, then feature
/// labels) followed by one row per concept. Blank lines and trailing '\r' are
/// ignored. Errors carry the 1-based line number.
NormTable parse_norm_table(std::istream& in, char delimiter, ValueKind kind);

RaterCountMatrix parse_count_table(std::istream& in, char delimiter, int rater_total);
BinaryFeatureMatrix parse_binary_table(std::istream& in, char delimiter);

RaterCountMatrix read_count_table(const std::filesystem::path& path, char delimiter,
                                  int rater_total);
BinaryFeatureMatrix read_binary_table(const std::filesystem::path& path, char delimiter);

/// Writes the table back in the format accepted by `parse_binary_table`, with
/// "concept" as the corner token and '\n' line endings.
void write_norm_table(std::ostream& out, const BinaryFeatureMatrix& matrix, char delimiter);
void write_norm_table(const std::filesystem::path& path, const BinaryFeatureMatrix& matrix,
                      char delimiter);

/// cell = 1 iff count >= threshold. The threshold defaults to rater_total.
BinaryFeatureMatrix threshold_unanimous(const RaterCountMatrix& counts,
                                        std::optional<int> threshold = std::nullopt);

/// Number of held-out concepts for a fraction: round half up, then clamp to [1, n-1].
/// Throws PreconditionError when the fraction is outside (0, 1) or n < 2.
std::size_t holdout_size(std::size_t n, double holdout_fraction);

struct ConceptSplit {
  BinaryFeatureMatrix retained;
  BinaryFeatureMatrix held_out;
  std::vector<Eigen::Index> retained_rows;  // source row indices, ascending
  std::vector<Eigen::Index> held_out_rows;  // source row indices, ascending
};

/// Seeded partition of the concepts. A seed fixes a permutation of the rows;
/// fold k holds out the k-th consecutive block of that permutation (wrapping
/// around), so folds 0..ceil(n/k)-1 of one seed cycle through every concept.
/// Both sides keep the source row order.
ConceptSplit split_concepts(const BinaryFeatureMatrix& matrix, double holdout_fraction,
                            std::uint64_t seed, std::size_t fold = 0);

/// Fraction of cells equal to 1.
double density(const BinaryFeatureMatrix& matrix);

}  // namespace featnorm
