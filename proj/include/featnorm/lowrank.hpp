#pragma once

// Truncated singular value decomposition of the human concept-by-feature matrix.

#include <Eigen/Core>

#include <iosfwd>

namespace featnorm {

/// Top-d singular triplets: matrix ~= left_coords * diag(singular_values) * right_vectors^T.
struct RankDecomposition {
  Eigen::MatrixXd left_coords;      // n x d, orthonormal columns; row i = concept i
  Eigen::VectorXd singular_values;  // d, non-increasing, >= 0
  Eigen::MatrixXd right_vectors;    // m x d, orthonormal columns; row j = feature j

  Eigen::Index rank() const noexcept { return singular_values.size(); }
};

struct SvdOptions {
  /// Largest accepted deviation of U^T U and V^T V from the identity.
  double tol = 1e-10;
  /// Jacobi sweep budget.
  int max_sweeps = 10000;
};

/// Top-`rank` singular triplets via one-sided (Hestenes) Jacobi.
///
/// Each triplet is oriented so that the largest-magnitude entry of its right
/// vector is positive (lowest index on ties). Singular vectors for zero
/// singular values are completed deterministically to an orthonormal set.
/// Throws PreconditionError for a rank outside [1, min(n, m)], NumericError for
/// non-finite input or when the sweep budget runs out.
RankDecomposition truncated_svd(const Eigen::MatrixXd& matrix, Eigen::Index rank,
                                const SvdOptions& options = {});

/// left_coords * diag(singular_values) * right_vectors^T
Eigen::MatrixXd reconstruct(const RankDecomposition& dec);

/// All min(n, m) singular values, non-increasing.
Eigen::VectorXd singular_value_profile(const Eigen::MatrixXd& matrix,
                                       const SvdOptions& options = {});

/// Scree table: header "index<delim>singular_value", then one 1-based row per value.
void write_scree(std::ostream& out, const Eigen::VectorXd& singular_values, char delimiter);

}  // namespace featnorm
