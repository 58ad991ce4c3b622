#include "featnorm/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include "featnorm/error.hpp"

namespace featnorm {
namespace {

struct FullSvd {
  Eigen::MatrixXd left;    // n x k
  Eigen::VectorXd values;  // k
  Eigen::MatrixXd right;   // m x k
};

// Orthogonalises the columns of `work` (len x k) in place by cyclic Jacobi
// rotations, accumulating them into `rotations` (k x k).
void hestenes(Eigen::MatrixXd& work, Eigen::MatrixXd& rotations, int max_sweeps) {
  const Eigen::Index k = work.cols();
  const double eps = std::numeric_limits<double>::epsilon();
  const double threshold = eps * static_cast<double>(std::max<Eigen::Index>(work.rows(), 1));
  // Columns at roundoff level are later treated as zero; rotating them against
  // each other never settles, so they are left alone.
  const double negligible = eps * work.norm();
  const double negligible_sq = negligible * negligible;
  rotations.setIdentity(k, k);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < k; ++p) {
      for (Eigen::Index q = p + 1; q < k; ++q) {
        auto cp = work.col(p);
        auto cq = work.col(q);
        const double alpha = cp.squaredNorm();
        const double beta = cq.squaredNorm();
        const double gamma = cp.dot(cq);
        if (gamma == 0.0 || std::abs(gamma) <= threshold * std::sqrt(alpha * beta)) continue;
        if (std::min(alpha, beta) <= negligible_sq) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < work.rows(); ++r) {
          const double a = cp(r);
          const double b = cq(r);
          cp(r) = c * a - s * b;
          cq(r) = s * a + c * b;
        }
        auto vp = rotations.col(p);
        auto vq = rotations.col(q);
        for (Eigen::Index r = 0; r < k; ++r) {
          const double a = vp(r);
          const double b = vq(r);
          vp(r) = c * a - s * b;
          vq(r) = s * a + c * b;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError(fmt::format("SVD did not converge within {} sweeps", max_sweeps));
}

// Replaces the columns flagged in `missing` with unit vectors orthogonal to
// every other column, drawn from the standard basis by Gram-Schmidt.
void complete_basis(Eigen::MatrixXd& basis, const std::vector<bool>& missing) {
  const Eigen::Index len = basis.rows();
  Eigen::Index candidate = 0;
  for (Eigen::Index col = 0; col < basis.cols(); ++col) {
    if (!missing[static_cast<std::size_t>(col)]) continue;
    bool placed = false;
    while (!placed && candidate < len) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(len, candidate++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index other = 0; other < basis.cols(); ++other) {
          if (other == col) continue;
          if (missing[static_cast<std::size_t>(other)] && other > col) continue;
          v -= basis.col(other).dot(v) * basis.col(other);
        }
      }
      const double norm = v.norm();
      if (norm > 0.5) {
        basis.col(col) = v / norm;
        placed = true;
      }
    }
    if (!placed) throw NumericError("could not complete an orthonormal basis");
  }
}

void check_finite(const Eigen::MatrixXd& matrix) {
  if (!matrix.allFinite()) throw NumericError("matrix contains non-finite entries");
}

FullSvd full_svd(const Eigen::MatrixXd& matrix, const SvdOptions& options) {
  check_finite(matrix);
  const Eigen::Index n = matrix.rows();
  const Eigen::Index m = matrix.cols();
  const bool transpose = n < m;
  const Eigen::Index k = std::min(n, m);

  // Orthogonalise the k columns of whichever orientation is tall.
  Eigen::MatrixXd work = transpose ? Eigen::MatrixXd(matrix.transpose()) : matrix;
  Eigen::MatrixXd rotations;
  hestenes(work, rotations, options.max_sweeps);

  Eigen::VectorXd norms = work.colwise().norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  const double largest = k > 0 ? norms(order.front()) : 0.0;
  const double cutoff = largest * std::numeric_limits<double>::epsilon() *
                        static_cast<double>(std::max(n, m));

  FullSvd out;
  out.values.resize(k);
  Eigen::MatrixXd normalized(work.rows(), k);
  Eigen::MatrixXd rotated(k, k);
  std::vector<bool> missing(static_cast<std::size_t>(k), false);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = order[static_cast<std::size_t>(c)];
    const double sigma = norms(src);
    rotated.col(c) = rotations.col(src);
    if (sigma <= cutoff || sigma == 0.0) {
      out.values(c) = sigma <= cutoff ? 0.0 : sigma;
      normalized.col(c).setZero();
      missing[static_cast<std::size_t>(c)] = true;
    } else {
      out.values(c) = sigma;
      normalized.col(c) = work.col(src) / sigma;
    }
  }
  complete_basis(normalized, missing);

  if (transpose) {
    out.left = std::move(rotated);
    out.right = std::move(normalized);
  } else {
    out.left = std::move(normalized);
    out.right = std::move(rotated);
  }

  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index argmax = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < out.right.rows(); ++r) {
      const double mag = std::abs(out.right(r, c));
      if (mag > best) {
        best = mag;
        argmax = r;
      }
    }
    if (out.right(argmax, c) < 0.0) {
      out.right.col(c) *= -1.0;
      out.left.col(c) *= -1.0;
    }
  }
  return out;
}

double orthonormality_residual(const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd gram = q.transpose() * q;
  return (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

RankDecomposition truncated_svd(const Eigen::MatrixXd& matrix, Eigen::Index rank,
                                const SvdOptions& options) {
  const Eigen::Index limit = std::min(matrix.rows(), matrix.cols());
  if (rank < 1 || rank > limit) {
    throw PreconditionError(
        fmt::format("rank {} outside [1, {}] for a {}x{} matrix", rank, limit, matrix.rows(),
                    matrix.cols()));
  }
  auto full = full_svd(matrix, options);
  RankDecomposition dec{full.left.leftCols(rank), full.values.head(rank),
                        full.right.leftCols(rank)};
  const double residual =
      std::max(orthonormality_residual(dec.left_coords), orthonormality_residual(dec.right_vectors));
  if (!(residual <= options.tol)) {
    throw NumericError(fmt::format("singular vectors orthonormal only to {:.3g}", residual));
  }
  return dec;
}

Eigen::MatrixXd reconstruct(const RankDecomposition& dec) {
  return dec.left_coords * dec.singular_values.asDiagonal() * dec.right_vectors.transpose();
}

Eigen::VectorXd singular_value_profile(const Eigen::MatrixXd& matrix, const SvdOptions& options) {
  if (matrix.size() == 0) return {};
  return full_svd(matrix, options).values;
}

void write_scree(std::ostream& out, const Eigen::VectorXd& singular_values, char delimiter) {
  out << "index" << delimiter << "singular_value\n";
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    out << (i + 1) << delimiter << fmt::format("{}", singular_values(i)) << '\n';
  }
}

}  // namespace featnorm
