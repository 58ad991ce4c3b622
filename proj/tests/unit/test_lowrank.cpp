#include <doctest.h>

#include <Eigen/QR>
#include <sstream>

#include "featnorm/error.hpp"
#include "featnorm/lowrank.hpp"
#include "featnorm/synthetic.hpp"
#include "support/oracles.hpp"

using namespace featnorm;
using featnorm::testing::gaussian_matrix;

namespace {

double max_orthonormality_residual(const Eigen::MatrixXd& q) {
  return (q.transpose() * q - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace

TEST_CASE("singular values of small exact cases") {
  SUBCASE("identity") {
    const auto dec = truncated_svd(Eigen::MatrixXd::Identity(2, 2), 2);
    CHECK(dec.singular_values(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(dec.singular_values(1) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("diagonal") {
    Eigen::MatrixXd d(2, 2);
    d << 3, 0, 0, 2;
    const auto dec = truncated_svd(d, 2);
    CHECK(dec.singular_values(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(dec.singular_values(1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(relative_error(reconstruct(dec), d) <= 1e-10);
    // sign convention: largest right-vector entry positive
    CHECK(dec.right_vectors(0, 0) == doctest::Approx(1.0));
    CHECK(dec.right_vectors(1, 1) == doctest::Approx(1.0));
  }
  SUBCASE("rank-one outer product") {
    Eigen::MatrixXd r(2, 2);
    r << 1, 2, 2, 4;
    const auto dec = truncated_svd(r, 2);
    CHECK(dec.singular_values(0) == doctest::Approx(5.0).epsilon(1e-13));
    CHECK(std::abs(dec.singular_values(1)) <= 1e-12);
    CHECK(max_orthonormality_residual(dec.right_vectors) <= 1e-10);
    CHECK(max_orthonormality_residual(dec.left_coords) <= 1e-10);
  }
}

TEST_CASE("exact-rank recovery at full rank and from explicit factors") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Eigen::MatrixXd full = gaussian_matrix(7 + static_cast<Eigen::Index>(seed), 12, seed);
    const auto dec = truncated_svd(full, std::min(full.rows(), full.cols()));
    CHECK(relative_error(reconstruct(dec), full) <= 1e-8);

    const Eigen::MatrixXd low =
        gaussian_matrix(20, 5, seed + 100) * gaussian_matrix(5, 30, seed + 200);
    const auto dec5 = truncated_svd(low, 5);
    CHECK(relative_error(reconstruct(dec5), low) <= 1e-8);
  }
}

TEST_CASE("both orientations agree") {
  const Eigen::MatrixXd a = gaussian_matrix(9, 14, 3);
  const auto wide = truncated_svd(a, 6);
  const auto tall = truncated_svd(a.transpose(), 6);
  CHECK((wide.singular_values - tall.singular_values).cwiseAbs().maxCoeff() <= 1e-12);
  // U of A spans the same space as V of A^T
  const Eigen::MatrixXd cross = wide.left_coords.transpose() * tall.right_vectors;
  CHECK((cross.cwiseAbs() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("singular_value_profile") {
  Eigen::MatrixXd d(2, 2);
  d << 3, 0, 0, 2;
  const auto p = singular_value_profile(d);
  REQUIRE(p.size() == 2);
  CHECK(p(0) == doctest::Approx(3.0));
  CHECK(p(1) == doctest::Approx(2.0));

  CHECK(singular_value_profile(Eigen::MatrixXd::Zero(3, 4)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd r = gaussian_matrix(10, 15, 77);
  double frob2 = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) frob2 += r.data()[i] * r.data()[i];
  const auto prof = singular_value_profile(r);
  CHECK(prof.size() == 10);
  CHECK(prof.squaredNorm() == doctest::Approx(frob2).epsilon(1e-12));
  for (Eigen::Index i = 0; i + 1 < prof.size(); ++i) CHECK(prof(i) >= prof(i + 1));
}

TEST_CASE("zero matrix still yields orthonormal vectors") {
  const auto dec = truncated_svd(Eigen::MatrixXd::Zero(4, 6), 3);
  CHECK(dec.singular_values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(max_orthonormality_residual(dec.left_coords) <= 1e-12);
  CHECK(max_orthonormality_residual(dec.right_vectors) <= 1e-12);
}

TEST_CASE("properties on random matrices") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const Eigen::MatrixXd a = gaussian_matrix(12 + static_cast<Eigen::Index>(seed % 5), 17, seed);
    double previous = std::numeric_limits<double>::infinity();
    for (Eigen::Index d = 1; d <= 8; ++d) {
      const auto dec = truncated_svd(a, d);
      CHECK(max_orthonormality_residual(dec.left_coords) <= 1e-10);
      CHECK(max_orthonormality_residual(dec.right_vectors) <= 1e-10);
      for (Eigen::Index i = 0; i + 1 < d; ++i) {
        CHECK(dec.singular_values(i) >= dec.singular_values(i + 1));
      }
      const double err = (reconstruct(dec) - a).norm();
      CHECK(err <= previous + 1e-12);
      previous = err;
    }

    const auto base = truncated_svd(a, 5);
    const auto scaled = truncated_svd(3.5 * a, 5);
    CHECK(((scaled.singular_values - 3.5 * base.singular_values).cwiseAbs().array() /
           base.singular_values.array())
              .maxCoeff() <= 1e-10);

    const auto again = truncated_svd(a, 5);
    CHECK(again.left_coords == base.left_coords);
    CHECK(again.singular_values == base.singular_values);
    CHECK(again.right_vectors == base.right_vectors);
  }
}

TEST_CASE("truncation matches the best rank-d approximation") {
  // Compare against the tail energy: ||A - A_d||_F^2 = sum of discarded sigma^2.
  const Eigen::MatrixXd a = gaussian_matrix(15, 20, 5);
  const auto profile = singular_value_profile(a);
  for (Eigen::Index d = 1; d < 15; ++d) {
    const double err2 = (reconstruct(truncated_svd(a, d)) - a).squaredNorm();
    const double tail = profile.tail(profile.size() - d).squaredNorm();
    CHECK(err2 == doctest::Approx(tail).epsilon(1e-10));
  }
}

TEST_CASE("repeated singular values: subspace, not vectors") {
  // Q diag(2,2,1) Q^T with Q orthogonal: the leading 2-dimensional subspace is fixed.
  const Eigen::MatrixXd q = gaussian_matrix(3, 3, 8).householderQr().householderQ();
  Eigen::Vector3d s(2.0, 2.0, 1.0);
  const Eigen::MatrixXd a = q * s.asDiagonal() * q.transpose();
  const auto dec = truncated_svd(a, 2);
  CHECK(dec.singular_values(0) == doctest::Approx(2.0));
  CHECK(dec.singular_values(1) == doctest::Approx(2.0));
  const Eigen::MatrixXd proj_dec = dec.right_vectors * dec.right_vectors.transpose();
  const Eigen::MatrixXd proj_true = q.leftCols(2) * q.leftCols(2).transpose();
  CHECK((proj_dec - proj_true).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("error paths") {
  const Eigen::MatrixXd a = gaussian_matrix(4, 5, 1);
  CHECK_THROWS_AS(truncated_svd(a, 0), PreconditionError);
  CHECK_THROWS_AS(truncated_svd(a, 5), PreconditionError);
  Eigen::MatrixXd bad = a;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(truncated_svd(bad, 2), NumericError);
  CHECK_THROWS_AS(singular_value_profile(bad), NumericError);
  CHECK_THROWS_AS(truncated_svd(gaussian_matrix(30, 30, 2), 3, SvdOptions{1e-10, 1}), NumericError);
}

TEST_CASE("scree output") {
  Eigen::VectorXd v(2);
  v << 3.0, 2.0;
  std::ostringstream out;
  write_scree(out, v, ',');
  CHECK(out.str() == "index,singular_value\n1,3\n2,2\n");
}

TEST_CASE("exactly rank-deficient binary matrices converge") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = make_prototype_binary(20 + static_cast<Eigen::Index>(seed), 40, 3, seed).to_real();
    const auto profile = singular_value_profile(m);
    CHECK(profile(2) > 1e-6);
    CHECK(profile.tail(profile.size() - 3).cwiseAbs().maxCoeff() <= 1e-10 * profile(0));
    const auto dec = truncated_svd(m, 3);
    CHECK((reconstruct(dec) - m).norm() <= 1e-10 * m.norm());
    const auto full = truncated_svd(m, m.rows());
    CHECK((full.right_vectors.transpose() * full.right_vectors -
           Eigen::MatrixXd::Identity(m.rows(), m.rows()))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  }
}
