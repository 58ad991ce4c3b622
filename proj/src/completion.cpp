#include "featnorm/completion.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fmt/format.h>

#include "featnorm/error.hpp"

namespace featnorm {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_target(const DesignMatrix& design, std::span<const std::uint8_t> h) {
  if (static_cast<Eigen::Index>(h.size()) != design.features()) {
    throw PreconditionError(fmt::format("target has {} entries, design has {} features", h.size(),
                                        design.features()));
  }
  if (design.features() < 1) throw PreconditionError("design matrix has no features");
  for (auto v : h) {
    if (v > 1) throw PreconditionError("target vector is not binary");
  }
}

Eigen::Index parameter_count(const DesignMatrix& design, const FitConfig& cfg) {
  return design.rank() + (cfg.include_intercept ? 1 : 0);
}

Eigen::VectorXd linear_predictor(const DesignMatrix& design, const Eigen::VectorXd& params,
                                 const FitConfig& cfg) {
  Eigen::VectorXd z = design.rows * params.head(design.rank());
  if (cfg.include_intercept) z.array() += params(design.rank());
  return z;
}

double loss_at(const DesignMatrix& design, std::span<const std::uint8_t> h,
               const Eigen::VectorXd& params, const FitConfig& cfg) {
  const Eigen::VectorXd z = linear_predictor(design, params, cfg);
  double loss = 0.5 * cfg.l2_penalty * params.head(design.rank()).squaredNorm();
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    loss += softplus(z(j)) - (h[static_cast<std::size_t>(j)] ? z(j) : 0.0);
  }
  return loss;
}

}  // namespace

void FitConfig::validate() const {
  if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty)) {
    throw PreconditionError("l2_penalty must be finite and >= 0");
  }
  if (max_iterations < 1) throw PreconditionError("max_iterations must be >= 1");
  if (!(gradient_tolerance > 0.0)) throw PreconditionError("gradient_tolerance must be > 0");
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw PreconditionError("binarize_threshold must lie in (0, 1)");
  }
}

DesignMatrix build_design_matrix(const RankDecomposition& dec, LabelList feature_labels) {
  if (!feature_labels.empty() &&
      static_cast<Eigen::Index>(feature_labels.size()) != dec.right_vectors.rows()) {
    throw PreconditionError("feature label count does not match the decomposition");
  }
  return DesignMatrix{dec.right_vectors * dec.singular_values.asDiagonal(),
                      std::move(feature_labels)};
}

Objective logistic_objective(const DesignMatrix& design, std::span<const std::uint8_t> h,
                             const Eigen::VectorXd& params, const FitConfig& cfg) {
  check_target(design, h);
  if (params.size() != parameter_count(design, cfg)) {
    throw PreconditionError("parameter vector has the wrong length");
  }
  const Eigen::Index d = design.rank();
  const Eigen::VectorXd z = linear_predictor(design, params, cfg);

  Objective out;
  out.loss = 0.5 * cfg.l2_penalty * params.head(d).squaredNorm();
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double target = h[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    out.loss += softplus(z(j)) - target * z(j);
    residual(j) = sigmoid(z(j)) - target;
  }
  out.gradient.resize(params.size());
  out.gradient.head(d) = design.rows.transpose() * residual + cfg.l2_penalty * params.head(d);
  if (cfg.include_intercept) out.gradient(d) = residual.sum();
  return out;
}

ConceptEmbedding fit_concept_embedding(const DesignMatrix& design, std::span<const std::uint8_t> h,
                                       const FitConfig& cfg,
                                       const std::optional<Eigen::VectorXd>& start) {
  cfg.validate();
  check_target(design, h);
  if (!design.rows.allFinite()) throw NumericError("design matrix has non-finite entries");

  const Eigen::Index d = design.rank();
  const Eigen::Index p = parameter_count(design, cfg);
  const Eigen::Index m = design.features();

  Eigen::VectorXd params = Eigen::VectorXd::Zero(p);
  if (start) {
    if (start->size() != p) throw PreconditionError("initial parameter vector has the wrong length");
    params = *start;
  }

  // Augmented predictors [X 1].
  Eigen::MatrixXd predictors(m, p);
  predictors.leftCols(d) = design.rows;
  if (cfg.include_intercept) predictors.col(d).setOnes();

  ConceptEmbedding emb;
  Objective obj = logistic_objective(design, h, params, cfg);
  if (!std::isfinite(obj.loss)) throw NumericError("non-finite loss at the initial point");

  for (int it = 0;; ++it) {
    if (obj.gradient.cwiseAbs().maxCoeff() <= cfg.gradient_tolerance) {
      emb.converged = true;
      break;
    }
    if (it == cfg.max_iterations) break;
    emb.iterations = it + 1;

    const Eigen::VectorXd z = predictors * params;
    Eigen::VectorXd curvature(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double s = sigmoid(z(j));
      curvature(j) = s * (1.0 - s);
    }
    Eigen::MatrixXd hessian = predictors.transpose() * curvature.asDiagonal() * predictors;
    hessian.diagonal().head(d).array() += cfg.l2_penalty;

    Eigen::VectorXd step;
    double jitter = 0.0;
    const double scale = 1.0 + hessian.diagonal().cwiseAbs().maxCoeff();
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd damped = hessian;
      damped.diagonal().array() += jitter;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = ldlt.solve(-obj.gradient);
        if (step.allFinite()) break;
      }
      step.resize(0);
      jitter = jitter == 0.0 ? 1e-12 * scale : jitter * 100.0;
    }
    if (step.size() == 0) step = -obj.gradient;

    const double slope = obj.gradient.dot(step);
    const double slack = 1e-13 * (1.0 + std::abs(obj.loss));
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      candidate = params + t * step;
      const double loss = loss_at(design, h, candidate, cfg);
      if (!std::isfinite(loss)) throw NumericError("non-finite loss during optimisation");
      if (loss <= obj.loss + 1e-4 * t * slope + slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    params = std::move(candidate);
    obj = logistic_objective(design, h, params, cfg);
  }

  emb.weights = params.head(d);
  emb.intercept = cfg.include_intercept ? params(d) : 0.0;
  emb.final_loss = obj.loss;
  if (!emb.weights.allFinite() || !std::isfinite(emb.intercept)) {
    throw NumericError("fitted embedding is not finite");
  }
  return emb;
}

Eigen::VectorXd predict_feature_probabilities(const ConceptEmbedding& emb,
                                              const DesignMatrix& design) {
  if (emb.weights.size() != design.rank()) {
    throw PreconditionError("embedding rank does not match the design matrix");
  }
  Eigen::VectorXd z = design.rows * emb.weights;
  return z.unaryExpr([&](double v) { return sigmoid(v + emb.intercept); });
}

BinaryVector binarize(const Eigen::VectorXd& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw PreconditionError("binarize threshold must lie in (0, 1)");
  }
  BinaryVector out(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    out[static_cast<std::size_t>(j)] = probs(j) > threshold ? 1 : 0;
  }
  return out;
}

CompletedConcept complete_concept(const DesignMatrix& design, std::span<const std::uint8_t> h,
                                  const FitConfig& cfg) {
  CompletedConcept out;
  out.embedding = fit_concept_embedding(design, h, cfg);
  out.probabilities = predict_feature_probabilities(out.embedding, design);
  out.features = binarize(out.probabilities, cfg.binarize_threshold);
  return out;
}

CompletedConcept complete_concept(const RankDecomposition& dec, std::span<const std::uint8_t> h,
                                  const FitConfig& cfg) {
  return complete_concept(build_design_matrix(dec), h, cfg);
}

}  // namespace featnorm
