#pragma once

// Completion of a new concept's feature vector: regress the noisy machine
// vector onto the sigma-scaled right singular vectors, then push the fitted
// coordinates back through the decomposition.

#include <Eigen/Core>

#include <optional>
#include <span>

#include "featnorm/dataset.hpp"
#include "featnorm/lowrank.hpp"

namespace featnorm {

/// Regression predictors: row j = singular_values .* right_vectors.row(j).
struct DesignMatrix {
  Eigen::MatrixXd rows;       // m x d
  LabelList feature_labels;   // empty, or one label per row

  Eigen::Index features() const noexcept { return rows.rows(); }
  Eigen::Index rank() const noexcept { return rows.cols(); }
};

/// Fitted left-singular coordinates of one concept.
struct ConceptEmbedding {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  bool converged = false;
  double final_loss = 0.0;
  int iterations = 0;
};

struct FitConfig {
  double l2_penalty = 1.0;
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  bool include_intercept = true;
  double binarize_threshold = 0.5;

  /// Throws PreconditionError when a field is out of range.
  void validate() const;
};

/// Penalised negative log-likelihood and its gradient at `params`
/// (weights, then the intercept when enabled).
struct Objective {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

DesignMatrix build_design_matrix(const RankDecomposition& dec, LabelList feature_labels = {});

/// sum_j [softplus(z_j) - h_j z_j] + (l2/2)|w|^2 with z = X w + b. The
/// intercept is never penalised.
Objective logistic_objective(const DesignMatrix& design, std::span<const std::uint8_t> h,
                             const Eigen::VectorXd& params, const FitConfig& cfg);

/// Damped Newton (IRLS) with backtracking. `converged` is set iff the max-norm
/// of the gradient reached cfg.gradient_tolerance within cfg.max_iterations.
/// `start` optionally supplies the initial parameter vector.
ConceptEmbedding fit_concept_embedding(const DesignMatrix& design, std::span<const std::uint8_t> h,
                                       const FitConfig& cfg,
                                       const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Logistic link applied to X w + b.
Eigen::VectorXd predict_feature_probabilities(const ConceptEmbedding& emb,
                                              const DesignMatrix& design);

/// 1 iff p > threshold.
BinaryVector binarize(const Eigen::VectorXd& probs, double threshold = 0.5);

struct CompletedConcept {
  Eigen::VectorXd probabilities;
  BinaryVector features;
  ConceptEmbedding embedding;
};

CompletedConcept complete_concept(const DesignMatrix& design, std::span<const std::uint8_t> h,
                                  const FitConfig& cfg);
CompletedConcept complete_concept(const RankDecomposition& dec, std::span<const std::uint8_t> h,
                                  const FitConfig& cfg);

}  // namespace featnorm
