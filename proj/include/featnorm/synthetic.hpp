#pragma once

// Synthetic concept-by-feature matrices with known low-rank structure.

#include <cstdint>

#include "featnorm/dataset.hpp"

namespace featnorm {

struct LowRankBinary {
  BinaryFeatureMatrix matrix;
  Eigen::MatrixXd logits;  // the generating model, n x m
};

/// Thresholds the logit model A B^T / sqrt(rank) + offset at zero, where A
/// (n x rank) and B (m x rank) are standard normal. Concepts are labelled
/// "c000", ...; features "f000", ....
LowRankBinary make_low_rank_binary(Eigen::Index concepts, Eigen::Index features, Eigen::Index rank,
                                   std::uint64_t seed, double offset = 0.0);

/// Every concept copies one of `prototypes` random binary rows (each prototype
/// used at least once when concepts >= prototypes), so the matrix has rank at
/// most `prototypes`.
BinaryFeatureMatrix make_prototype_binary(Eigen::Index concepts, Eigen::Index features,
                                          Eigen::Index prototypes, std::uint64_t seed,
                                          double density = 0.4);

/// "prefix" followed by the zero-padded index, e.g. make_labels("c", 3) = c0, c1, c2.
LabelList make_labels(const std::string& prefix, Eigen::Index count);

}  // namespace featnorm
