#include "featnorm/synthetic.hpp"

#include <cmath>
#include <fmt/format.h>

#include "featnorm/error.hpp"
#include "featnorm/random.hpp"

namespace featnorm {

LabelList make_labels(const std::string& prefix, Eigen::Index count) {
  const int width = count > 1 ? static_cast<int>(std::to_string(count - 1).size()) : 1;
  LabelList labels;
  labels.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) labels.push_back(fmt::format("{}{:0{}}", prefix, i, width));
  return labels;
}

LowRankBinary make_low_rank_binary(Eigen::Index concepts, Eigen::Index features, Eigen::Index rank,
                                   std::uint64_t seed, double offset) {
  if (concepts < 1 || features < 1 || rank < 1) {
    throw PreconditionError("synthetic dimensions must be positive");
  }
  Rng rng(seed);
  Eigen::MatrixXd a(concepts, rank);
  Eigen::MatrixXd b(features, rank);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  Eigen::MatrixXd logits = a * b.transpose() / std::sqrt(static_cast<double>(rank));
  logits.array() += offset;
  BinaryFeatureMatrix::Cells cells = (logits.array() > 0.0).cast<std::uint8_t>();
  return {BinaryFeatureMatrix(make_labels("c", concepts), make_labels("f", features),
                              std::move(cells)),
          std::move(logits)};
}

BinaryFeatureMatrix make_prototype_binary(Eigen::Index concepts, Eigen::Index features,
                                          Eigen::Index prototypes, std::uint64_t seed,
                                          double density) {
  if (concepts < 1 || features < 1 || prototypes < 1) {
    throw PreconditionError("synthetic dimensions must be positive");
  }
  Rng rng(seed);
  BinaryFeatureMatrix::Cells protos(prototypes, features);
  for (Eigen::Index i = 0; i < protos.size(); ++i) {
    protos.data()[i] = rng.uniform() < density ? 1 : 0;
  }
  BinaryFeatureMatrix::Cells cells(concepts, features);
  for (Eigen::Index i = 0; i < concepts; ++i) {
    const auto k = i < prototypes ? i : static_cast<Eigen::Index>(rng.below(
                                            static_cast<std::uint64_t>(prototypes)));
    cells.row(i) = protos.row(k);
  }
  return BinaryFeatureMatrix(make_labels("c", concepts), make_labels("f", features),
                             std::move(cells));
}

}  // namespace featnorm
