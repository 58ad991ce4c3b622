#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "featnorm/completion.hpp"
#include "featnorm/dataset.hpp"
#include "featnorm/experiments.hpp"
#include "featnorm/lowrank.hpp"
#include "featnorm/metrics.hpp"
#include "featnorm/oracle.hpp"
#include "featnorm/report.hpp"
#include "featnorm/synthetic.hpp"

namespace py = pybind11;
using namespace featnorm;

namespace {

BinaryVector to_binary(const std::vector<int>& values) {
  BinaryVector out;
  out.reserve(values.size());
  for (int v : values) {
    if (v != 0 && v != 1) throw PreconditionError("binary vectors hold 0 or 1");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::vector<int> from_binary(std::span<const std::uint8_t> values) {
  return {values.begin(), values.end()};
}

BinaryFeatureMatrix make_matrix(LabelList concepts, LabelList features,
                                const Eigen::Ref<const Eigen::MatrixXi>& cells) {
  BinaryFeatureMatrix::Cells c(cells.rows(), cells.cols());
  for (Eigen::Index i = 0; i < cells.rows(); ++i) {
    for (Eigen::Index j = 0; j < cells.cols(); ++j) {
      const int v = cells(i, j);
      if (v != 0 && v != 1) throw PreconditionError("binary matrices hold 0 or 1");
      c(i, j) = static_cast<std::uint8_t>(v);
    }
  }
  return BinaryFeatureMatrix(std::move(concepts), std::move(features), std::move(c));
}

ExperimentConfig experiment_config(Eigen::Index rank, double l2_penalty,
                                   const std::string& correction, unsigned jobs) {
  ExperimentConfig c;
  c.rank = rank;
  c.fit.l2_penalty = l2_penalty;
  c.correction = parse_rate_correction(correction);
  c.jobs = jobs;
  return c;
}

py::object json_to_python(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

}  // namespace

PYBIND11_MODULE(_featnorm, m) {
  m.doc() = "Feature-norm completion from noisy machine answers";

  // Errors map onto Python exception classes by kind.
  static py::exception<Error> base(m, "FeatnormError");
  static py::exception<PreconditionError> precondition(m, "PreconditionError", base.ptr());
  static py::exception<ParseError> parse(m, "ParseError", base.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", base.ptr());
  static py::exception<NetworkError> network(m, "NetworkError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<IoError> io(m, "IoError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kPrecondition: py::set_error(precondition, e.what()); return;
        case ErrorKind::kParse: py::set_error(parse, e.what()); return;
        case ErrorKind::kNumeric: py::set_error(numeric, e.what()); return;
        case ErrorKind::kNetwork: py::set_error(network, e.what()); return;
        case ErrorKind::kConfig: py::set_error(config, e.what()); return;
        case ErrorKind::kIo: py::set_error(io, e.what()); return;
      }
      py::set_error(base, e.what());
    }
  });

  // -- dataset
  py::class_<BinaryFeatureMatrix>(m, "BinaryFeatureMatrix")
      .def(py::init(&make_matrix), py::arg("concepts"), py::arg("features"), py::arg("cells"))
      .def_property_readonly("concepts", &BinaryFeatureMatrix::concepts)
      .def_property_readonly("features", &BinaryFeatureMatrix::features)
      .def_property_readonly("cells",
                             [](const BinaryFeatureMatrix& x) { return Eigen::MatrixXi(x.cells().cast<int>()); })
      .def_property_readonly("shape", [](const BinaryFeatureMatrix& x) {
        return py::make_tuple(x.rows(), x.cols());
      })
      .def("row", [](const BinaryFeatureMatrix& x, Eigen::Index i) { return from_binary(x.row(i)); })
      .def("__eq__", [](const BinaryFeatureMatrix& a, const BinaryFeatureMatrix& b) { return a == b; })
      .def("__repr__", [](const BinaryFeatureMatrix& x) {
        return "<BinaryFeatureMatrix " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ">";
      });

  m.def("read_binary_table", &read_binary_table, py::arg("path"), py::arg("delimiter") = ',');
  m.def("write_norm_table",
        py::overload_cast<const std::filesystem::path&, const BinaryFeatureMatrix&, char>(&write_norm_table),
        py::arg("path"), py::arg("matrix"), py::arg("delimiter") = ',');
  m.def(
      "threshold_count_table",
      [](const std::filesystem::path& path, char delimiter, int rater_total, std::optional<int> threshold) {
        return threshold_unanimous(read_count_table(path, delimiter, rater_total), threshold);
      },
      py::arg("path"), py::arg("delimiter") = ',', py::arg("rater_total") = 4,
      py::arg("threshold") = py::none(),
      "Read a rater-count table and keep cells with count >= threshold (default: all raters).");
  m.def("holdout_size", &holdout_size, py::arg("n"), py::arg("fraction"));
  m.def(
      "split_concepts",
      [](const BinaryFeatureMatrix& x, double fraction, std::uint64_t seed, int fold) {
        auto s = split_concepts(x, fraction, seed, fold);
        return py::make_tuple(s.retained, s.held_out);
      },
      py::arg("matrix"), py::arg("fraction"), py::arg("seed"), py::arg("fold") = 0);
  m.def("density", &density);

  // -- lowrank
  py::class_<RankDecomposition>(m, "RankDecomposition")
      .def_readonly("left_coords", &RankDecomposition::left_coords)
      .def_readonly("singular_values", &RankDecomposition::singular_values)
      .def_readonly("right_vectors", &RankDecomposition::right_vectors)
      .def_property_readonly("rank", &RankDecomposition::rank);
  m.def(
      "truncated_svd",
      [](const Eigen::MatrixXd& a, Eigen::Index rank, double tol) {
        return truncated_svd(a, rank, SvdOptions{tol});
      },
      py::arg("matrix"), py::arg("rank"), py::arg("tol") = SvdOptions{}.tol);
  m.def("reconstruct", &reconstruct);
  m.def(
      "singular_value_profile",
      [](const Eigen::MatrixXd& a) { return singular_value_profile(a); }, py::arg("matrix"));

  // -- completion
  py::class_<ConceptEmbedding>(m, "ConceptEmbedding")
      .def_readonly("weights", &ConceptEmbedding::weights)
      .def_readonly("intercept", &ConceptEmbedding::intercept)
      .def_readonly("converged", &ConceptEmbedding::converged)
      .def_readonly("final_loss", &ConceptEmbedding::final_loss)
      .def_readonly("iterations", &ConceptEmbedding::iterations);
  m.def(
      "complete_concept",
      [](const RankDecomposition& dec, const std::vector<int>& h, double l2_penalty,
         bool include_intercept) {
        FitConfig cfg;
        cfg.l2_penalty = l2_penalty;
        cfg.include_intercept = include_intercept;
        const auto h_bin = to_binary(h);
        auto out = complete_concept(dec, h_bin, cfg);
        return py::make_tuple(out.probabilities, from_binary(out.features), out.embedding);
      },
      py::arg("decomposition"), py::arg("h"), py::arg("l2_penalty") = 1.0,
      py::arg("include_intercept") = true,
      "Fit the concept's coordinates to h and return (probabilities, features, embedding).");

  // -- metrics
  py::class_<DetectionTally>(m, "DetectionTally")
      .def(py::init([](std::int64_t h, std::int64_t mi, std::int64_t fa, std::int64_t cr) {
             return DetectionTally{h, mi, fa, cr};
           }),
           py::arg("hits"), py::arg("misses"), py::arg("false_alarms"), py::arg("correct_rejections"))
      .def_readonly("hits", &DetectionTally::hits)
      .def_readonly("misses", &DetectionTally::misses)
      .def_readonly("false_alarms", &DetectionTally::false_alarms)
      .def_readonly("correct_rejections", &DetectionTally::correct_rejections)
      .def("__eq__", [](const DetectionTally& a, const DetectionTally& b) { return a == b; });
  m.def(
      "tally",
      [](const std::vector<int>& predicted, const std::vector<int>& truth) {
        const auto p = to_binary(predicted);
        const auto t = to_binary(truth);
        return tally(p, t);
      },
      py::arg("predicted"), py::arg("truth"));
  m.def("standard_normal_quantile", &standard_normal_quantile, py::arg("p"));
  m.def("standard_normal_cdf", &standard_normal_cdf, py::arg("z"));
  m.def(
      "d_prime",
      [](const DetectionTally& t, const std::string& correction) {
        return d_prime(t, parse_rate_correction(correction)).d_prime;
      },
      py::arg("tally"), py::arg("correction") = "loglinear");
  m.def(
      "paired_t",
      [](const std::vector<double>& d) {
        const auto r = paired_t(d);
        return py::make_tuple(r.t, r.df);
      },
      py::arg("differences"));

  // -- oracle
  m.def(
      "build_prompt",
      [](const std::string& concept_label, const std::string& feature,
         const std::map<std::string, std::string>& plurals) {
        return build_prompt({concept_label, feature}, ConceptPlurals(plurals));
      },
      py::arg("concept"), py::arg("feature"), py::arg("plurals") = std::map<std::string, std::string>{});
  m.def("parse_answer", [](const std::string& raw) { return static_cast<int>(parse_answer(raw)); });
  m.def(
      "synthetic_fill",
      [](const BinaryFeatureMatrix& truth, double fp, double fn, std::uint64_t seed) {
        SyntheticOracle oracle(truth, fp, fn, seed);
        return fill_matrix(oracle, truth.concepts(), truth.features());
      },
      py::arg("truth"), py::arg("fp_rate"), py::arg("fn_rate"), py::arg("seed"),
      "Machine matrix from a seeded noisy channel over the truth.");

  // -- synthetic data
  m.def(
      "make_low_rank_binary",
      [](Eigen::Index n, Eigen::Index f, Eigen::Index rank, std::uint64_t seed, double offset) {
        return make_low_rank_binary(n, f, rank, seed, offset).matrix;
      },
      py::arg("concepts"), py::arg("features"), py::arg("rank"), py::arg("seed"),
      py::arg("offset") = 0.0);

  // -- experiments (reports come back as plain dicts)
  m.def(
      "leave_one_out",
      [](const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine, Eigen::Index rank,
         double l2_penalty, const std::string& correction, unsigned jobs) {
        std::string text;
        {
          py::gil_scoped_release release;
          text = to_json(leave_one_out(human, machine, experiment_config(rank, l2_penalty, correction, jobs)));
        }
        return json_to_python(text);
      },
      py::arg("human"), py::arg("machine"), py::arg("rank") = 10, py::arg("l2_penalty") = 1.0,
      py::arg("correction") = "loglinear", py::arg("jobs") = 0);
  m.def(
      "holdout_sweep",
      [](const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine,
         std::optional<std::vector<double>> fractions, int repeats, std::uint64_t seed,
         Eigen::Index rank, double l2_penalty, const std::string& correction, unsigned jobs) {
        const auto fr = fractions.value_or(default_sweep_fractions());
        std::string text;
        {
          py::gil_scoped_release release;
          text = to_json(holdout_sweep(human, machine, fr, repeats, seed,
                                       experiment_config(rank, l2_penalty, correction, jobs)));
        }
        return json_to_python(text);
      },
      py::arg("human"), py::arg("machine"), py::arg("fractions") = py::none(), py::arg("repeats") = 5,
      py::arg("seed") = 42, py::arg("rank") = 10, py::arg("l2_penalty") = 1.0,
      py::arg("correction") = "loglinear", py::arg("jobs") = 0);
}
