#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "softlabel/cli.hpp"
#include "softlabel/ingest.hpp"
#include "softlabel/labelcore.hpp"
#include "softlabel/metrics.hpp"
#include "softlabel/model.hpp"
#include "softlabel/simulator.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace softlabel;

namespace {

LabelSpace space_of(const std::optional<std::vector<std::string>>& classes) {
  return classes ? LabelSpace(*classes) : LabelSpace::cifar10();
}

SoftLabel as_label(const std::vector<double>& p) {
  return SoftLabel(p, LabelVariety::OursAgg, "python");
}

std::map<std::string, SoftLabel> as_label_map(const std::map<std::string, std::vector<double>>& m) {
  std::map<std::string, SoftLabel> out;
  for (const auto& [id, p] : m) out.emplace(id, as_label(p));
  return out;
}

}  // namespace

PYBIND11_MODULE(_softlabel, m) {
  m.doc() = "Soft-label construction, aggregation, metrics and simulation";

  py::register_exception<LabelError>(m, "LabelError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.def("cifar10_classes", [] { return LabelSpace::cifar10().names(); });

  m.def(
      "construct_label",
      [](const std::string& record_json, const std::string& variety, double gamma,
         const std::optional<std::vector<std::string>>& classes) {
        const LabelSpace space = space_of(classes);
        const auto record = record_from_json(json::parse(record_json), space, "");
        return construct_label(record, space, parse_variety(variety), RedistributionPolicy{gamma})
            .vector();
      },
      py::arg("record_json"), py::arg("variety"), py::arg("gamma") = 0.1,
      py::arg("classes") = py::none());

  m.def(
      "aggregate_mean",
      [](const std::vector<std::vector<double>>& labels) {
        std::vector<SoftLabel> ls;
        for (const auto& p : labels) ls.push_back(as_label(p));
        return aggregate_mean(ls).vector();
      },
      py::arg("labels"));

  m.def(
      "multi_aggregate",
      [](const std::vector<std::int64_t>& counts) { return multi_aggregate(counts).vector(); },
      py::arg("counts"));

  m.def(
      "entropy", [](const std::vector<double>& p, double base) { return entropy(p, base); },
      py::arg("probs"), py::arg("base") = std::numbers::e);
  m.def(
      "label_distance",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return label_distance(a, b);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "cross_entropy",
      [](const std::vector<double>& pred, const std::vector<double>& target) {
        return cross_entropy(pred, target);
      },
      py::arg("prediction"), py::arg("target"));
  m.def(
      "calibration_rmse",
      [](const std::vector<std::vector<double>>& preds,
         const std::vector<std::vector<double>>& evals, std::size_t bin_size) {
        std::vector<SoftLabel> ls;
        for (const auto& p : evals) ls.push_back(as_label(p));
        return calibration_rmse(preds, ls, bin_size);
      },
      py::arg("predictions"), py::arg("evals"), py::arg("bin_size") = kDefaultCalibrationBin);

  m.def(
      "estimate_time",
      [](int M, const std::string& variety) { return estimate_time(M, parse_variety(variety)); },
      py::arg("M"), py::arg("variety"));

  m.def(
      "compare_label_sets_json",
      [](const std::map<std::string, std::vector<double>>& ours,
         const std::map<std::string, std::vector<double>>& theirs) {
        return to_json(compare_label_sets(as_label_map(ours), as_label_map(theirs))).dump();
      },
      py::arg("ours"), py::arg("theirs"));

  m.def(
      "parse_annotations_json",
      [](const std::string& text, const std::optional<std::vector<std::string>>& classes) {
        const LabelSpace space = space_of(classes);
        std::istringstream in(text);
        const auto parsed = parse_annotations(in, space);
        json subs = json::array();
        for (const auto& s : parsed.submissions) subs.push_back(submission_to_json(s, space));
        json errors = json::array();
        for (const auto& e : parsed.errors)
          errors.push_back({{"line", e.line}, {"field", e.field}, {"message", e.message}});
        return json{{"submissions", subs}, {"errors", errors}}.dump();
      },
      py::arg("text"), py::arg("classes") = py::none());

  m.def(
      "apply_qc_json",
      [](const std::string& jsonl, const std::map<std::string, std::string>& references,
         double threshold, const std::optional<std::vector<std::string>>& classes) {
        const LabelSpace space = space_of(classes);
        std::istringstream in(jsonl);
        const auto parsed = parse_annotations(in, space);
        ReferenceLabels refs;
        for (const auto& [id, name] : references) refs[id] = {space.index_of(name), std::nullopt};
        const auto qc = apply_qc(parsed.submissions, refs, threshold);
        json verdicts = json::array();
        for (const auto& v : qc.verdicts) {
          json counts = json::object();
          for (const auto& [rule, n] : v.error_counts) counts[to_string(rule)] = n;
          verdicts.push_back({{"annotator_id", v.annotator_id},
                              {"batch_id", v.batch_id},
                              {"kept", v.kept},
                              {"error_counts", counts},
                              {"accuracy", v.accuracy ? json(*v.accuracy) : json()},
                              {"reasons", v.reasons}});
        }
        return verdicts.dump();
      },
      py::arg("jsonl"), py::arg("references"), py::arg("threshold") = kDefaultAccuracyThreshold,
      py::arg("classes") = py::none());

  m.def(
      "simulate_sweep_csv",
      [](const std::vector<std::size_t>& M_values, const std::vector<std::string>& aggregations,
         std::size_t worlds, std::size_t images, double concentration, int quantization,
         double tau, double gamma, std::uint64_t seed) {
        SweepSpec spec;
        spec.M_values = M_values;
        spec.aggregations.clear();
        for (const auto& a : aggregations) spec.aggregations.push_back(parse_aggregation(a));
        spec.world_seeds = worlds;
        spec.world.images = images;
        spec.pool.model.concentration = concentration;
        spec.pool.model.quantization = quantization;
        spec.pool.model.exclusion_threshold = tau;
        spec.policy.gamma = gamma;
        spec.seed = seed;
        py::gil_scoped_release release;
        return to_csv(run_sweep(spec));
      },
      py::arg("M_values"), py::arg("aggregations"), py::arg("worlds") = 50,
      py::arg("images") = 200, py::arg("concentration") = 10.0, py::arg("quantization") = 5,
      py::arg("tau") = 0.02, py::arg("gamma") = 0.1, py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
