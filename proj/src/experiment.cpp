#include "softlabel/experiment.hpp"

#include <set>
#include <sstream>
#include <unordered_set>

#include "softlabel/rng.hpp"

namespace softlabel {

using nlohmann::json;

namespace {

// Keys consumed by the command-line layer rather than the experiment.
const std::set<std::string> kDataKeys{"features", "annotations", "references", "eval_sets",
                                      "hard_fill", "heldout",    "classes"};

template <typename T>
T typed(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_schedule(const json& j, TrainSchedule& s) {
  static const std::set<std::string> known{"epochs",       "lr0",          "lr_drop_factor",
                                           "drop_epochs",  "weight_decay", "batch_size"};
  if (!j.is_object()) throw ConfigError("config key 'schedule' must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown schedule key '" + key + "'");
  if (j.contains("epochs")) s.epochs = typed<int>(j, "epochs");
  if (j.contains("lr0")) s.lr0 = typed<double>(j, "lr0");
  if (j.contains("lr_drop_factor")) s.lr_drop_factor = typed<double>(j, "lr_drop_factor");
  if (j.contains("drop_epochs")) s.drop_epochs = typed<std::vector<int>>(j, "drop_epochs");
  if (j.contains("weight_decay")) s.weight_decay = typed<double>(j, "weight_decay");
  if (j.contains("batch_size")) s.batch_size = typed<std::size_t>(j, "batch_size");
  if (s.epochs < 1) throw ConfigError("schedule.epochs must be at least 1");
  if (!(s.lr0 > 0.0)) throw ConfigError("schedule.lr0 must be positive");
  if (s.batch_size == 0) throw ConfigError("schedule.batch_size must be positive");
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "variety", "gamma",   "mode",     "M",           "baseline", "beta",      "seeds",
      "hidden",  "epsilon", "range",    "fgsm_target", "bin_size", "schedule", "time_model"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key) && !kDataKeys.contains(key))
      throw ConfigError("unknown config key '" + key + "'");

  ExperimentConfig c;
  try {
    if (j.contains("variety")) c.variety = parse_variety(typed<std::string>(j, "variety"));
    if (j.contains("mode")) c.regime.mode = parse_target_mode(typed<std::string>(j, "mode"));
    if (j.contains("baseline"))
      c.regime.baseline = parse_baseline(typed<std::string>(j, "baseline"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.regime.variety = c.variety;
  if (j.contains("gamma")) c.gamma = typed<double>(j, "gamma");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (j.contains("beta")) c.regime.beta = typed<double>(j, "beta");
  if (!(c.regime.beta >= 0.0 && c.regime.beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
  if (j.contains("M")) {
    const auto& m = j.at("M");
    if (m.is_string() && m.get<std::string>() == "all")
      c.regime.m_subsample.reset();
    else if (m.is_number_unsigned() && m.get<std::size_t>() > 0)
      c.regime.m_subsample = m.get<std::size_t>();
    else
      throw ConfigError("config key 'M' must be a positive integer or \"all\"");
  }
  if (j.contains("seeds")) c.seeds = typed<std::vector<std::uint64_t>>(j, "seeds");
  if (c.seeds.empty()) throw ConfigError("config needs at least one seed");
  if (j.contains("hidden")) c.hidden = typed<std::vector<std::size_t>>(j, "hidden");
  if (j.contains("range")) {
    auto r = typed<std::vector<double>>(j, "range");
    if (r.size() != 2 || !(r[0] < r[1])) throw ConfigError("range must be [lo, hi] with lo < hi");
    c.range = {r[0], r[1]};
  }
  if (j.contains("epsilon") && !j.at("epsilon").is_null()) {
    c.epsilon = typed<double>(j, "epsilon");
    if (*c.epsilon < 0.0) throw ConfigError("epsilon must be nonnegative");
  }
  if (j.contains("fgsm_target")) {
    const auto t = typed<std::string>(j, "fgsm_target");
    if (t == "eval")
      c.fgsm_target = FgsmTarget::EvalArgmax;
    else if (t == "model")
      c.fgsm_target = FgsmTarget::ModelPrediction;
    else
      throw ConfigError("fgsm_target must be \"eval\" or \"model\"");
  }
  if (j.contains("bin_size")) c.bin_size = typed<std::size_t>(j, "bin_size");
  if (c.bin_size == 0) throw ConfigError("bin_size must be positive");
  if (j.contains("schedule")) read_schedule(j.at("schedule"), c.schedule);
  if (j.contains("time_model")) {
    const auto& t = j.at("time_model");
    if (t.contains("t_per_input")) c.time_model.t_per_input = typed<double>(t, "t_per_input");
    if (t.contains("t_per_hard")) c.time_model.t_per_hard = typed<double>(t, "t_per_hard");
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["variety"] = to_string(c.variety);
  j["gamma"] = c.gamma;
  j["mode"] = to_string(c.regime.mode);
  j["M"] = c.regime.m_subsample ? json(*c.regime.m_subsample) : json("all");
  j["baseline"] = to_string(c.regime.baseline);
  j["beta"] = c.regime.beta;
  j["seeds"] = c.seeds;
  j["hidden"] = c.hidden;
  j["range"] = {c.range.lo, c.range.hi};
  j["epsilon"] = c.fgsm_epsilon();
  j["fgsm_target"] = c.fgsm_target == FgsmTarget::EvalArgmax ? "eval" : "model";
  j["bin_size"] = c.bin_size;
  j["schedule"] = {{"epochs", c.schedule.epochs},
                   {"lr0", c.schedule.lr0},
                   {"lr_drop_factor", c.schedule.lr_drop_factor},
                   {"drop_epochs", c.schedule.drop_epochs},
                   {"weight_decay", c.schedule.weight_decay},
                   {"batch_size", c.schedule.batch_size}};
  j["time_model"] = {{"t_per_input", c.time_model.t_per_input},
                     {"t_per_hard", c.time_model.t_per_hard}};
  return j;
}

EvalMetrics evaluate_model(const MicroModel& model, const EvalSet& eval, double epsilon,
                           const FeatureRange& range, FgsmTarget target, std::size_t bin_size) {
  if (eval.entries.empty()) throw std::invalid_argument("evaluation set '" + eval.name + "' is empty");
  std::vector<std::vector<double>> clean, attacked;
  std::vector<SoftLabel> labels;
  clean.reserve(eval.entries.size());
  attacked.reserve(eval.entries.size());
  labels.reserve(eval.entries.size());
  for (const auto& e : eval.entries) {
    const Eigen::VectorXd p = model.forward(e.features);
    clean.emplace_back(p.data(), p.data() + p.size());
    const Eigen::VectorXd x_adv = fgsm_attack(model, e.features, e.label, epsilon, range, target);
    const Eigen::VectorXd q = model.forward(x_adv);
    attacked.emplace_back(q.data(), q.data() + q.size());
    labels.push_back(e.label);
  }
  EvalMetrics m;
  m.soft_ce = soft_cross_entropy(clean, labels);
  m.calibration_rmse = calibration_rmse(clean, labels, std::min(bin_size, labels.size()));
  m.fgsm_loss = soft_cross_entropy(attacked, labels);
  return m;
}

const MetricRow* EvalReport::find(const std::string& metric, const std::string& eval_set) const {
  for (const auto& row : rows)
    if (row.metric == metric && row.eval_set == eval_set) return &row;
  return nullptr;
}

std::string describe(const ExperimentConfig& c) {
  std::ostringstream out;
  switch (c.regime.baseline) {
    case Baseline::None:
      out << to_string(c.variety) << '/' << to_string(c.regime.mode) << "/M=";
      if (c.regime.m_subsample)
        out << *c.regime.m_subsample;
      else
        out << "all";
      break;
    case Baseline::Smoothed:
      out << "smoothed/beta=" << c.regime.beta;
      break;
    default:
      out << to_string(c.regime.baseline);
  }
  return out.str();
}

std::optional<double> estimate_regime_time(const ExperimentConfig& c,
                                           const std::vector<TrainExample>& data) {
  switch (c.regime.baseline) {
    case Baseline::Hard:
    case Baseline::Smoothed:
      return estimate_time(1, LabelVariety::Hard, c.time_model);
    case Baseline::Uniform:
    case Baseline::Random:
      return std::nullopt;
    case Baseline::None:
      break;
  }
  double per_annotator = 0.0;
  try {
    per_annotator = estimate_time(1, c.variety, c.time_model);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  if (c.regime.m_subsample) return static_cast<double>(*c.regime.m_subsample) * per_annotator;
  double members = 0.0;
  std::size_t annotated = 0;
  for (const auto& ex : data) {
    if (ex.pool.size() == 0) continue;
    members += static_cast<double>(ex.pool.size());
    ++annotated;
  }
  if (annotated == 0) return std::nullopt;
  return members / static_cast<double>(annotated) * per_annotator;
}

namespace {

void check_disjoint(const std::vector<TrainExample>& data, const std::vector<EvalSet>& eval_sets) {
  std::unordered_set<std::string> train_ids;
  for (const auto& ex : data) train_ids.insert(ex.image_id);
  for (const auto& set : eval_sets)
    for (const auto& e : set.entries)
      if (train_ids.contains(e.image_id))
        throw std::invalid_argument("image '" + e.image_id + "' is in both the training data and "
                                    "evaluation set '" + set.name + "'");
}

EvalReport summarize(const ExperimentConfig& config, const std::vector<EvalSet>& eval_sets,
                     const std::vector<std::vector<EvalMetrics>>& per_seed) {
  EvalReport report;
  report.regime = describe(config);
  report.seeds = config.seeds;
  const char* names[] = {"soft_ce", "calibration_rmse", "fgsm_loss"};
  for (std::size_t s = 0; s < eval_sets.size(); ++s) {
    for (int m = 0; m < 3; ++m) {
      MetricRow row;
      row.metric = names[m];
      row.eval_set = eval_sets[s].name;
      for (const auto& seed_metrics : per_seed) {
        const auto& em = seed_metrics[s];
        row.per_seed.push_back(m == 0 ? em.soft_ce : m == 1 ? em.calibration_rmse : em.fgsm_loss);
      }
      row.summary = mean_ci(row.per_seed);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::vector<EvalMetrics> evaluate_all(const ExperimentConfig& config, const MicroModel& model,
                                      const std::vector<EvalSet>& eval_sets) {
  std::vector<EvalMetrics> out;
  for (const auto& set : eval_sets)
    out.push_back(evaluate_model(model, set, config.fgsm_epsilon(), config.range,
                                 config.fgsm_target, config.bin_size));
  return out;
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& config, const std::vector<TrainExample>& data,
                          const std::vector<EvalSet>& eval_sets, std::vector<MicroModel>* models) {
  if (data.empty()) throw std::invalid_argument("run_experiment: no training data");
  check_disjoint(data, eval_sets);
  const std::size_t D = static_cast<std::size_t>(data.front().features.size());
  const std::size_t K = data.front().pool.aggregate.size();

  std::vector<std::vector<EvalMetrics>> per_seed;
  std::vector<std::vector<double>> traces;
  for (std::uint64_t seed : config.seeds) {
    auto model = MicroModel::initialized(D, config.hidden, K, derive_seed(seed, {0}));
    TrainSchedule schedule = config.schedule;
    schedule.seed = seed;
    auto trained = train(std::move(model), data, config.regime, schedule);
    per_seed.push_back(evaluate_all(config, trained.model, eval_sets));
    traces.push_back(std::move(trained.loss_trace));
    if (models) models->push_back(std::move(trained.model));
  }
  EvalReport report = summarize(config, eval_sets, per_seed);
  report.loss_traces = std::move(traces);
  report.time_seconds = estimate_regime_time(config, data);
  return report;
}

EvalReport evaluate_models(const ExperimentConfig& config, const std::vector<MicroModel>& models,
                           const std::vector<EvalSet>& eval_sets) {
  if (models.empty()) throw std::invalid_argument("evaluate_models: no models");
  std::vector<std::vector<EvalMetrics>> per_seed;
  for (const auto& model : models) per_seed.push_back(evaluate_all(config, model, eval_sets));
  ExperimentConfig shown = config;
  if (shown.seeds.size() != models.size()) {
    shown.seeds.clear();
    for (std::size_t i = 0; i < models.size(); ++i) shown.seeds.push_back(i);
  }
  return summarize(shown, eval_sets, per_seed);
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

json to_json(const EvalReport& report) {
  json j;
  j["regime"] = report.regime;
  j["seeds"] = report.seeds;
  j["time_seconds"] = optional_number(report.time_seconds);
  auto& rows = j["metrics"] = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"metric", r.metric},
                    {"eval_set", r.eval_set},
                    {"per_seed", r.per_seed},
                    {"mean", r.summary.mean},
                    {"ci_low", optional_number(r.summary.low)},
                    {"ci_high", optional_number(r.summary.high)}});
  }
  j["loss_traces"] = report.loss_traces;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport report;
  report.regime = j.at("regime").get<std::string>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  report.time_seconds = number_or_null(j.at("time_seconds"));
  for (const auto& r : j.at("metrics")) {
    MetricRow row;
    row.metric = r.at("metric").get<std::string>();
    row.eval_set = r.at("eval_set").get<std::string>();
    row.per_seed = r.at("per_seed").get<std::vector<double>>();
    row.summary.mean = r.at("mean").get<double>();
    row.summary.low = number_or_null(r.at("ci_low"));
    row.summary.high = number_or_null(r.at("ci_high"));
    report.rows.push_back(std::move(row));
  }
  if (j.contains("loss_traces"))
    report.loss_traces = j.at("loss_traces").get<std::vector<std::vector<double>>>();
  return report;
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  auto cell = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  out << "metric,name,value,ci_low,ci_high\n";
  for (const auto& r : report.rows) {
    out << r.metric << ',' << r.eval_set << ',' << r.summary.mean << ',';
    cell(r.summary.low);
    out << ',';
    cell(r.summary.high);
    out << '\n';
  }
  if (report.time_seconds) out << "time_seconds," << report.regime << ',' << *report.time_seconds << ",,\n";
  return out.str();
}

}  // namespace softlabel
