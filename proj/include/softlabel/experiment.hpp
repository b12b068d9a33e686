#pragma once

// Multi-seed train-and-evaluate runs producing soft cross-entropy,
// calibration RMSE and FGSM loss per evaluation set, with 95% intervals
// across seeds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "softlabel/metrics.hpp"
#include "softlabel/model.hpp"
#include "softlabel/stats.hpp"
#include "softlabel/trainer.hpp"

namespace softlabel {

struct EvalEntry {
  std::string image_id;
  Eigen::VectorXd features;
  SoftLabel label;
};

struct EvalSet {
  std::string name;
  std::vector<EvalEntry> entries;
};

/// Malformed experiment configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  LabelVariety variety = LabelVariety::T2Clamp;
  double gamma = 0.1;
  LabelRegime regime;
  TrainSchedule schedule;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::size_t> hidden{64, 32};
  FeatureRange range;
  /// Defaults to 4/255 of the feature range.
  std::optional<double> epsilon;
  FgsmTarget fgsm_target = FgsmTarget::EvalArgmax;
  std::size_t bin_size = kDefaultCalibrationBin;
  TimeModel time_model;

  double fgsm_epsilon() const { return epsilon ? *epsilon : default_fgsm_epsilon(range); }
};

/// Reads the keys it knows and keeps defaults for the rest; unknown keys
/// and ill-typed values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

struct EvalMetrics {
  double soft_ce = 0.0;
  double calibration_rmse = 0.0;
  double fgsm_loss = 0.0;
};

/// Calibration bins hold min(bin_size, |eval set|) examples.
EvalMetrics evaluate_model(const MicroModel& model, const EvalSet& eval, double epsilon,
                           const FeatureRange& range, FgsmTarget target, std::size_t bin_size);

struct MetricRow {
  std::string metric;
  std::string eval_set;
  std::vector<double> per_seed;
  MeanCi summary;
};

struct EvalReport {
  std::string regime;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricRow> rows;
  /// Estimated annotation seconds per image; absent for label kinds
  /// without a time cost.
  std::optional<double> time_seconds;
  std::vector<std::vector<double>> loss_traces;

  const MetricRow* find(const std::string& metric, const std::string& eval_set) const;
};

/// Throws std::invalid_argument when a training image id also appears in
/// an evaluation set. Trained models are appended to `models` when given.
EvalReport run_experiment(const ExperimentConfig& config, const std::vector<TrainExample>& data,
                          const std::vector<EvalSet>& eval_sets,
                          std::vector<MicroModel>* models = nullptr);

/// Builds the report from already-trained models, one per seed.
EvalReport evaluate_models(const ExperimentConfig& config, const std::vector<MicroModel>& models,
                           const std::vector<EvalSet>& eval_sets);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
/// `metric,name,value,ci_low,ci_high`; empty CI cells when absent.
std::string to_csv(const EvalReport& report);

/// Human-readable regime tag, e.g. "t2-clamp/deagg/M=6".
std::string describe(const ExperimentConfig& config);

/// Annotators aggregated per image for the time estimate.
std::optional<double> estimate_regime_time(const ExperimentConfig& config,
                                           const std::vector<TrainExample>& data);

}  // namespace softlabel
