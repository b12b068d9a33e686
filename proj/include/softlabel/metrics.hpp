#pragma once

// Label-comparison statistics, model-evaluation metrics, and the
// annotation-time cost model.

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "softlabel/labelcore.hpp"

namespace softlabel {

/// Shannon entropy; `base` e gives nats. 0 log 0 is taken as 0.
double entropy(std::span<const double> probs, double base = std::numbers::e);
inline double entropy(const SoftLabel& label, double base = std::numbers::e) {
  return entropy(label.probs(), base);
}

/// Wasserstein-1 under the discrete ground metric, i.e. total variation
/// 0.5 * sum |a - b|.
double label_distance(std::span<const double> a, std::span<const double> b);
inline double label_distance(const SoftLabel& a, const SoftLabel& b) {
  return label_distance(a.probs(), b.probs());
}

/// Sample Pearson correlation. Throws std::invalid_argument on unequal or
/// short inputs and on zero variance.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

inline constexpr double kPredictionFloor = 1e-12;

/// Cross-entropy of one prediction against one target, as a positive loss.
double cross_entropy(std::span<const double> prediction, std::span<const double> target);

/// Mean positive cross-entropy over aligned prediction/target lists.
double soft_cross_entropy(const std::vector<std::vector<double>>& predictions,
                          const std::vector<SoftLabel>& evals);

inline constexpr std::size_t kDefaultCalibrationBin = 100;

/// Adaptive-binning calibration RMSE. Examples are ordered by confidence
/// and cut into bins of `bin_size`; the last bin absorbs the remainder.
/// Examples with equal confidence share their mean correctness, so the
/// result does not depend on input order. Correct means the prediction
/// argmax equals the eval argmax, ties to the lowest index.
double calibration_rmse(const std::vector<std::vector<double>>& predictions,
                        const std::vector<SoftLabel>& evals,
                        std::size_t bin_size = kDefaultCalibrationBin);

struct TimeModel {
  double t_per_input = 6.4;
  double t_per_hard = 1.8;
  std::map<LabelVariety, int> inputs_per_variety{
      {LabelVariety::T1Unif, 2},  {LabelVariety::T1Clamp, 3},    {LabelVariety::T2Unif, 4},
      {LabelVariety::T2Clamp, 5}, {LabelVariety::SelectTop2, 2},
  };
};

/// M annotators times the per-annotator cost of the variety, rounded to the
/// millisecond. Hard and multi-aggregate labels cost `t_per_hard` each.
double estimate_time(int M, LabelVariety variety, const TimeModel& tm = {});

struct ImageComparison {
  std::string image_id;
  double distance = 0.0;
  double entropy_ours = 0.0;
  double entropy_theirs = 0.0;
  double top_mass_ours = 0.0;
  int zero_classes_ours = 0;
};

struct ComparisonReport {
  std::size_t common_images = 0;
  double mean_distance = 0.0;
  /// Absent when either entropy list has zero variance.
  std::optional<double> entropy_pearson_r;
  double mean_entropy_ours = 0.0;
  double mean_entropy_theirs = 0.0;
  std::vector<ImageComparison> per_image;
};

/// Throws std::invalid_argument when the maps share no image id.
ComparisonReport compare_label_sets(const std::map<std::string, SoftLabel>& ours,
                                    const std::map<std::string, SoftLabel>& theirs);

nlohmann::json to_json(const ComparisonReport& report);

}  // namespace softlabel
