#include "softlabel/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace softlabel {

double entropy(std::span<const double> probs, double base) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return base == std::numbers::e ? h : h / std::log(base);
}

double label_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("labels disagree on class count");
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) total += std::abs(a[k] - b[k]);
  return 0.5 * total;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson_r: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson_r: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::invalid_argument("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cross_entropy(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size())
    throw std::invalid_argument("cross_entropy: class count mismatch");
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k)
    if (target[k] != 0.0) loss -= target[k] * std::log(std::max(prediction[k], kPredictionFloor));
  return loss;
}

double soft_cross_entropy(const std::vector<std::vector<double>>& predictions,
                          const std::vector<SoftLabel>& evals) {
  if (predictions.size() != evals.size())
    throw std::invalid_argument("soft_cross_entropy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("soft_cross_entropy: no examples");
  double total = 0.0;
  for (std::size_t n = 0; n < predictions.size(); ++n)
    total += cross_entropy(predictions[n], evals[n].probs());
  return total / static_cast<double>(predictions.size());
}

double calibration_rmse(const std::vector<std::vector<double>>& predictions,
                        const std::vector<SoftLabel>& evals, std::size_t bin_size) {
  if (predictions.size() != evals.size())
    throw std::invalid_argument("calibration_rmse: length mismatch");
  if (bin_size == 0) throw std::invalid_argument("calibration_rmse: bin size must be positive");
  if (predictions.size() < bin_size)
    throw std::invalid_argument("calibration_rmse: fewer examples than one bin");

  struct Scored {
    double confidence;
    double correct;
  };
  std::vector<Scored> scored;
  scored.reserve(predictions.size());
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    const auto& p = predictions[n];
    if (p.size() != evals[n].size()) throw std::invalid_argument("calibration_rmse: K mismatch");
    const auto top = std::max_element(p.begin(), p.end());
    const auto predicted = static_cast<ClassIndex>(top - p.begin());
    scored.push_back({*top, predicted == evals[n].argmax() ? 1.0 : 0.0});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return a.confidence != b.confidence ? a.confidence < b.confidence : a.correct < b.correct;
  });

  const std::size_t N = scored.size();
  // Equal confidences are indistinguishable to the binning; each member of
  // a tie carries the tie's mean correctness.
  for (std::size_t i = 0; i < N;) {
    std::size_t j = i;
    double hits = 0.0;
    while (j < N && scored[j].confidence == scored[i].confidence) hits += scored[j++].correct;
    for (std::size_t t = i; t < j; ++t) scored[t].correct = hits / static_cast<double>(j - i);
    i = j;
  }
  const std::size_t bins = N / bin_size;
  double sum = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t begin = b * bin_size;
    const std::size_t end = (b + 1 == bins) ? N : begin + bin_size;
    double conf = 0.0, acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      conf += scored[i].confidence;
      acc += scored[i].correct;
    }
    const double count = static_cast<double>(end - begin);
    const double gap = conf / count - acc / count;
    sum += count / static_cast<double>(N) * gap * gap;
  }
  return std::sqrt(sum);
}

namespace {

// 12 * 6.4 is 76.80000000000001 in binary floating point.
double to_millis(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

}  // namespace

double estimate_time(int M, LabelVariety variety, const TimeModel& tm) {
  if (M < 1) throw std::invalid_argument("estimate_time: M must be positive");
  if (variety == LabelVariety::Hard || variety == LabelVariety::MultiAgg)
    return to_millis(static_cast<double>(M) * tm.t_per_hard);
  auto it = tm.inputs_per_variety.find(variety);
  if (it == tm.inputs_per_variety.end())
    throw std::invalid_argument("estimate_time: no cost for variety '" + to_string(variety) + "'");
  return to_millis(static_cast<double>(M * it->second) * tm.t_per_input);
}

ComparisonReport compare_label_sets(const std::map<std::string, SoftLabel>& ours,
                                    const std::map<std::string, SoftLabel>& theirs) {
  ComparisonReport report;
  std::vector<double> h_ours, h_theirs;
  double distance_sum = 0.0;
  for (const auto& [id, mine] : ours) {
    auto it = theirs.find(id);
    if (it == theirs.end()) continue;
    ImageComparison row;
    row.image_id = id;
    row.distance = label_distance(mine, it->second);
    row.entropy_ours = entropy(mine);
    row.entropy_theirs = entropy(it->second);
    row.top_mass_ours = mine[mine.argmax()];
    row.zero_classes_ours =
        static_cast<int>(std::count(mine.probs().begin(), mine.probs().end(), 0.0));
    distance_sum += row.distance;
    h_ours.push_back(row.entropy_ours);
    h_theirs.push_back(row.entropy_theirs);
    report.per_image.push_back(std::move(row));
  }
  if (report.per_image.empty())
    throw std::invalid_argument("compare_label_sets: no image ids in common");
  const double n = static_cast<double>(report.per_image.size());
  report.common_images = report.per_image.size();
  report.mean_distance = distance_sum / n;
  report.mean_entropy_ours = std::accumulate(h_ours.begin(), h_ours.end(), 0.0) / n;
  report.mean_entropy_theirs = std::accumulate(h_theirs.begin(), h_theirs.end(), 0.0) / n;
  try {
    report.entropy_pearson_r = pearson_r(h_ours, h_theirs);
  } catch (const std::invalid_argument&) {
    report.entropy_pearson_r = std::nullopt;
  }
  return report;
}

nlohmann::json to_json(const ComparisonReport& report) {
  nlohmann::json j;
  j["common_images"] = report.common_images;
  j["mean_distance"] = report.mean_distance;
  j["entropy_pearson_r"] =
      report.entropy_pearson_r ? nlohmann::json(*report.entropy_pearson_r) : nlohmann::json();
  j["mean_entropy_ours"] = report.mean_entropy_ours;
  j["mean_entropy_theirs"] = report.mean_entropy_theirs;
  j["ground_metric"] = "discrete (total variation)";
  auto& rows = j["per_image"] = nlohmann::json::array();
  for (const auto& r : report.per_image) {
    rows.push_back({{"image_id", r.image_id},
                    {"distance", r.distance},
                    {"entropy_ours", r.entropy_ours},
                    {"entropy_theirs", r.entropy_theirs},
                    {"top_mass_ours", r.top_mass_ours},
                    {"zero_classes_ours", r.zero_classes_ours}});
  }
  return j;
}

}  // namespace softlabel
