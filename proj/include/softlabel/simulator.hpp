#pragma once

// In-silico annotator population. Each image carries a latent label
// distribution; annotators perceive a Dirichlet-perturbed copy of it and
// report either its mode (hard reporters) or the elicitation fields (soft
// reporters). All randomness derives from explicit seeds.

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "softlabel/features.hpp"
#include "softlabel/ingest.hpp"
#include "softlabel/labelcore.hpp"
#include "softlabel/stats.hpp"

namespace softlabel {

enum class ReporterBehavior { HardMode, Soft };

struct AnnotatorModel {
  /// Dirichlet concentration around the truth; +inf gives a noiseless
  /// percept.
  double concentration = 10.0;
  /// Reported probabilities are rounded to multiples of this many percent;
  /// 0 disables rounding. Must divide 100.
  int quantization = 5;
  /// Classes perceived below this probability are marked definitely-not.
  double exclusion_threshold = 0.02;
  ReporterBehavior behavior = ReporterBehavior::Soft;

  void validate() const;
};

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

struct WorldSpec {
  std::size_t images = 200;
  std::size_t classes = 10;
  /// Share of near-certain images (entropy <= low_entropy_max); the rest
  /// are ambiguous (entropy >= high_entropy_min). Three in 25 by default.
  double low_entropy_fraction = 3.0 / 25.0;
  double high_entropy_min = 0.25;
  double low_entropy_max = 0.10;
  /// Probability that an ambiguous image spreads over three classes
  /// rather than two.
  double three_class_fraction = 0.25;
  std::uint64_t seed = 0;
};

struct World {
  WorldSpec spec;
  std::vector<std::vector<double>> truths;
  std::vector<bool> low_entropy;

  std::size_t size() const noexcept { return truths.size(); }
};

World make_world(const WorldSpec& spec);

/// Dirichlet(concentration * q_n) draw; classes with zero truth stay zero.
/// Deterministic per (image, annotator, seed).
std::vector<double> sample_percept(const World& world, std::size_t image, std::size_t annotator,
                                   const AnnotatorModel& model, std::uint64_t seed);

/// Lowest index among the maximal entries.
ClassIndex hard_report(std::span<const double> percept);

/// Top two classes with rounded probabilities. The second slot is left
/// empty when its perceived mass is zero or below the exclusion threshold.
AnnotationRecord soft_report(const AnnotatorModel& model, std::span<const double> percept,
                             std::string image_id = {}, std::string annotator_id = {});

using Report = std::variant<AnnotationRecord, ClassIndex>;

/// Dispatches on `model.behavior`.
Report report(const AnnotatorModel& model, std::span<const double> percept,
              std::string image_id = {}, std::string annotator_id = {});

enum class Aggregation { Multi, Ours };

std::string to_string(Aggregation agg);
Aggregation parse_aggregation(const std::string& token);

struct AnnotatorPool {
  AnnotatorModel model;
  std::size_t size = 51;
};

struct CurvePoint {
  std::size_t M = 0;
  double mean_distance = 0.0;
};

/// Mean total-variation distance to the truth after aggregating the first
/// M annotators of the pool, for each requested M. Multi aggregates hard
/// reports by vote frequency; Ours aggregates T2-clamp labels of soft
/// reports by their mean. Throws std::invalid_argument when an M exceeds
/// the pool or is zero.
std::vector<CurvePoint> efficiency_curve(const World& world, const AnnotatorPool& pool,
                                         std::span<const std::size_t> M_values, Aggregation agg,
                                         const RedistributionPolicy& policy, std::uint64_t seed);

struct SweepSpec {
  WorldSpec world;
  AnnotatorPool pool;
  std::vector<std::size_t> M_values{1, 2, 4, 8, 16, 32, 51};
  std::vector<Aggregation> aggregations{Aggregation::Multi, Aggregation::Ours};
  RedistributionPolicy policy;
  std::size_t world_seeds = 50;
  std::uint64_t seed = 0;
};

struct SweepRow {
  std::size_t M = 0;
  Aggregation aggregation = Aggregation::Multi;
  MeanCi distance;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// per_seed[agg][world seed][index into M_values]
  std::map<Aggregation, std::vector<std::vector<double>>> per_seed;
};

/// Repeats efficiency_curve over independent worlds.
SweepResult run_sweep(const SweepSpec& spec);

/// `M,aggregation,mean_distance,ci_low,ci_high`.
std::string to_csv(const SweepResult& result);

/// CIFAR-10 names for ten classes, `class_<k>` otherwise.
LabelSpace synthetic_space(std::size_t classes);

/// Soft-reporter sessions covering every image `annotators_per_image`
/// times. Images are dealt into batches of `batch_size`; each batch gets
/// its own annotators, and each session ends with two covert repeats.
std::vector<RawSubmission> simulate_sessions(const World& world, const LabelSpace& space,
                                             const AnnotatorModel& model,
                                             std::size_t annotators_per_image,
                                             std::size_t batch_size, std::uint64_t seed);

std::string synthetic_image_id(std::size_t image);

struct FeatureSpec {
  std::size_t dim = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// x_n = clip(sum_k q_nk mu_k + noise, 0, 1) with random class prototypes
/// mu_k in [0.2, 0.8]^dim.
FeatureMatrix synthetic_features(const World& world, const FeatureSpec& spec);

}  // namespace softlabel
