#pragma once

// Minibatch SGD over soft-label targets: aggregated pools, per-batch
// sampling of single annotators, annotator subsampling, and the hard,
// uniform, random and label-smoothing baselines.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softlabel/labelcore.hpp"
#include "softlabel/model.hpp"

namespace softlabel {

struct TrainSchedule {
  int epochs = 65;
  double lr0 = 0.1;
  /// Multiplier applied at each drop epoch.
  double lr_drop_factor = 1e-4;
  std::vector<int> drop_epochs{50, 55};
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  /// Learning rate for a zero-based epoch index.
  double learning_rate(int epoch) const;
};

enum class TargetMode { Aggregated, Deaggregated };

enum class Baseline { None, Hard, Uniform, Random, Smoothed };

std::string to_string(TargetMode mode);
std::string to_string(Baseline baseline);
TargetMode parse_target_mode(const std::string& token);
Baseline parse_baseline(const std::string& token);

struct LabelRegime {
  TargetMode mode = TargetMode::Aggregated;
  /// Variety the pools were built with; informational.
  LabelVariety variety = LabelVariety::T2Clamp;
  /// Annotators kept per image, fixed per run; nullopt keeps all.
  std::optional<std::size_t> m_subsample;
  Baseline baseline = Baseline::None;
  /// Smoothing factor for Baseline::Smoothed.
  double beta = 0.05;
};

struct TrainExample {
  std::string image_id;
  Eigen::VectorXd features;
  LabelPool pool;
  /// Reference hard label; the hard baselines fall back to the pool
  /// aggregate's argmax when absent.
  std::optional<ClassIndex> hard;
};

struct TrainResult {
  MicroModel model;
  /// Mean minibatch loss per epoch.
  std::vector<double> loss_trace;
};

/// Deterministic given `schedule.seed`. Examples whose pool has no
/// annotators train on the pool aggregate. Throws std::invalid_argument on
/// an empty training set or a subsample size larger than a pool.
TrainResult train(MicroModel model, const std::vector<TrainExample>& data,
                  const LabelRegime& regime, const TrainSchedule& schedule);

/// p <- p * (1 - lr * weight_decay) - lr * g for every parameter.
void sgd_step(MicroModel& model, const std::vector<DenseLayer>& gradient, double lr,
              double weight_decay);

/// (1 - beta) * hard + beta * uniform. `hard` must be one-hot.
SoftLabel smooth_labels(const SoftLabel& hard, double beta, const LabelSpace& space);
SoftLabel smooth_labels(const SoftLabel& hard, double beta);

}  // namespace softlabel
