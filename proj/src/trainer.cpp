#include "softlabel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "softlabel/rng.hpp"

namespace softlabel {

double TrainSchedule::learning_rate(int epoch) const {
  double lr = lr0;
  for (int drop : drop_epochs)
    if (epoch >= drop) lr *= lr_drop_factor;
  return lr;
}

std::string to_string(TargetMode mode) {
  return mode == TargetMode::Aggregated ? "agg" : "deagg";
}

TargetMode parse_target_mode(const std::string& token) {
  if (token == "agg" || token == "aggregated") return TargetMode::Aggregated;
  if (token == "deagg" || token == "deaggregated") return TargetMode::Deaggregated;
  throw std::invalid_argument("unknown training mode '" + token + "'");
}

std::string to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::None:
      return "none";
    case Baseline::Hard:
      return "hard";
    case Baseline::Uniform:
      return "uniform";
    case Baseline::Random:
      return "random";
    case Baseline::Smoothed:
      return "smoothed";
  }
  return "none";
}

Baseline parse_baseline(const std::string& token) {
  for (Baseline b : {Baseline::None, Baseline::Hard, Baseline::Uniform, Baseline::Random,
                     Baseline::Smoothed})
    if (to_string(b) == token) return b;
  throw std::invalid_argument("unknown baseline '" + token + "'");
}

SoftLabel smooth_labels(const SoftLabel& hard, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw LabelError("smoothing factor must lie in [0,1]");
  const std::size_t K = hard.size();
  const auto ones = std::count(hard.probs().begin(), hard.probs().end(), 1.0);
  const auto zeros = std::count(hard.probs().begin(), hard.probs().end(), 0.0);
  if (ones != 1 || static_cast<std::size_t>(zeros) != K - 1)
    throw LabelError("label smoothing expects a one-hot label");
  const double floor = beta / static_cast<double>(K);
  std::vector<double> out(K, floor);
  out[hard.argmax()] = (1.0 - beta) + floor;
  return SoftLabel(std::move(out), LabelVariety::Smoothed, hard.source());
}

SoftLabel smooth_labels(const SoftLabel& hard, double beta, const LabelSpace& space) {
  if (hard.size() != space.size()) throw LabelError("label does not match the label space");
  return smooth_labels(hard, beta);
}

void sgd_step(MicroModel& model, const std::vector<DenseLayer>& gradient, double lr,
              double weight_decay) {
  const double shrink = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    auto& layer = model.layers()[i];
    layer.weights = layer.weights * shrink - lr * gradient[i].weights;
    layer.bias = layer.bias * shrink - lr * gradient[i].bias;
  }
}

namespace {

SoftLabel one_hot(ClassIndex k, std::size_t K) {
  std::vector<double> p(K, 0.0);
  p.at(k) = 1.0;
  return SoftLabel(std::move(p), LabelVariety::Hard, "hard");
}

// Where a training example draws its target from, fixed for the run.
struct TargetSource {
  std::vector<SoftLabel> candidates;  // sampled uniformly per batch when > 1
};

std::vector<TargetSource> prepare_targets(const std::vector<TrainExample>& data,
                                          const LabelRegime& regime, std::uint64_t seed) {
  std::mt19937_64 subsample_rng(derive_seed(seed, {1}));
  std::vector<TargetSource> sources;
  sources.reserve(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto& ex = data[n];
    const std::size_t K = ex.pool.aggregate.size();
    const ClassIndex hard = ex.hard ? *ex.hard : ex.pool.aggregate.argmax();
    TargetSource src;
    switch (regime.baseline) {
      case Baseline::Hard:
        src.candidates.push_back(one_hot(hard, K));
        break;
      case Baseline::Smoothed:
        src.candidates.push_back(smooth_labels(one_hot(hard, K), regime.beta));
        break;
      case Baseline::Uniform:
        src.candidates.push_back(baseline_label(BaselineKind::Uniform, K, 0));
        break;
      case Baseline::Random:
        src.candidates.push_back(
            baseline_label(BaselineKind::Random, K, derive_seed(seed, {1000, n})));
        break;
      case Baseline::None: {
        std::vector<SoftLabel> members = ex.pool.per_annotator;
        // Images without annotators (hard fill) keep their fixed target.
        if (members.empty()) {
          src.candidates.push_back(ex.pool.aggregate);
          break;
        }
        if (regime.m_subsample) {
          const std::size_t M = *regime.m_subsample;
          if (M == 0 || M > members.size())
            throw std::invalid_argument("subsample of " + std::to_string(M) +
                                        " annotators exceeds pool of " +
                                        std::to_string(members.size()) + " for image '" +
                                        ex.image_id + "'");
          // Partial Fisher-Yates: the first M slots become the subsample.
          for (std::size_t i = 0; i < M; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
            std::swap(members[i], members[pick(subsample_rng)]);
          }
          members.erase(members.begin() + static_cast<std::ptrdiff_t>(M), members.end());
        }
        if (regime.mode == TargetMode::Aggregated)
          src.candidates.push_back(aggregate_mean(members));
        else
          src.candidates = std::move(members);
        break;
      }
    }
    sources.push_back(std::move(src));
  }
  return sources;
}

}  // namespace

TrainResult train(MicroModel model, const std::vector<TrainExample>& data,
                  const LabelRegime& regime, const TrainSchedule& schedule) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (schedule.epochs < 0) throw std::invalid_argument("negative epoch count");
  if (!(schedule.lr0 > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (schedule.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  for (const auto& ex : data) {
    if (static_cast<std::size_t>(ex.features.size()) != model.input_dim())
      throw std::invalid_argument("image '" + ex.image_id + "' has the wrong feature dimension");
    if (ex.pool.aggregate.size() != model.classes())
      throw std::invalid_argument("image '" + ex.image_id + "' has the wrong class count");
  }

  const auto sources = prepare_targets(data, regime, schedule.seed);
  std::mt19937_64 rng(derive_seed(schedule.seed, {2}));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{std::move(model), {}};
  MicroModel& net = result.model;

  std::vector<DenseLayer> grad(net.layers().size());
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = schedule.learning_rate(epoch);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i].weights.setZero(net.layers()[i].weights.rows(), net.layers()[i].weights.cols());
        grad[i].bias.setZero(net.layers()[i].bias.size());
      }
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t n = order[b];
        const auto& candidates = sources[n].candidates;
        std::size_t pick = 0;
        if (candidates.size() > 1) {
          std::uniform_int_distribution<std::size_t> u(0, candidates.size() - 1);
          pick = u(rng);
        }
        const Gradients g = backward(net, data[n].features, candidates[pick].probs());
        for (std::size_t i = 0; i < grad.size(); ++i) {
          grad[i].weights += g.layers[i].weights;
          grad[i].bias += g.layers[i].bias;
        }
        batch_loss += g.loss;
      }
      const double count = static_cast<double>(end - start);
      for (auto& g : grad) {
        g.weights /= count;
        g.bias /= count;
      }
      sgd_step(net, grad, lr, schedule.weight_decay);
      epoch_loss += batch_loss / count;
      ++batches;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

}  // namespace softlabel
