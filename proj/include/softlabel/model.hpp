#pragma once

// Fully connected ReLU classifier with a softmax head and hand-written
// backpropagation, including the gradient with respect to the input.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "softlabel/labelcore.hpp"

namespace softlabel {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

class MicroModel {
public:
  /// All parameters zero. `hidden` may be empty, giving a linear softmax
  /// classifier.
  MicroModel(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static MicroModel initialized(std::size_t input_dim, std::vector<std::size_t> hidden,
                                std::size_t classes, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t classes() const noexcept { return classes_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const noexcept;
  bool finite() const;

  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
  /// Softmax probabilities; throws std::invalid_argument on a dimension
  /// mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  bool operator==(const MicroModel& other) const;

private:
  std::size_t input_dim_;
  std::vector<std::size_t> hidden_;
  std::size_t classes_;
  std::vector<DenseLayer> layers_;
};

inline Eigen::VectorXd forward(const MicroModel& model, const Eigen::VectorXd& x) {
  return model.forward(x);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct Gradients {
  std::vector<DenseLayer> layers;  // same shapes as the model
  Eigen::VectorXd input;
  Eigen::VectorXd logits;          // softmax - target
  double loss = 0.0;
};

/// Exact gradients of cross-entropy(softmax(logits(x)), target).
Gradients backward(const MicroModel& model, const Eigen::VectorXd& x,
                   std::span<const double> target);

/// Cross-entropy of the model prediction at x against `target`.
double model_loss(const MicroModel& model, const Eigen::VectorXd& x,
                  std::span<const double> target);

struct FeatureRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// 4/255 of the feature range: an l-infinity budget of 4 on 8-bit pixels.
inline double default_fgsm_epsilon(const FeatureRange& range) {
  return 4.0 / 255.0 * (range.hi - range.lo);
}

enum class FgsmTarget { EvalArgmax, ModelPrediction };

/// clip(x + epsilon * sign(grad_x CE(f(x), one-hot target)), lo, hi).
Eigen::VectorXd fgsm_attack(const MicroModel& model, const Eigen::VectorXd& x,
                            const SoftLabel& eval_label, double epsilon,
                            const FeatureRange& range = {},
                            FgsmTarget target = FgsmTarget::EvalArgmax);

nlohmann::json to_json(const MicroModel& model);
MicroModel model_from_json(const nlohmann::json& j);

}  // namespace softlabel
