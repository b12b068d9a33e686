#include "softlabel/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "softlabel/metrics.hpp"

namespace softlabel {

MicroModel::MicroModel(std::size_t input_dim, std::vector<std::size_t> hidden,
                       std::size_t classes)
    : input_dim_(input_dim), hidden_(std::move(hidden)), classes_(classes) {
  if (input_dim_ == 0 || classes_ < 2) throw std::invalid_argument("degenerate model shape");
  std::size_t fan_in = input_dim_;
  auto add = [&](std::size_t out) {
    layers_.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out),
                                             static_cast<Eigen::Index>(fan_in)),
                       Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))});
    fan_in = out;
  };
  for (std::size_t h : hidden_) {
    if (h == 0) throw std::invalid_argument("hidden layer of width zero");
    add(h);
  }
  add(classes_);
}

MicroModel MicroModel::initialized(std::size_t input_dim, std::vector<std::size_t> hidden,
                                   std::size_t classes, std::uint64_t seed) {
  MicroModel model(input_dim, std::move(hidden), classes);
  std::mt19937_64 rng(seed);
  for (auto& layer : model.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
  }
  return model;
}

std::size_t MicroModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool MicroModel::finite() const {
  for (const auto& l : layers_)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

bool MicroModel::operator==(const MicroModel& other) const {
  if (input_dim_ != other.input_dim_ || hidden_ != other.hidden_ || classes_ != other.classes_)
    return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weights != other.layers_[i].weights) return false;
    if (layers_[i].bias != other.layers_[i].bias) return false;
  }
  return true;
}

Eigen::VectorXd MicroModel::logits(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_)
    throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(input_dim_));
  Eigen::VectorXd a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::VectorXd z = layers_[i].weights * a + layers_[i].bias;
    a = (i + 1 < layers_.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Eigen::VectorXd MicroModel::forward(const Eigen::VectorXd& x) const { return softmax(logits(x)); }

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Gradients backward(const MicroModel& model, const Eigen::VectorXd& x,
                   std::span<const double> target) {
  if (target.size() != model.classes())
    throw std::invalid_argument("target has " + std::to_string(target.size()) +
                                " classes, model has " + std::to_string(model.classes()));
  const auto& layers = model.layers();
  if (static_cast<std::size_t>(x.size()) != model.input_dim())
    throw std::invalid_argument("input dimension mismatch");

  // Forward pass, keeping each layer's input and pre-activation.
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> pre;
  inputs.reserve(layers.size());
  pre.reserve(layers.size());
  Eigen::VectorXd a = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    inputs.push_back(a);
    pre.push_back(layers[i].weights * a + layers[i].bias);
    a = (i + 1 < layers.size()) ? Eigen::VectorXd(pre.back().cwiseMax(0.0)) : pre.back();
  }
  const Eigen::VectorXd probs = softmax(a);
  const Eigen::Map<const Eigen::VectorXd> t(target.data(), static_cast<Eigen::Index>(target.size()));

  Gradients g;
  g.loss = cross_entropy(std::span<const double>(probs.data(), target.size()), target);
  g.logits = probs * t.sum() - t;
  g.layers.resize(layers.size());

  Eigen::VectorXd delta = g.logits;
  for (std::size_t i = layers.size(); i-- > 0;) {
    g.layers[i].weights = delta * inputs[i].transpose();
    g.layers[i].bias = delta;
    Eigen::VectorXd upstream = layers[i].weights.transpose() * delta;
    if (i > 0) {
      const Eigen::VectorXd& z = pre[i - 1];
      for (Eigen::Index j = 0; j < upstream.size(); ++j)
        if (z[j] <= 0.0) upstream[j] = 0.0;
    }
    delta = std::move(upstream);
  }
  g.input = std::move(delta);
  return g;
}

double model_loss(const MicroModel& model, const Eigen::VectorXd& x,
                  std::span<const double> target) {
  const Eigen::VectorXd p = model.forward(x);
  return cross_entropy(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                       target);
}

Eigen::VectorXd fgsm_attack(const MicroModel& model, const Eigen::VectorXd& x,
                            const SoftLabel& eval_label, double epsilon,
                            const FeatureRange& range, FgsmTarget target) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("fgsm epsilon must be nonnegative");
  if (epsilon == 0.0) return x;
  ClassIndex k = eval_label.argmax();
  if (target == FgsmTarget::ModelPrediction) {
    Eigen::Index best = 0;
    model.logits(x).maxCoeff(&best);
    k = static_cast<ClassIndex>(best);
  }
  std::vector<double> one_hot(model.classes(), 0.0);
  one_hot.at(k) = 1.0;
  const Gradients g = backward(model, x, one_hot);
  Eigen::VectorXd out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double s = (g.input[i] > 0.0) - (g.input[i] < 0.0);
    out[i] = std::clamp(x[i] + epsilon * s, range.lo, range.hi);
  }
  return out;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const MicroModel& model) {
  nlohmann::json j;
  j["input_dim"] = model.input_dim();
  j["hidden"] = model.hidden();
  j["classes"] = model.classes();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    std::vector<double> bias(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weights", matrix_json(l.weights)}, {"bias", bias}});
  }
  return j;
}

MicroModel model_from_json(const nlohmann::json& j) {
  MicroModel model(j.at("input_dim").get<std::size_t>(),
                   j.at("hidden").get<std::vector<std::size_t>>(),
                   j.at("classes").get<std::size_t>());
  const auto& layers = j.at("layers");
  if (layers.size() != model.layers().size())
    throw std::invalid_argument("model file has the wrong number of layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = model.layers()[i];
    const auto& w = layers[i].at("weights");
    const auto& b = layers[i].at("bias");
    if (static_cast<Eigen::Index>(w.size()) != layer.weights.rows() ||
        static_cast<Eigen::Index>(b.size()) != layer.bias.size())
      throw std::invalid_argument("model file layer " + std::to_string(i) + " has the wrong shape");
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      const auto& row = w[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != layer.weights.cols())
        throw std::invalid_argument("model file row has the wrong width");
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      layer.bias[r] = b[static_cast<std::size_t>(r)].get<double>();
  }
  return model;
}

}  // namespace softlabel
