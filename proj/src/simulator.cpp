#include "softlabel/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "softlabel/metrics.hpp"
#include "softlabel/rng.hpp"

namespace softlabel {

void AnnotatorModel::validate() const {
  if (!(concentration > 0.0)) throw std::invalid_argument("concentration must be positive");
  if (quantization < 0 || (quantization > 0 && 100 % quantization != 0))
    throw std::invalid_argument("quantization step must divide 100");
  if (!(exclusion_threshold >= 0.0 && exclusion_threshold <= 1.0))
    throw std::invalid_argument("exclusion threshold must lie in [0,1]");
}

namespace {

std::vector<double> dirichlet_on(std::span<const std::size_t> support, double alpha,
                                 std::size_t K, std::mt19937_64& rng) {
  std::vector<double> q(K, 0.0);
  std::gamma_distribution<double> g(alpha, 1.0);
  double total = 0.0;
  for (std::size_t k : support) total += (q[k] = g(rng));
  for (double& v : q) v /= total;
  return q;
}

std::vector<double> draw_truth(const WorldSpec& spec, bool low, std::mt19937_64& rng) {
  const std::size_t K = spec.classes;
  std::vector<std::size_t> classes(K);
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  std::shuffle(classes.begin(), classes.end(), rng);
  if (low) {
    // A dominant class with a sliver of doubt on a runner-up.
    std::uniform_real_distribution<double> sliver(0.0, 0.015);
    std::vector<double> q(K, 0.0);
    const double eps = sliver(rng);
    q[classes[0]] = 1.0 - eps;
    q[classes[1]] = eps;
    return q;
  }
  std::bernoulli_distribution three(spec.three_class_fraction);
  for (;;) {
    const std::size_t s = (three(rng) && K >= 3) ? 3 : 2;
    auto q = dirichlet_on(std::span(classes).first(s), 1.0, K, rng);
    if (entropy(q) >= spec.high_entropy_min) return q;
  }
}

}  // namespace

World make_world(const WorldSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("world needs at least two classes");
  if (!(spec.low_entropy_fraction >= 0.0 && spec.low_entropy_fraction <= 1.0))
    throw std::invalid_argument("low-entropy fraction must lie in [0,1]");
  World world{spec, {}, {}};
  world.truths.reserve(spec.images);
  const auto low_count =
      static_cast<std::size_t>(std::llround(spec.low_entropy_fraction * spec.images));
  std::vector<bool> low(spec.images, false);
  std::fill(low.begin(), low.begin() + static_cast<std::ptrdiff_t>(low_count), true);
  std::mt19937_64 layout(derive_seed(spec.seed, {0}));
  std::shuffle(low.begin(), low.end(), layout);
  for (std::size_t n = 0; n < spec.images; ++n) {
    std::mt19937_64 rng(derive_seed(spec.seed, {1, n}));
    world.truths.push_back(draw_truth(spec, low[n], rng));
  }
  world.low_entropy = std::move(low);
  return world;
}

std::vector<double> sample_percept(const World& world, std::size_t image, std::size_t annotator,
                                   const AnnotatorModel& model, std::uint64_t seed) {
  const auto& q = world.truths.at(image);
  if (std::isinf(model.concentration)) return q;
  std::mt19937_64 rng(derive_seed(seed, {2, image, annotator}));
  std::vector<double> p(q.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] <= 0.0) continue;
    std::gamma_distribution<double> g(model.concentration * q[k], 1.0);
    total += (p[k] = g(rng));
  }
  if (!(total > 0.0)) return q;
  for (double& v : p) v /= total;
  return p;
}

ClassIndex hard_report(std::span<const double> percept) {
  return static_cast<ClassIndex>(std::max_element(percept.begin(), percept.end()) -
                                 percept.begin());
}

namespace {

double to_percent(double p, int step) {
  const double percent = 100.0 * p;
  if (step <= 0) return percent;
  return std::round(percent / step) * step;
}

}  // namespace

AnnotationRecord soft_report(const AnnotatorModel& model, std::span<const double> percept,
                             std::string image_id, std::string annotator_id) {
  std::vector<ClassIndex> order(percept.size());
  std::iota(order.begin(), order.end(), ClassIndex{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassIndex a, ClassIndex b) { return percept[a] > percept[b]; });
  AnnotationRecord r;
  r.image_id = std::move(image_id);
  r.annotator_id = std::move(annotator_id);
  r.top1 = order[0];
  r.p1 = to_percent(percept[order[0]], model.quantization);
  const double second = percept[order[1]];
  if (second > 0.0 && second >= model.exclusion_threshold) {
    r.top2 = order[1];
    r.p2 = to_percent(second, model.quantization);
  }
  for (ClassIndex k = 0; k < percept.size(); ++k) {
    if (k == r.top1 || (r.top2 && k == *r.top2)) continue;
    if (percept[k] < model.exclusion_threshold) r.definitely_not.insert(k);
  }
  return r;
}

Report report(const AnnotatorModel& model, std::span<const double> percept, std::string image_id,
              std::string annotator_id) {
  if (model.behavior == ReporterBehavior::HardMode) return hard_report(percept);
  return soft_report(model, percept, std::move(image_id), std::move(annotator_id));
}

std::string to_string(Aggregation agg) { return agg == Aggregation::Multi ? "multi" : "ours"; }

Aggregation parse_aggregation(const std::string& token) {
  if (token == "multi") return Aggregation::Multi;
  if (token == "ours") return Aggregation::Ours;
  throw std::invalid_argument("unknown aggregation '" + token + "'");
}

std::vector<CurvePoint> efficiency_curve(const World& world, const AnnotatorPool& pool,
                                         std::span<const std::size_t> M_values, Aggregation agg,
                                         const RedistributionPolicy& policy, std::uint64_t seed) {
  pool.model.validate();
  if (M_values.empty()) return {};
  for (std::size_t M : M_values) {
    if (M == 0) throw std::invalid_argument("M must be positive");
    if (M > pool.size)
      throw std::invalid_argument("M = " + std::to_string(M) + " exceeds the pool of " +
                                  std::to_string(pool.size) + " annotators");
  }
  if (world.size() == 0) throw std::invalid_argument("world has no images");
  const std::size_t max_M = *std::max_element(M_values.begin(), M_values.end());
  const std::size_t K = world.spec.classes;
  const LabelSpace space = synthetic_space(K);

  std::vector<double> distance_sum(M_values.size(), 0.0);
  for (std::size_t n = 0; n < world.size(); ++n) {
    const auto& q = world.truths[n];
    // Running sums over the first m annotators, m = 1..max_M.
    std::vector<std::vector<double>> prefix;
    prefix.reserve(max_M);
    std::vector<double> running(K, 0.0);
    for (std::size_t j = 0; j < max_M; ++j) {
      const auto percept = sample_percept(world, n, j, pool.model, seed);
      if (agg == Aggregation::Multi) {
        running[hard_report(percept)] += 1.0;
      } else {
        const auto rec = soft_report(pool.model, percept);
        const auto label = construct_label(rec, space, LabelVariety::T2Clamp, policy);
        for (std::size_t k = 0; k < K; ++k) running[k] += label[k];
      }
      prefix.push_back(running);
    }
    for (std::size_t i = 0; i < M_values.size(); ++i) {
      const std::size_t M = M_values[i];
      std::vector<double> mean = prefix[M - 1];
      for (double& v : mean) v /= static_cast<double>(M);
      distance_sum[i] += label_distance(mean, q);
    }
  }
  std::vector<CurvePoint> curve;
  for (std::size_t i = 0; i < M_values.size(); ++i)
    curve.push_back({M_values[i], distance_sum[i] / static_cast<double>(world.size())});
  return curve;
}

SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.world_seeds == 0) throw std::invalid_argument("sweep needs at least one world");
  SweepResult result;
  for (Aggregation agg : spec.aggregations) result.per_seed[agg];
  for (std::size_t w = 0; w < spec.world_seeds; ++w) {
    WorldSpec ws = spec.world;
    ws.seed = derive_seed(spec.seed, {w, 0});
    const World world = make_world(ws);
    const std::uint64_t percept_seed = derive_seed(spec.seed, {w, 1});
    for (Aggregation agg : spec.aggregations) {
      const auto curve =
          efficiency_curve(world, spec.pool, spec.M_values, agg, spec.policy, percept_seed);
      std::vector<double> distances;
      for (const auto& p : curve) distances.push_back(p.mean_distance);
      result.per_seed[agg].push_back(std::move(distances));
    }
  }
  for (Aggregation agg : spec.aggregations) {
    const auto& table = result.per_seed[agg];
    for (std::size_t i = 0; i < spec.M_values.size(); ++i) {
      std::vector<double> column;
      for (const auto& row : table) column.push_back(row[i]);
      result.rows.push_back({spec.M_values[i], agg, mean_ci(column)});
    }
  }
  return result;
}

std::string to_csv(const SweepResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "M,aggregation,mean_distance,ci_low,ci_high\n";
  for (const auto& row : result.rows) {
    out << row.M << ',' << to_string(row.aggregation) << ',' << row.distance.mean << ',';
    if (row.distance.low) out << *row.distance.low;
    out << ',';
    if (row.distance.high) out << *row.distance.high;
    out << '\n';
  }
  return out.str();
}

LabelSpace synthetic_space(std::size_t classes) {
  if (classes == 10) return LabelSpace::cifar10();
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("class_" + std::to_string(k));
  return LabelSpace(std::move(names));
}

std::string synthetic_image_id(std::size_t image) {
  std::string digits = std::to_string(image);
  return "img_" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

std::vector<RawSubmission> simulate_sessions(const World& world, const LabelSpace& space,
                                             const AnnotatorModel& model,
                                             std::size_t annotators_per_image,
                                             std::size_t batch_size, std::uint64_t seed) {
  model.validate();
  if (space.size() != world.spec.classes)
    throw std::invalid_argument("label space does not match the world");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> images(world.size());
  std::iota(images.begin(), images.end(), std::size_t{0});
  std::mt19937_64 deal(derive_seed(seed, {10}));
  std::shuffle(images.begin(), images.end(), deal);

  std::vector<RawSubmission> sessions;
  std::size_t annotator = 0;
  for (std::size_t start = 0, b = 0; start < images.size(); start += batch_size, ++b) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    const std::string batch_id = "batch_" + std::to_string(b);
    for (std::size_t a = 0; a < annotators_per_image; ++a, ++annotator) {
      std::mt19937_64 rng(derive_seed(seed, {11, annotator}));
      std::vector<std::size_t> order(images.begin() + static_cast<std::ptrdiff_t>(start),
                                     images.begin() + static_cast<std::ptrdiff_t>(end));
      std::shuffle(order.begin(), order.end(), rng);
      std::lognormal_distribution<double> seconds(std::log(32.0), 0.4);

      RawSubmission s;
      s.annotator_id = "sim_" + std::to_string(annotator);
      s.batch_id = batch_id;
      for (std::size_t n : order) {
        const auto percept = sample_percept(world, n, annotator, model, seed);
        auto rec = soft_report(model, percept, synthetic_image_id(n), s.annotator_id);
        rec.elapsed_seconds = std::round(seconds(rng) * 10.0) / 10.0;
        s.responses.push_back(std::move(rec));
      }
      const std::size_t repeats = std::min<std::size_t>(2, s.responses.size());
      std::vector<std::size_t> slots(s.responses.size());
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      std::shuffle(slots.begin(), slots.end(), rng);
      std::sort(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(repeats));
      for (std::size_t i = 0; i < repeats; ++i) {
        AnnotationRecord again = s.responses[slots[i]];
        again.is_repeat = true;
        s.responses.push_back(std::move(again));
      }
      sessions.push_back(std::move(s));
    }
  }
  return sessions;
}

FeatureMatrix synthetic_features(const World& world, const FeatureSpec& spec) {
  if (spec.dim == 0) throw std::invalid_argument("feature dimension must be positive");
  const std::size_t K = world.spec.classes;
  const auto D = static_cast<Eigen::Index>(spec.dim);
  std::mt19937_64 proto_rng(derive_seed(spec.seed, {20}));
  std::uniform_real_distribution<double> u(0.2, 0.8);
  Eigen::MatrixXd prototypes(static_cast<Eigen::Index>(K), D);
  for (Eigen::Index i = 0; i < prototypes.size(); ++i) prototypes.data()[i] = u(proto_rng);

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(world.size()), D);
  std::vector<std::string> ids;
  for (std::size_t n = 0; n < world.size(); ++n) {
    std::mt19937_64 rng(derive_seed(spec.seed, {21, n}));
    std::normal_distribution<double> noise(0.0, spec.noise);
    const Eigen::Map<const Eigen::VectorXd> q(world.truths[n].data(), static_cast<Eigen::Index>(K));
    Eigen::VectorXd x = prototypes.transpose() * q;
    for (Eigen::Index d = 0; d < D; ++d) x[d] = std::clamp(x[d] + noise(rng), 0.0, 1.0);
    rows.row(static_cast<Eigen::Index>(n)) = x.transpose();
    ids.push_back(synthetic_image_id(n));
  }
  return FeatureMatrix(std::move(ids), std::move(rows), FeatureRange{0.0, 1.0});
}

}  // namespace softlabel
