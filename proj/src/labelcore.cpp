#include "softlabel/labelcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace softlabel {

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw LabelError("label space needs at least two classes");
  for (ClassIndex k = 0; k < names_.size(); ++k) {
    if (!lookup_.emplace(names_[k], k).second)
      throw LabelError("duplicate class name '" + names_[k] + "'");
  }
}

LabelSpace LabelSpace::cifar10() {
  return LabelSpace({"airplane", "automobile", "bird", "cat", "deer", "dog", "frog",
                     "horse", "ship", "truck"});
}

const std::string& LabelSpace::name(ClassIndex k) const {
  check(k);
  return names_[k];
}

std::optional<ClassIndex> LabelSpace::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

ClassIndex LabelSpace::index_of(std::string_view name) const {
  if (auto k = find(name)) return *k;
  throw LabelError("unknown class name '" + std::string(name) + "'");
}

void LabelSpace::check(ClassIndex k) const {
  if (k >= names_.size())
    throw LabelError("class index " + std::to_string(k) + " outside label space of size " +
                     std::to_string(names_.size()));
}

namespace {

struct VarietyName {
  LabelVariety variety;
  std::string_view token;
};

constexpr VarietyName kVarietyNames[] = {
    {LabelVariety::T1Unif, "t1-unif"},     {LabelVariety::T1Clamp, "t1-clamp"},
    {LabelVariety::T2Unif, "t2-unif"},     {LabelVariety::T2Clamp, "t2-clamp"},
    {LabelVariety::SelectTop2, "select-top2"}, {LabelVariety::Hard, "hard"},
    {LabelVariety::Uniform, "uniform"},    {LabelVariety::Random, "random"},
    {LabelVariety::MultiAgg, "multi-agg"}, {LabelVariety::OursAgg, "ours-agg"},
    {LabelVariety::Smoothed, "smoothed"},
};

}  // namespace

std::string to_string(LabelVariety v) {
  for (const auto& entry : kVarietyNames)
    if (entry.variety == v) return std::string(entry.token);
  return "unknown";
}

LabelVariety parse_variety(std::string_view token) {
  for (const auto& entry : kVarietyNames)
    if (entry.token == token) return entry.variety;
  throw LabelError("unknown label variety '" + std::string(token) + "'");
}

bool is_elicited(LabelVariety v) noexcept {
  switch (v) {
    case LabelVariety::T1Unif:
    case LabelVariety::T1Clamp:
    case LabelVariety::T2Unif:
    case LabelVariety::T2Clamp:
    case LabelVariety::SelectTop2:
      return true;
    default:
      return false;
  }
}

std::optional<RedistributionMode> redistribution_mode(LabelVariety v) noexcept {
  switch (v) {
    case LabelVariety::T1Unif:
    case LabelVariety::T2Unif:
      return RedistributionMode::Uniform;
    case LabelVariety::T1Clamp:
    case LabelVariety::T2Clamp:
      return RedistributionMode::Clamp;
    default:
      return std::nullopt;
  }
}

SoftLabel::SoftLabel(std::vector<double> probs, LabelVariety variety, std::string source)
    : probs_(std::move(probs)), variety_(variety), source_(std::move(source)) {
  if (probs_.empty()) throw LabelError("soft label has no entries");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw LabelError("soft label entry outside [0,1]");
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance)
    throw LabelError("soft label entries sum to " + std::to_string(total) + ", not 1");
}

SoftLabel SoftLabel::normalized(std::vector<double> mass, LabelVariety variety,
                                std::string source) {
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw LabelError("negative or non-finite mass");
    total += m;
  }
  if (!(total > 0.0)) throw LabelError("cannot normalize zero mass");
  for (double& m : mass) m /= total;
  return SoftLabel(std::move(mass), variety, std::move(source));
}

ClassIndex SoftLabel::argmax() const noexcept {
  return static_cast<ClassIndex>(std::max_element(probs_.begin(), probs_.end()) -
                                 probs_.begin());
}

LabelPool LabelPool::from_members(std::string image_id, std::vector<SoftLabel> members) {
  SoftLabel mean = aggregate_mean(members);
  return LabelPool{std::move(image_id), std::move(members), std::move(mean)};
}

namespace {

void require_percent(const std::optional<double>& p, const char* field) {
  if (!p) throw LabelError(std::string(field) + " is required for this variety");
  if (!(*p >= 0.0 && *p <= 100.0))
    throw LabelError(std::string(field) + " = " + std::to_string(*p) + " outside [0,100]");
}

}  // namespace

SoftLabel construct_label(const AnnotationRecord& record, const LabelSpace& space,
                          LabelVariety variety, const RedistributionPolicy& policy) {
  if (!is_elicited(variety))
    throw LabelError("variety '" + to_string(variety) + "' is not built from a record");
  const std::size_t K = space.size();
  space.check(record.top1);
  if (record.top2) space.check(*record.top2);
  if (record.top2 && *record.top2 == record.top1)
    throw LabelError("top1 and top2 name the same class");

  std::vector<double> mass(K, 0.0);

  if (variety == LabelVariety::SelectTop2) {
    mass[record.top1] = 1.0;
    if (record.top2) mass[*record.top2] = 1.0;
    return SoftLabel::normalized(std::move(mass), variety, record.annotator_id);
  }

  const bool two_slots = variety == LabelVariety::T2Unif || variety == LabelVariety::T2Clamp;
  // top2 without p2 carries no probability, so T2 falls back to T1.
  const bool use_top2 = two_slots && record.top2 && record.p2;
  const auto mode = *redistribution_mode(variety);

  require_percent(record.p1, "p1");
  if (use_top2) require_percent(record.p2, "p2");

  std::vector<bool> assigned(K, false);
  mass[record.top1] = *record.p1;
  assigned[record.top1] = true;
  double stated = *record.p1;
  if (use_top2) {
    mass[*record.top2] = *record.p2;
    assigned[*record.top2] = true;
    stated += *record.p2;
  }

  if (mode == RedistributionMode::Clamp) {
    for (ClassIndex k = 0; k < K; ++k)
      if (assigned[k] && record.definitely_not.contains(k))
        throw LabelError("class '" + space.name(k) + "' is both stated and definitely-not");
  }

  std::vector<ClassIndex> eligible;
  for (ClassIndex k = 0; k < K; ++k) {
    if (assigned[k]) continue;
    if (mode == RedistributionMode::Clamp && record.definitely_not.contains(k)) continue;
    eligible.push_back(k);
  }

  const double leftover = std::max(0.0, 100.0 - stated);
  double spread = 0.0;
  if (!eligible.empty()) {
    if (leftover > 0.0)
      spread = leftover;
    else if (mode == RedistributionMode::Clamp)
      spread = policy.gamma * 100.0;
  }
  if (spread > 0.0) {
    const double share = spread / static_cast<double>(eligible.size());
    for (ClassIndex k : eligible) mass[k] += share;
  }

  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (total <= 0.0) {
    // Every stated probability was zero and nothing was eligible.
    for (ClassIndex k = 0; k < K; ++k) mass[k] = assigned[k] ? 1.0 : 0.0;
  }
  return SoftLabel::normalized(std::move(mass), variety, record.annotator_id);
}

SoftLabel aggregate_mean(std::span<const SoftLabel> labels) {
  if (labels.empty()) throw LabelError("cannot aggregate an empty label list");
  const std::size_t K = labels.front().size();
  std::vector<double> sum(K, 0.0);
  for (const auto& label : labels) {
    if (label.size() != K) throw LabelError("labels disagree on class count");
    for (ClassIndex k = 0; k < K; ++k) sum[k] += label[k];
  }
  // Sum first, divide once: one-hot inputs then reproduce count/M exactly.
  const double M = static_cast<double>(labels.size());
  for (double& s : sum) s /= M;
  return SoftLabel(std::move(sum), LabelVariety::OursAgg, "aggregate");
}

SoftLabel multi_aggregate(std::span<const std::int64_t> counts) {
  if (counts.size() < 2) throw LabelError("count vector needs at least two classes");
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw LabelError("negative vote count");
    total += c;
  }
  if (total == 0) throw LabelError("all vote counts are zero");
  std::vector<double> probs(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    probs[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return SoftLabel(std::move(probs), LabelVariety::MultiAgg, "aggregate");
}

SoftLabel hard_label(ClassIndex k, const LabelSpace& space) {
  space.check(k);
  std::vector<double> probs(space.size(), 0.0);
  probs[k] = 1.0;
  return SoftLabel(std::move(probs), LabelVariety::Hard, "hard");
}

SoftLabel baseline_label(BaselineKind kind, const LabelSpace& space, std::uint64_t seed) {
  return baseline_label(kind, space.size(), seed);
}

SoftLabel baseline_label(BaselineKind kind, std::size_t K, std::uint64_t seed) {
  if (K < 2) throw LabelError("baseline label needs at least two classes");
  if (kind == BaselineKind::Uniform) {
    return SoftLabel(std::vector<double>(K, 1.0 / static_cast<double>(K)),
                     LabelVariety::Uniform, "baseline");
  }
  // Normalized unit exponentials are a flat Dirichlet draw.
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> unit(1.0);
  std::vector<double> draw(K);
  for (double& d : draw) d = unit(rng);
  return SoftLabel::normalized(std::move(draw), LabelVariety::Random, "baseline");
}

SoftLabel softmax_smooth(const SoftLabel& label, double temperature) {
  if (!(temperature > 0.0)) throw LabelError("temperature must be positive");
  std::vector<double> out(label.size());
  double peak = 0.0;
  for (double p : label.probs()) peak = std::max(peak, p / temperature);
  for (ClassIndex k = 0; k < out.size(); ++k) out[k] = std::exp(label[k] / temperature - peak);
  return SoftLabel::normalized(std::move(out), LabelVariety::Smoothed, label.source());
}

}  // namespace softlabel
