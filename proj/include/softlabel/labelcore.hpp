#pragma once

// Label algebra: construction of per-annotator soft labels from elicited
// top-1/top-2 judgments, mass redistribution, and naive aggregation.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace softlabel {

using ClassIndex = std::size_t;

/// Thrown when an argument violates an operation's precondition.
class LabelError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// The K-way label space: class count and class names.
class LabelSpace {
public:
  explicit LabelSpace(std::vector<std::string> names);

  /// The ten CIFAR-10 classes in their canonical index order.
  static LabelSpace cifar10();

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(ClassIndex k) const;
  std::optional<ClassIndex> find(std::string_view name) const;
  /// Index of `name`; throws LabelError when the name is unknown.
  ClassIndex index_of(std::string_view name) const;
  void check(ClassIndex k) const;

  bool operator==(const LabelSpace& other) const { return names_ == other.names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ClassIndex> lookup_;
};

enum class LabelVariety {
  T1Unif,
  T1Clamp,
  T2Unif,
  T2Clamp,
  SelectTop2,
  Hard,
  Uniform,
  Random,
  MultiAgg,
  OursAgg,
  Smoothed,
};

/// Kebab-case token, e.g. "t2-clamp".
std::string to_string(LabelVariety v);
LabelVariety parse_variety(std::string_view token);
/// True for the five varieties built from an annotation record.
bool is_elicited(LabelVariety v) noexcept;

/// One annotator's raw elicitation for one image. Probabilities are in
/// percent. Range and contradiction violations are representable; QC
/// decides what to do with them.
struct AnnotationRecord {
  std::string image_id;
  std::string annotator_id;
  ClassIndex top1 = 0;
  std::optional<double> p1;
  std::optional<ClassIndex> top2;
  std::optional<double> p2;
  std::set<ClassIndex> definitely_not;
  std::optional<double> elapsed_seconds;
  bool is_repeat = false;

  bool operator==(const AnnotationRecord&) const = default;
};

/// A point on the K-simplex tagged with how it was built.
class SoftLabel {
public:
  /// Validates that every entry is in [0,1] and the entries sum to 1
  /// within 1e-9.
  SoftLabel(std::vector<double> probs, LabelVariety variety, std::string source);

  /// Divides `mass` by its total, then validates.
  static SoftLabel normalized(std::vector<double> mass, LabelVariety variety,
                              std::string source);

  std::span<const double> probs() const noexcept { return probs_; }
  const std::vector<double>& vector() const noexcept { return probs_; }
  double operator[](ClassIndex k) const { return probs_.at(k); }
  std::size_t size() const noexcept { return probs_.size(); }
  LabelVariety variety() const noexcept { return variety_; }
  const std::string& source() const noexcept { return source_; }
  /// Lowest index among the maximal entries.
  ClassIndex argmax() const noexcept;

  bool operator==(const SoftLabel&) const = default;

private:
  std::vector<double> probs_;
  LabelVariety variety_;
  std::string source_;
};

enum class RedistributionMode { Uniform, Clamp };

/// Uniform for *-unif varieties, Clamp for *-clamp; nullopt otherwise.
std::optional<RedistributionMode> redistribution_mode(LabelVariety v) noexcept;

/// `gamma` is the total reserve (fraction of 1) spread over eligible
/// classes when the stated mass already reaches 100. Clamp mode only.
struct RedistributionPolicy {
  double gamma = 0.1;
};

/// Per-image collection of per-annotator labels and their mean.
struct LabelPool {
  std::string image_id;
  std::vector<SoftLabel> per_annotator;
  SoftLabel aggregate;

  /// Computes the aggregate; throws LabelError on an empty member list.
  static LabelPool from_members(std::string image_id, std::vector<SoftLabel> members);
  std::size_t size() const noexcept { return per_annotator.size(); }
};

inline constexpr double kSimplexTolerance = 1e-9;

/// Builds a per-annotator label of the given elicited variety. Throws
/// LabelError when the record carries a value the variety needs but that
/// is missing or out of [0,100], or when a clamp variety sees its assigned
/// class marked definitely-not.
SoftLabel construct_label(const AnnotationRecord& record, const LabelSpace& space,
                          LabelVariety variety, const RedistributionPolicy& policy);

/// Entrywise arithmetic mean, tagged OursAgg with source "aggregate".
SoftLabel aggregate_mean(std::span<const SoftLabel> labels);

/// Empirical frequency of hard votes.
SoftLabel multi_aggregate(std::span<const std::int64_t> counts);

SoftLabel hard_label(ClassIndex k, const LabelSpace& space);

enum class BaselineKind { Uniform, Random };

/// Uniform, or a seeded draw from the flat Dirichlet on the simplex.
SoftLabel baseline_label(BaselineKind kind, const LabelSpace& space, std::uint64_t seed);
SoftLabel baseline_label(BaselineKind kind, std::size_t classes, std::uint64_t seed);

/// softmax(probs / temperature).
SoftLabel softmax_smooth(const SoftLabel& label, double temperature);

}  // namespace softlabel
