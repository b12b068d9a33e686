#include "softlabel/ingest.hpp"

#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace softlabel {

std::string to_string(QcRule rule) {
  switch (rule) {
    case QcRule::Range:
      return "RANGE";
    case QcRule::Contradiction:
      return "CONTRADICTION";
    case QcRule::MissingP1:
      return "MISSING_P1";
  }
  return "UNKNOWN";
}

namespace {

bool out_of_range(const std::optional<double>& p) {
  return p && !(*p >= 0.0 && *p <= 100.0);
}

}  // namespace

std::vector<QcRule> record_violations(const AnnotationRecord& r) {
  std::vector<QcRule> found;
  if (out_of_range(r.p1) || out_of_range(r.p2)) found.push_back(QcRule::Range);
  if (r.definitely_not.contains(r.top1) || (r.top2 && r.definitely_not.contains(*r.top2)))
    found.push_back(QcRule::Contradiction);
  if (!r.p1) found.push_back(QcRule::MissingP1);
  return found;
}

int QcVerdict::total_errors() const {
  int total = 0;
  for (const auto& [rule, n] : error_counts) total += n;
  return total;
}

namespace {

QcVerdict judge(const RawSubmission& s, const ReferenceLabels& refs, double threshold) {
  QcVerdict v;
  v.annotator_id = s.annotator_id;
  v.batch_id = s.batch_id;
  for (const auto& r : s.responses)
    for (QcRule rule : record_violations(r)) ++v.error_counts[rule];

  std::unordered_set<std::string> seen;
  int judged = 0;
  int correct = 0;
  for (const auto& r : s.responses) {
    if (!seen.insert(r.image_id).second) continue;
    auto ref = refs.find(r.image_id);
    if (ref == refs.end()) {
      ++v.missing_references;
      continue;
    }
    ++judged;
    if (r.top1 == ref->second.hard) ++correct;
  }
  if (judged > 0) v.accuracy = static_cast<double>(correct) / judged;

  for (const auto& [rule, n] : v.error_counts) {
    if (n > 2) {
      v.kept = false;
      v.reasons.push_back(to_string(rule) + "x" + std::to_string(n));
    }
  }
  if (v.kept && v.total_errors() == 1 && v.accuracy && *v.accuracy < threshold) {
    v.kept = false;
    v.reasons.push_back("accuracy " + std::to_string(*v.accuracy) + " below " +
                        std::to_string(threshold) + " after one error");
  }
  return v;
}

}  // namespace

QcResult apply_qc(const std::vector<RawSubmission>& submissions, const ReferenceLabels& refs,
                  double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("accuracy threshold must lie in [0,1]");
  QcResult result;
  result.verdicts.reserve(submissions.size());
  for (const auto& s : submissions) {
    QcVerdict v = judge(s, refs, threshold);
    if (v.kept) result.kept.push_back(s);
    result.verdicts.push_back(std::move(v));
  }
  return result;
}

std::map<std::string, std::vector<AnnotationRecord>> collect_pool_records(
    const std::vector<RawSubmission>& kept, PoolBuildStats* stats) {
  PoolBuildStats local;
  std::map<std::string, std::vector<AnnotationRecord>> grouped;
  for (const auto& s : kept) {
    std::unordered_set<std::string> seen;
    for (const auto& r : s.responses) {
      if (r.is_repeat || !seen.insert(r.image_id).second) {
        ++local.repeats_skipped;
        continue;
      }
      if (!record_violations(r).empty()) {
        ++local.flagged_skipped;
        continue;
      }
      grouped[r.image_id].push_back(r);
      ++local.records_used;
    }
  }
  if (stats) *stats = local;
  return grouped;
}

std::map<std::string, LabelPool> build_pools(const std::vector<RawSubmission>& kept,
                                             const LabelSpace& space, LabelVariety variety,
                                             const RedistributionPolicy& policy,
                                             PoolBuildStats* stats) {
  std::map<std::string, LabelPool> pools;
  for (auto& [image_id, records] : collect_pool_records(kept, stats)) {
    std::vector<SoftLabel> members;
    members.reserve(records.size());
    for (const auto& r : records) members.push_back(construct_label(r, space, variety, policy));
    pools.emplace(image_id, LabelPool::from_members(image_id, std::move(members)));
  }
  return pools;
}

std::optional<ConsistencyReport> consistency_stats(const std::vector<RawSubmission>& kept) {
  ConsistencyReport report;
  std::size_t changers = 0;
  double abs_change = 0.0;
  std::size_t abs_pairs = 0;
  for (const auto& s : kept) {
    std::unordered_map<std::string, const AnnotationRecord*> first;
    struct Pair {
      const AnnotationRecord* a;
      const AnnotationRecord* b;
    };
    std::vector<Pair> pairs;
    for (const auto& r : s.responses) {
      auto it = first.find(r.image_id);
      if (it == first.end()) {
        if (!r.is_repeat) first.emplace(r.image_id, &r);
      } else if (r.is_repeat) {
        pairs.push_back({it->second, &r});
      }
    }
    if (pairs.empty()) continue;
    ++report.annotators_with_repeats;
    report.repeat_pairs += pairs.size();
    bool changed = false;
    for (const auto& p : pairs) changed = changed || p.a->top1 != p.b->top1;
    if (changed) {
      ++changers;
      continue;
    }
    for (const auto& p : pairs) {
      if (p.a->p1 && p.b->p1) {
        abs_change += std::abs(*p.a->p1 - *p.b->p1);
        ++abs_pairs;
      }
    }
  }
  if (report.annotators_with_repeats == 0) return std::nullopt;
  report.change_fraction =
      static_cast<double>(changers) / static_cast<double>(report.annotators_with_repeats);
  if (abs_pairs > 0) report.mean_abs_p1_change = abs_change / static_cast<double>(abs_pairs);
  return report;
}

}  // namespace softlabel
