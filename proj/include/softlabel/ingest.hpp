#pragma once

// Annotation export parsing, participant exclusion, and per-image pool
// construction.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "softlabel/labelcore.hpp"

namespace softlabel {

/// Malformed input, tagged with the offending field.
class SchemaError : public std::runtime_error {
public:
  SchemaError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// One annotator session as exported by the elicitation service.
struct RawSubmission {
  std::string annotator_id;
  std::string batch_id;
  std::vector<AnnotationRecord> responses;
  nlohmann::json client_metadata = nlohmann::json::object();

  bool operator==(const RawSubmission&) const = default;
};

/// Record-level rule violations counted by QC.
enum class QcRule { Range, Contradiction, MissingP1 };

std::string to_string(QcRule rule);

/// Rules a single record violates, in enum order.
std::vector<QcRule> record_violations(const AnnotationRecord& record);

struct QcVerdict {
  std::string annotator_id;
  std::string batch_id;
  bool kept = true;
  std::map<QcRule, int> error_counts;
  std::optional<double> accuracy;
  /// Distinct images skipped by the accuracy rule for lack of a reference.
  int missing_references = 0;
  std::vector<std::string> reasons;

  int total_errors() const;
};

struct ReferenceEntry {
  ClassIndex hard = 0;
  std::optional<std::vector<std::int64_t>> counts;
};

using ReferenceLabels = std::map<std::string, ReferenceEntry>;

struct ParseError {
  std::size_t line = 0;
  std::string field;
  std::string message;
};

struct ParseResult {
  std::vector<RawSubmission> submissions;
  std::vector<ParseError> errors;
};

/// Throws std::runtime_error when the file cannot be opened. Schema
/// violations are collected per line in `errors`.
ParseResult parse_annotations(const std::filesystem::path& path, const LabelSpace& space);
ParseResult parse_annotations(std::istream& in, const LabelSpace& space);

/// Parses one session object; throws SchemaError naming the offending field.
RawSubmission submission_from_json(const nlohmann::json& j, const LabelSpace& space);
/// Canonical JSONL object for one session (class names, sorted keys).
nlohmann::json submission_to_json(const RawSubmission& s, const LabelSpace& space);
nlohmann::json record_to_json(const AnnotationRecord& r, const LabelSpace& space,
                              bool with_annotator = false);
AnnotationRecord record_from_json(const nlohmann::json& j, const LabelSpace& space,
                                  const std::string& annotator_id);

/// `image_id,cifar10_label[,count_0,...,count_{K-1}]`. The label column
/// accepts a class name or an index.
ReferenceLabels parse_references(const std::filesystem::path& path, const LabelSpace& space);
ReferenceLabels parse_references(std::istream& in, const LabelSpace& space);

struct QcResult {
  std::vector<RawSubmission> kept;
  std::vector<QcVerdict> verdicts;
};

inline constexpr double kDefaultAccuracyThreshold = 0.75;

/// Excludes a session when any single rule fires more than twice, or when
/// it has exactly one error in total and its accuracy against the hard
/// reference labels is below `threshold`. Error-free sessions are always
/// kept.
QcResult apply_qc(const std::vector<RawSubmission>& submissions, const ReferenceLabels& refs,
                  double threshold = kDefaultAccuracyThreshold);

struct PoolBuildStats {
  std::size_t records_used = 0;
  std::size_t repeats_skipped = 0;
  std::size_t flagged_skipped = 0;
};

/// First occurrence of each (session, image) only; records with any QC
/// violation are left out. Images without annotations are omitted.
std::map<std::string, LabelPool> build_pools(const std::vector<RawSubmission>& kept,
                                             const LabelSpace& space, LabelVariety variety,
                                             const RedistributionPolicy& policy,
                                             PoolBuildStats* stats = nullptr);

/// The records `build_pools` would use, grouped by image.
std::map<std::string, std::vector<AnnotationRecord>> collect_pool_records(
    const std::vector<RawSubmission>& kept, PoolBuildStats* stats = nullptr);

struct ConsistencyReport {
  std::size_t annotators_with_repeats = 0;
  std::size_t repeat_pairs = 0;
  /// Fraction of annotators whose top1 differs on at least one repeat pair.
  double change_fraction = 0.0;
  /// Mean |p1 - p1'| in percentage points over non-changers' pairs; absent
  /// when no non-changer pair has both probabilities.
  std::optional<double> mean_abs_p1_change;
};

/// nullopt when no session contains a repeat pair.
std::optional<ConsistencyReport> consistency_stats(const std::vector<RawSubmission>& kept);

}  // namespace softlabel
