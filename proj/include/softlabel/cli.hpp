#pragma once

// Command-line front end and the file formats it reads and writes.

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softlabel/experiment.hpp"
#include "softlabel/ingest.hpp"
#include "softlabel/labelcore.hpp"

namespace softlabel {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitMissingFile = 3,
  kExitConfig = 4,
  kExitRuntime = 5,
};

/// `args` excludes the program name. Errors are written to `err` as a
/// single JSON object `{"error": ..., "message": ...}`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One row of a label matrix file.
struct LabelRow {
  std::string image_id;
  std::string source;
  SoftLabel label;
};

/// `image_id,source,variety,<class names...>`; probabilities printed with
/// 17 significant digits.
std::string label_rows_to_csv(const std::vector<LabelRow>& rows, const LabelSpace& space);
void write_label_csv(const std::filesystem::path& path, const std::vector<LabelRow>& rows,
                     const LabelSpace& space);
/// Also accepts files without the variety column. Class columns must match
/// `space` in order.
std::vector<LabelRow> read_label_csv(const std::filesystem::path& path, const LabelSpace& space);

inline constexpr const char* kAggregateSource = "aggregate";

/// One label per image: the `aggregate` row when present, otherwise the
/// image's only row. Throws SchemaError when an image has several rows and
/// none is the aggregate.
std::map<std::string, SoftLabel> image_labels(const std::vector<LabelRow>& rows);

/// Per-image record pools as written by `ingest`.
struct PoolsFile {
  std::vector<std::string> classes;
  std::map<std::string, std::vector<AnnotationRecord>> records;
};

nlohmann::json to_json(const PoolsFile& pools);
PoolsFile pools_from_json(const nlohmann::json& j);

/// Per-annotator rows followed by one aggregate row for each image.
std::vector<LabelRow> build_label_rows(const PoolsFile& pools, const LabelSpace& space,
                                       LabelVariety variety, const RedistributionPolicy& policy);

/// Training inputs resolved from a config file's data keys. Relative
/// paths are taken against the config file's directory.
struct ExperimentInputs {
  ExperimentConfig config;
  LabelSpace space = LabelSpace::cifar10();
  std::vector<TrainExample> train;
  std::vector<EvalSet> eval_sets;
};

ExperimentInputs load_experiment(const std::filesystem::path& config_path,
                                 const nlohmann::json& overrides = nlohmann::json::object());

}  // namespace softlabel
