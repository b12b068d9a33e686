#include <fstream>
#include <sstream>

#include "softlabel/ingest.hpp"

namespace softlabel {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(key, "missing");
  return *it;
}

std::string string_field(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw SchemaError(key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

ClassIndex class_field(const json& v, const char* key, const LabelSpace& space) {
  if (!v.is_string()) throw SchemaError(key, "expected a class name, got " + v.dump());
  auto k = space.find(v.get<std::string>());
  if (!k) throw SchemaError(key, "unknown class '" + v.get<std::string>() + "'");
  return *k;
}

// Absent and null both mean "not given".
std::optional<double> number_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw SchemaError(key, "expected a number, got " + it->dump());
  return it->get<double>();
}

}  // namespace

AnnotationRecord record_from_json(const json& j, const LabelSpace& space,
                                  const std::string& annotator_id) {
  if (!j.is_object()) throw SchemaError("responses", "each response must be an object");
  AnnotationRecord r;
  r.annotator_id = annotator_id;
  r.image_id = string_field(j, "image_id");
  r.top1 = class_field(require(j, "top1"), "top1", space);
  r.p1 = number_field(j, "p1");
  if (auto it = j.find("top2"); it != j.end() && !it->is_null())
    r.top2 = class_field(*it, "top2", space);
  r.p2 = number_field(j, "p2");
  if (r.p2 && !r.top2) throw SchemaError("p2", "given without top2");
  if (r.top2 && *r.top2 == r.top1) throw SchemaError("top2", "repeats top1");
  if (auto it = j.find("definitely_not"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("definitely_not", "expected an array");
    for (const auto& name : *it) r.definitely_not.insert(class_field(name, "definitely_not", space));
  }
  r.elapsed_seconds = number_field(j, "elapsed_seconds");
  if (r.elapsed_seconds && *r.elapsed_seconds < 0.0)
    throw SchemaError("elapsed_seconds", "negative");
  if (auto it = j.find("is_repeat"); it != j.end()) {
    if (!it->is_boolean()) throw SchemaError("is_repeat", "expected a boolean");
    r.is_repeat = it->get<bool>();
  }
  return r;
}

json record_to_json(const AnnotationRecord& r, const LabelSpace& space, bool with_annotator) {
  json j = json::object();
  j["image_id"] = r.image_id;
  j["top1"] = space.name(r.top1);
  if (r.p1) j["p1"] = *r.p1;
  if (r.top2) j["top2"] = space.name(*r.top2);
  if (r.p2) j["p2"] = *r.p2;
  json excluded = json::array();
  for (ClassIndex k : r.definitely_not) excluded.push_back(space.name(k));
  j["definitely_not"] = std::move(excluded);
  if (r.elapsed_seconds) j["elapsed_seconds"] = *r.elapsed_seconds;
  j["is_repeat"] = r.is_repeat;
  if (with_annotator) j["annotator_id"] = r.annotator_id;
  return j;
}

RawSubmission submission_from_json(const json& j, const LabelSpace& space) {
  if (!j.is_object()) throw SchemaError("<root>", "expected a JSON object");
  RawSubmission s;
  s.annotator_id = string_field(j, "annotator_id");
  s.batch_id = string_field(j, "batch_id");
  const json& responses = require(j, "responses");
  if (!responses.is_array()) throw SchemaError("responses", "expected an array");
  if (responses.empty()) throw SchemaError("responses", "empty");
  for (const auto& item : responses)
    s.responses.push_back(record_from_json(item, space, s.annotator_id));
  if (auto it = j.find("client_metadata"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw SchemaError("client_metadata", "expected an object");
    s.client_metadata = *it;
  }
  return s;
}

json submission_to_json(const RawSubmission& s, const LabelSpace& space) {
  json j = json::object();
  j["annotator_id"] = s.annotator_id;
  j["batch_id"] = s.batch_id;
  json responses = json::array();
  for (const auto& r : s.responses) responses.push_back(record_to_json(r, space));
  j["responses"] = std::move(responses);
  if (!s.client_metadata.empty()) j["client_metadata"] = s.client_metadata;
  return j;
}

ParseResult parse_annotations(std::istream& in, const LabelSpace& space) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.submissions.push_back(submission_from_json(json::parse(line), space));
    } catch (const SchemaError& e) {
      result.errors.push_back({line_no, e.field(), e.what()});
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, "<json>", e.what()});
    }
  }
  return result;
}

ParseResult parse_annotations(const std::filesystem::path& path, const LabelSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotations file " + path.string());
  return parse_annotations(in, space);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

ReferenceLabels parse_references(std::istream& in, const LabelSpace& space) {
  ReferenceLabels refs;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t K = space.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (line_no == 1 && !cells.empty() && cells[0] == "image_id") continue;
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() < 2) throw SchemaError("cifar10_label", where + ": too few columns");
    ReferenceEntry entry;
    if (auto k = space.find(cells[1])) {
      entry.hard = *k;
    } else {
      try {
        std::size_t used = 0;
        long v = std::stol(cells[1], &used);
        if (used != cells[1].size() || v < 0) throw std::invalid_argument("bad");
        entry.hard = static_cast<ClassIndex>(v);
        space.check(entry.hard);
      } catch (const std::exception&) {
        throw SchemaError("cifar10_label", where + ": unknown label '" + cells[1] + "'");
      }
    }
    const bool has_counts = cells.size() > 2 && !cells[2].empty();
    if (has_counts) {
      if (cells.size() != 2 + K)
        throw SchemaError("counts", where + ": expected " + std::to_string(K) + " count columns");
      std::vector<std::int64_t> counts(K);
      std::int64_t total = 0;
      for (std::size_t k = 0; k < K; ++k) {
        try {
          counts[k] = std::stoll(cells[2 + k]);
        } catch (const std::exception&) {
          throw SchemaError("count_" + std::to_string(k), where + ": not an integer");
        }
        if (counts[k] < 0) throw SchemaError("count_" + std::to_string(k), where + ": negative");
        total += counts[k];
      }
      if (total < 1) throw SchemaError("counts", where + ": counts sum to zero");
      entry.counts = std::move(counts);
    }
    refs[cells[0]] = std::move(entry);
  }
  return refs;
}

ReferenceLabels parse_references(const std::filesystem::path& path, const LabelSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference file " + path.string());
  return parse_references(in, space);
}

}  // namespace softlabel
