#include "softlabel/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "softlabel/features.hpp"
#include "softlabel/http_server.hpp"
#include "softlabel/metrics.hpp"
#include "softlabel/service.hpp"
#include "softlabel/simulator.hpp"

namespace softlabel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class MissingFile : public std::runtime_error {
public:
  explicit MissingFile(const fs::path& p)
      : std::runtime_error("no such file: '" + p.string() + "'") {}
};

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFile(p);
}

json read_json_file(const fs::path& p) {
  require_file(p);
  std::ifstream in(p);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + p.string() + "' is not valid JSON");
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

double parse_double(const std::string& s, const std::string& field) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw SchemaError(field, "not a number: '" + s + "'");
  return v;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

LabelSpace space_from_option(const std::string& classes) {
  if (classes.empty()) return LabelSpace::cifar10();
  return LabelSpace(split(classes, ','));
}

}  // namespace

// ---------------------------------------------------------------- file formats

std::string label_rows_to_csv(const std::vector<LabelRow>& rows, const LabelSpace& space) {
  std::ostringstream out;
  out << "image_id,source,variety";
  for (const auto& name : space.names()) out << ',' << name;
  out << '\n';
  for (const auto& row : rows) {
    if (row.label.size() != space.size())
      throw LabelError("label for '" + row.image_id + "' does not match the label space");
    out << row.image_id << ',' << row.source << ',' << to_string(row.label.variety());
    for (double p : row.label.probs()) out << ',' << format_double(p);
    out << '\n';
  }
  return out.str();
}

void write_label_csv(const fs::path& path, const std::vector<LabelRow>& rows,
                     const LabelSpace& space) {
  write_text(path, label_rows_to_csv(rows, space));
}

std::vector<LabelRow> read_label_csv(const fs::path& path, const LabelSpace& space) {
  require_file(path);
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("header", "empty label file");
  auto header = split(trim(line), ',');
  if (header.size() < 2 || header[0] != "image_id" || header[1] != "source")
    throw SchemaError("header", "expected 'image_id,source,...'");
  const bool has_variety = header.size() > 2 && header[2] == "variety";
  const std::size_t first = has_variety ? 3 : 2;
  if (std::vector<std::string>(header.begin() + static_cast<std::ptrdiff_t>(first), header.end()) !=
      space.names())
    throw SchemaError("header", "class columns do not match the label space");

  std::vector<LabelRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no), "wrong number of columns");
    LabelVariety variety = LabelVariety::OursAgg;
    if (has_variety) {
      try {
        variety = parse_variety(cells[2]);
      } catch (const std::invalid_argument& e) {
        throw SchemaError("line " + std::to_string(line_no), e.what());
      }
    }
    std::vector<double> probs;
    for (std::size_t c = first; c < cells.size(); ++c)
      probs.push_back(parse_double(cells[c], "line " + std::to_string(line_no)));
    try {
      rows.push_back({cells[0], cells[1], SoftLabel(std::move(probs), variety, cells[1])});
    } catch (const LabelError& e) {
      throw SchemaError("line " + std::to_string(line_no), e.what());
    }
  }
  return rows;
}

std::map<std::string, SoftLabel> image_labels(const std::vector<LabelRow>& rows) {
  std::map<std::string, std::vector<const LabelRow*>> by_image;
  for (const auto& row : rows) by_image[row.image_id].push_back(&row);
  std::map<std::string, SoftLabel> out;
  for (const auto& [id, group] : by_image) {
    const LabelRow* pick = nullptr;
    for (const auto* row : group)
      if (row->source == kAggregateSource) pick = row;
    if (!pick && group.size() == 1) pick = group.front();
    if (!pick) throw SchemaError(id, "several rows and no aggregate row");
    out.emplace(id, pick->label);
  }
  return out;
}

json to_json(const PoolsFile& pools) {
  const LabelSpace space(pools.classes);
  json images = json::array();
  for (const auto& [id, records] : pools.records) {
    json recs = json::array();
    for (const auto& r : records) recs.push_back(record_to_json(r, space, true));
    images.push_back({{"image_id", id}, {"records", std::move(recs)}});
  }
  return {{"classes", pools.classes}, {"images", std::move(images)}};
}

PoolsFile pools_from_json(const json& j) {
  PoolsFile pools;
  if (!j.is_object() || !j.contains("classes") || !j.contains("images"))
    throw SchemaError("<root>", "pools file needs 'classes' and 'images'");
  try {
    pools.classes = j.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw SchemaError("classes", "expected an array of names");
  }
  const LabelSpace space(pools.classes);
  for (const auto& item : j.at("images")) {
    if (!item.is_object() || !item.contains("image_id") || !item.contains("records"))
      throw SchemaError("images", "each entry needs 'image_id' and 'records'");
    const auto id = item.at("image_id").get<std::string>();
    auto& records = pools.records[id];
    for (const auto& r : item.at("records")) {
      const auto annotator = r.value("annotator_id", std::string{});
      auto rec = record_from_json(r, space, annotator);
      if (rec.image_id != id) throw SchemaError("image_id", "record filed under the wrong image");
      records.push_back(std::move(rec));
    }
  }
  return pools;
}

std::vector<LabelRow> build_label_rows(const PoolsFile& pools, const LabelSpace& space,
                                       LabelVariety variety, const RedistributionPolicy& policy) {
  std::vector<LabelRow> rows;
  for (const auto& [id, records] : pools.records) {
    if (records.empty()) continue;
    std::vector<SoftLabel> members;
    for (const auto& r : records) {
      members.push_back(construct_label(r, space, variety, policy));
      rows.push_back({id, r.annotator_id, members.back()});
    }
    rows.push_back({id, kAggregateSource, aggregate_mean(members)});
  }
  return rows;
}

// ---------------------------------------------------------------- experiments

namespace {

fs::path resolve(const fs::path& base, const json& v, const char* key) {
  if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a path");
  fs::path p = v.get<std::string>();
  if (!p.is_absolute()) p = base / p;
  require_file(p);
  return p;
}

SoftLabel one_hot(ClassIndex k, std::size_t K) {
  std::vector<double> p(K, 0.0);
  p.at(k) = 1.0;
  return SoftLabel(std::move(p), LabelVariety::Hard, "hard");
}

}  // namespace

ExperimentInputs load_experiment(const fs::path& config_path, const json& overrides) {
  json j = read_json_file(config_path);
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, value] : overrides.items()) j[key] = value;
  ExperimentInputs in{config_from_json(j), LabelSpace::cifar10(), {}, {}};
  const fs::path base = config_path.parent_path();

  if (j.contains("classes")) {
    try {
      in.space = LabelSpace(j.at("classes").get<std::vector<std::string>>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("classes: ") + e.what());
    }
  }
  if (!is_elicited(in.config.variety))
    throw ConfigError("variety must be one of the elicited constructions");
  if (!j.contains("features")) throw ConfigError("config key 'features' is required");
  const FeatureMatrix features = load_features(resolve(base, j.at("features"), "features"));

  ReferenceLabels refs;
  if (j.contains("references"))
    refs = parse_references(resolve(base, j.at("references"), "references"), in.space);

  std::map<std::string, LabelPool> pools;
  if (j.contains("annotations")) {
    const auto parsed =
        parse_annotations(resolve(base, j.at("annotations"), "annotations"), in.space);
    const auto qc = apply_qc(parsed.submissions, refs);
    pools = build_pools(qc.kept, in.space, in.config.variety, RedistributionPolicy{in.config.gamma});
  }
  if (j.contains("hard_fill")) {
    const auto fill = parse_references(resolve(base, j.at("hard_fill"), "hard_fill"), in.space);
    for (const auto& [id, ref] : fill) {
      if (pools.contains(id)) continue;
      pools.emplace(id, LabelPool{id, {}, one_hot(ref.hard, in.space.size())});
      refs.emplace(id, ref);
    }
  }

  std::set<std::string> heldout;
  if (j.contains("heldout")) {
    const auto& h = j.at("heldout");
    if (h.is_array()) {
      for (const auto& id : h) {
        if (!id.is_string()) throw ConfigError("heldout ids must be strings");
        heldout.insert(id.get<std::string>());
      }
    } else {
      const auto path = resolve(base, h, "heldout");
      require_file(path);
      std::ifstream hin(path);
      std::string line;
      while (std::getline(hin, line))
        if (!trim(line).empty()) heldout.insert(trim(line));
    }
  }

  if (j.contains("eval_sets")) {
    const auto& sets = j.at("eval_sets");
    if (!sets.is_array()) throw ConfigError("eval_sets must be an array");
    for (const auto& s : sets) {
      if (!s.is_object() || !s.contains("name") || !s.contains("labels"))
        throw ConfigError("each eval set needs 'name' and 'labels'");
      EvalSet set{s.at("name").get<std::string>(), {}};
      const auto labels = image_labels(read_label_csv(resolve(base, s.at("labels"), "labels"), in.space));
      std::optional<FeatureMatrix> own;
      if (s.contains("features")) own = load_features(resolve(base, s.at("features"), "features"));
      const FeatureMatrix& fm = own ? *own : features;
      for (const auto& [id, label] : labels) {
        auto row = fm.find(id);
        if (!row) throw ConfigError("eval image '" + id + "' has no features");
        set.entries.push_back({id, fm.row(*row), label});
        heldout.insert(id);
      }
      in.eval_sets.push_back(std::move(set));
    }
  }

  for (auto& [id, pool] : pools) {
    if (heldout.contains(id)) continue;
    auto row = features.find(id);
    if (!row) throw ConfigError("training image '" + id + "' has no features");
    std::optional<ClassIndex> hard;
    if (auto r = refs.find(id); r != refs.end()) hard = r->second.hard;
    in.train.push_back({id, features.row(*row), std::move(pool), hard});
  }
  if (in.train.empty()) throw ConfigError("config yields no training images");
  in.config.range = features.range();
  if (j.contains("range")) {
    auto r = j.at("range").get<std::vector<double>>();
    in.config.range = {r[0], r[1]};
  }
  return in;
}

// ---------------------------------------------------------------- subcommands

namespace {

struct CommonOverrides {
  std::string variety;
  std::optional<double> gamma;
  std::string M;
  std::string mode;
  std::optional<double> beta;
  std::optional<double> epsilon;
  std::string seeds;
  std::string baseline;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--variety", variety, "Label variety");
    cmd->add_option("--gamma", gamma, "Reserve mass for clamp redistribution")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--M", M, "Annotators per image, or 'all'");
    cmd->add_option("--mode", mode, "agg or deagg");
    cmd->add_option("--beta", beta, "Label smoothing factor")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--epsilon", epsilon, "FGSM step")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seeds", seeds, "Comma-separated seeds");
    cmd->add_option("--baseline", baseline, "none, hard, uniform, random or smoothed");
  }

  json to_json() const {
    json o = json::object();
    if (!variety.empty()) o["variety"] = variety;
    if (gamma) o["gamma"] = *gamma;
    if (!M.empty()) {
      if (M == "all") {
        o["M"] = "all";
      } else {
        std::size_t m = 0;
        auto [ptr, ec] = std::from_chars(M.data(), M.data() + M.size(), m);
        if (ec != std::errc() || ptr != M.data() + M.size())
          throw CLI::ValidationError("--M", "expected a positive integer or 'all'");
        o["M"] = m;
      }
    }
    if (!mode.empty()) o["mode"] = mode;
    if (beta) o["beta"] = *beta;
    if (epsilon) o["epsilon"] = *epsilon;
    if (!seeds.empty()) {
      json list = json::array();
      for (const auto& s : split(seeds, ','))
        list.push_back(static_cast<std::uint64_t>(std::stoull(s)));
      o["seeds"] = list;
    }
    if (!baseline.empty()) o["baseline"] = baseline;
    return o;
  }
};

std::vector<std::size_t> parse_size_list(const std::string& s, const char* flag) {
  std::vector<std::size_t> out;
  for (const auto& cell : split(s, ',')) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || v == 0)
      throw CLI::ValidationError(flag, "expected positive integers, got '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

void emit(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text(path, text);
}

int cmd_ingest(const std::string& annotations, const std::string& references, double threshold,
               const std::string& classes, const std::string& out_path,
               const std::string& report_path, std::ostream& out, std::ostream& err) {
  const LabelSpace space = space_from_option(classes);
  require_file(annotations);
  const auto parsed = parse_annotations(fs::path(annotations), space);
  ReferenceLabels refs;
  if (!references.empty()) refs = parse_references(fs::path(references), space);
  const auto qc = apply_qc(parsed.submissions, refs, threshold);
  PoolBuildStats stats;
  PoolsFile pools{space.names(), collect_pool_records(qc.kept, &stats)};
  write_text(out_path, to_json(pools).dump(1) + "\n");

  json verdicts = json::array();
  for (const auto& v : qc.verdicts) {
    json counts = json::object();
    for (const auto& [rule, n] : v.error_counts) counts[to_string(rule)] = n;
    verdicts.push_back({{"annotator_id", v.annotator_id},
                        {"batch_id", v.batch_id},
                        {"kept", v.kept},
                        {"error_counts", counts},
                        {"accuracy", v.accuracy ? json(*v.accuracy) : json()},
                        {"reasons", v.reasons}});
  }
  json errors = json::array();
  for (const auto& e : parsed.errors)
    errors.push_back({{"line", e.line}, {"field", e.field}, {"message", e.message}});
  json report{{"sessions", parsed.submissions.size()},
              {"kept", qc.kept.size()},
              {"images", pools.records.size()},
              {"records_used", stats.records_used},
              {"repeats_skipped", stats.repeats_skipped},
              {"flagged_skipped", stats.flagged_skipped},
              {"parse_errors", errors},
              {"verdicts", verdicts}};
  if (auto c = consistency_stats(qc.kept)) {
    report["consistency"] = {
        {"annotators_with_repeats", c->annotators_with_repeats},
        {"repeat_pairs", c->repeat_pairs},
        {"change_fraction", c->change_fraction},
        {"mean_abs_p1_change", c->mean_abs_p1_change ? json(*c->mean_abs_p1_change) : json()}};
  }
  if (!report_path.empty()) write_text(report_path, report.dump(1) + "\n");
  for (const auto& e : parsed.errors)
    err << "warning: line " << e.line << ": " << e.field << ": " << e.message << '\n';
  out << json{{"sessions", parsed.submissions.size()},
              {"kept", qc.kept.size()},
              {"images", pools.records.size()},
              {"parse_errors", parsed.errors.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_build_labels(const std::string& pools_path, const std::string& varieties, double gamma,
                     const std::string& out_path, std::ostream& out) {
  const PoolsFile pools = pools_from_json(read_json_file(pools_path));
  const LabelSpace space(pools.classes);
  std::vector<LabelVariety> list;
  for (const auto& token : split(varieties, ',')) {
    LabelVariety v;
    try {
      v = parse_variety(token);
    } catch (const std::invalid_argument& e) {
      throw CLI::ValidationError("--variety", e.what());
    }
    if (!is_elicited(v)) throw CLI::ValidationError("--variety", "'" + token + "' is not elicited");
    list.push_back(v);
  }
  if (list.empty()) throw CLI::ValidationError("--variety", "no variety given");
  const RedistributionPolicy policy{gamma};
  if (list.size() == 1) {
    emit(out, out_path, label_rows_to_csv(build_label_rows(pools, space, list[0], policy), space));
    return kExitOk;
  }
  if (out_path.empty() || out_path == "-")
    throw CLI::ValidationError("--out", "several varieties need an output directory");
  for (LabelVariety v : list)
    write_label_csv(fs::path(out_path) / (to_string(v) + ".csv"),
                    build_label_rows(pools, space, v, policy), space);
  return kExitOk;
}

int cmd_compare(const std::string& ours, const std::string& theirs, const std::string& classes,
                const std::string& out_path, std::ostream& out) {
  const LabelSpace space = space_from_option(classes);
  const auto a = image_labels(read_label_csv(ours, space));
  const auto b = image_labels(read_label_csv(theirs, space));
  emit(out, out_path, to_json(compare_label_sets(a, b)).dump(1) + "\n");
  return kExitOk;
}

std::string model_file(std::uint64_t seed) { return "model_seed_" + std::to_string(seed) + ".json"; }

void write_report(const EvalReport& report, const std::string& out_path,
                  const std::string& csv_path, std::ostream& out) {
  emit(out, out_path, to_json(report).dump(1) + "\n");
  if (!csv_path.empty()) write_text(csv_path, to_csv(report));
}

int cmd_train(const std::string& config, const CommonOverrides& o, const std::string& out_path,
              const std::string& csv_path, const std::string& models_dir, std::ostream& out) {
  const auto in = load_experiment(config, o.to_json());
  std::vector<MicroModel> models;
  const auto report = run_experiment(in.config, in.train, in.eval_sets, &models);
  if (!models_dir.empty()) {
    for (std::size_t i = 0; i < models.size(); ++i)
      write_text(fs::path(models_dir) / model_file(in.config.seeds[i]),
                 to_json(models[i]).dump() + "\n");
  }
  write_report(report, out_path, csv_path, out);
  return kExitOk;
}

int cmd_evaluate(const std::string& config, const CommonOverrides& o, const std::string& models_dir,
                 const std::string& out_path, const std::string& csv_path, std::ostream& out) {
  const auto in = load_experiment(config, o.to_json());
  std::vector<MicroModel> models;
  for (std::uint64_t seed : in.config.seeds) {
    try {
      models.push_back(model_from_json(read_json_file(fs::path(models_dir) / model_file(seed))));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("model file: ") + e.what());
    }
  }
  write_report(evaluate_models(in.config, models, in.eval_sets), out_path, csv_path, out);
  return kExitOk;
}

int cmd_sweep_gamma(const std::string& config, const CommonOverrides& o, const std::string& grid,
                    const std::string& out_path, std::ostream& out, std::ostream& err) {
  std::vector<double> gammas;
  for (const auto& g : split(grid, ',')) gammas.push_back(parse_double(g, "--grid"));
  std::ostringstream csv;
  csv.precision(17);
  csv << "gamma,metric,eval_set,mean,ci_low,ci_high\n";
  std::optional<std::pair<double, double>> best;
  for (double g : gammas) {
    json overrides = o.to_json();
    overrides["gamma"] = g;
    const auto in = load_experiment(config, overrides);
    const auto report = run_experiment(in.config, in.train, in.eval_sets);
    for (const auto& row : report.rows) {
      csv << g << ',' << row.metric << ',' << row.eval_set << ',' << row.summary.mean << ',';
      if (row.summary.low) csv << *row.summary.low;
      csv << ',';
      if (row.summary.high) csv << *row.summary.high;
      csv << '\n';
    }
    if (!in.eval_sets.empty()) {
      const auto* row = report.find("soft_ce", in.eval_sets.front().name);
      if (row && (!best || row->summary.mean < best->second)) best = {g, row->summary.mean};
    }
  }
  emit(out, out_path, csv.str());
  if (best) err << "best gamma by soft_ce on the first eval set: " << format_double(best->first) << '\n';
  return kExitOk;
}

struct SimulateOptions {
  std::string config;
  std::string M = "1,2,4,8,16,32,51";
  std::string agg = "both";
  std::optional<std::size_t> worlds, images, classes, pool_size;
  std::optional<double> concentration, tau, gamma;
  std::optional<int> quantization;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string emit_dir;
  std::size_t annotators_per_image = 6;
  std::size_t batch_size = 25;
  std::size_t feature_dim = 32;
  double feature_noise = 0.1;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  SweepSpec spec;
  if (!o.config.empty()) {
    const json j = read_json_file(o.config);
    static const std::set<std::string> known{
        "images", "classes", "low_entropy_fraction", "three_class_fraction", "concentration",
        "quantization", "exclusion_threshold", "pool_size", "worlds", "seed", "gamma"};
    if (!j.is_object()) throw ConfigError("world config must be a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.contains(key)) throw ConfigError("unknown world config key '" + key + "'");
    try {
      spec.world.images = j.value("images", spec.world.images);
      spec.world.classes = j.value("classes", spec.world.classes);
      spec.world.low_entropy_fraction = j.value("low_entropy_fraction", spec.world.low_entropy_fraction);
      spec.world.three_class_fraction = j.value("three_class_fraction", spec.world.three_class_fraction);
      spec.pool.model.concentration = j.value("concentration", spec.pool.model.concentration);
      spec.pool.model.quantization = j.value("quantization", spec.pool.model.quantization);
      spec.pool.model.exclusion_threshold =
          j.value("exclusion_threshold", spec.pool.model.exclusion_threshold);
      spec.pool.size = j.value("pool_size", spec.pool.size);
      spec.world_seeds = j.value("worlds", spec.world_seeds);
      spec.seed = j.value("seed", spec.seed);
      spec.policy.gamma = j.value("gamma", spec.policy.gamma);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("world config: ") + e.what());
    }
  }
  if (o.images) spec.world.images = *o.images;
  if (o.classes) spec.world.classes = *o.classes;
  if (o.concentration) spec.pool.model.concentration = *o.concentration;
  if (o.quantization) spec.pool.model.quantization = *o.quantization;
  if (o.tau) spec.pool.model.exclusion_threshold = *o.tau;
  if (o.pool_size) spec.pool.size = *o.pool_size;
  if (o.worlds) spec.world_seeds = *o.worlds;
  if (o.seed) spec.seed = *o.seed;
  if (o.gamma) spec.policy.gamma = *o.gamma;
  spec.M_values = parse_size_list(o.M, "--M");
  if (o.agg == "both")
    spec.aggregations = {Aggregation::Multi, Aggregation::Ours};
  else
    spec.aggregations = {parse_aggregation(o.agg)};
  try {
    spec.pool.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  emit(out, o.out, to_csv(run_sweep(spec)));

  if (!o.emit_dir.empty()) {
    // One world from the sweep's first seed, written as a trainable dataset.
    WorldSpec ws = spec.world;
    ws.seed = spec.seed;
    const World world = make_world(ws);
    const LabelSpace space = synthetic_space(ws.classes);
    const fs::path dir = o.emit_dir;
    std::string jsonl;
    for (const auto& s : simulate_sessions(world, space, spec.pool.model, o.annotators_per_image,
                                           o.batch_size, spec.seed))
      jsonl += submission_to_json(s, space).dump() + "\n";
    write_text(dir / "annotations.jsonl", jsonl);
    std::string refs = "image_id,cifar10_label\n";
    std::vector<LabelRow> truths;
    for (std::size_t n = 0; n < world.size(); ++n) {
      SoftLabel truth(world.truths[n], LabelVariety::OursAgg, "truth");
      refs += synthetic_image_id(n) + "," + space.name(truth.argmax()) + "\n";
      truths.push_back({synthetic_image_id(n), "truth", truth});
    }
    write_text(dir / "references.csv", refs);
    write_label_csv(dir / "truth.csv", truths, space);
    save_features(synthetic_features(world, FeatureSpec{o.feature_dim, o.feature_noise, spec.seed}),
                  dir / "features.json");
    write_text(dir / "classes.json", json(space.names()).dump() + "\n");
  }
  return kExitOk;
}

struct ServeOptions {
  std::string batch_plan;
  std::string plan_from;
  std::string data_dir;
  std::string image_dir;
  std::string host = "0.0.0.0";
  std::optional<int> port;
  std::optional<double> ttl_minutes;
  std::optional<std::size_t> sessions_per_batch;
  std::uint64_t seed = 0;
  std::string classes;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

int cmd_serve(ServeOptions o, std::ostream& out) {
  if (o.batch_plan.empty()) o.batch_plan = env_or("SOFTLABEL_BATCH_PLAN", "");
  if (o.data_dir.empty()) o.data_dir = env_or("SOFTLABEL_DATA_DIR", "data");
  if (o.image_dir.empty()) o.image_dir = env_or("SOFTLABEL_IMAGE_DIR", "images");
  if (!o.port) o.port = std::stoi(env_or("SOFTLABEL_PORT", "8080"));
  if (!o.ttl_minutes) o.ttl_minutes = std::stod(env_or("SOFTLABEL_SESSION_TTL_MINUTES", "60"));
  if (o.batch_plan.empty()) throw CLI::ValidationError("--batch-plan", "a batch plan is required");
  const LabelSpace space = space_from_option(o.classes);

  if (!o.plan_from.empty() && !fs::exists(o.batch_plan)) {
    std::map<std::string, double> entropies;
    for (const auto& [id, label] : image_labels(read_label_csv(o.plan_from, space)))
      entropies[id] = entropy(label);
    write_text(o.batch_plan, to_json(plan_batches(entropies, BatchPlanSpec{})).dump(1) + "\n");
  }
  require_file(o.batch_plan);
  std::vector<BatchPlan> plans;
  try {
    plans = load_batch_plans(o.batch_plan);
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  ServiceConfig cfg;
  cfg.data_dir = o.data_dir;
  cfg.image_dir = o.image_dir;
  cfg.session_ttl = std::chrono::seconds(static_cast<long long>(*o.ttl_minutes * 60.0));
  cfg.seed = o.seed;
  cfg.sessions_per_batch = o.sessions_per_batch;
  ElicitationService service(space, std::move(plans), cfg);
  HttpServer server(service);
  const int port = server.bind(o.host, *o.port);
  if (port < 0) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(*o.port));
  out << json{{"listening", o.host + ":" + std::to_string(port)}}.dump() << std::endl;
  server.serve();
  return kExitOk;
}

int cmd_export_report(const std::string& report_path, const std::string& format,
                      const std::string& out_path, std::ostream& out) {
  EvalReport report;
  try {
    report = report_from_json(read_json_file(report_path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  emit(out, out_path, format == "json" ? to_json(report).dump(1) + "\n" : to_csv(report));
  return kExitOk;
}

void error_json(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft-label elicitation, aggregation and training toolkit", "softlabel"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  // ingest
  std::string annotations, references, classes, out_path, report_path;
  double threshold = kDefaultAccuracyThreshold;
  auto* ingest = app.add_subcommand("ingest", "Parse annotations, apply QC, write pools");
  ingest->add_option("--annotations", annotations, "Annotation JSONL")->required();
  ingest->add_option("--references", references, "Reference label CSV");
  ingest->add_option("--threshold", threshold, "Accuracy threshold")->check(CLI::Range(0.0, 1.0));
  ingest->add_option("--classes", classes, "Comma-separated class names");
  ingest->add_option("--out", out_path, "Pools file")->required();
  ingest->add_option("--report", report_path, "QC report JSON");

  // build-labels
  std::string pools_path, varieties = "t2-clamp";
  double gamma = 0.1;
  auto* build = app.add_subcommand("build-labels", "Construct label matrices from pools");
  build->add_option("--pools", pools_path, "Pools file")->required();
  build->add_option("--variety", varieties, "Comma-separated varieties");
  build->add_option("--gamma", gamma, "Reserve mass")->check(CLI::Range(0.0, 1.0));
  build->add_option("--out", out_path, "CSV file, or directory for several varieties");

  // compare
  std::string label_a, label_b;
  auto* compare = app.add_subcommand("compare", "Compare two label files");
  compare->add_option("ours", label_a, "Label CSV")->required();
  compare->add_option("theirs", label_b, "Label CSV")->required();
  compare->add_option("--classes", classes, "Comma-separated class names");
  compare->add_option("--out", out_path, "Report JSON");

  // train / evaluate
  std::string config, csv_path, models_dir;
  CommonOverrides overrides;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate across seeds");
  train_cmd->add_option("--config", config, "Experiment config JSON")->required();
  train_cmd->add_option("--out", out_path, "Report JSON");
  train_cmd->add_option("--csv", csv_path, "Report CSV");
  train_cmd->add_option("--models-dir", models_dir, "Directory for trained models");
  overrides.add_to(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate saved models");
  eval_cmd->add_option("--config", config, "Experiment config JSON")->required();
  eval_cmd->add_option("--models-dir", models_dir, "Directory of saved models")->required();
  eval_cmd->add_option("--out", out_path, "Report JSON");
  eval_cmd->add_option("--csv", csv_path, "Report CSV");
  overrides.add_to(eval_cmd);

  // sweep-gamma
  std::string grid = "0.0,0.01,0.05,0.1,0.2,0.3,0.4";
  auto* sweep = app.add_subcommand("sweep-gamma", "Train across the reserve-mass grid");
  sweep->add_option("--config", config, "Experiment config JSON")->required();
  sweep->add_option("--grid", grid, "Comma-separated gamma values");
  sweep->add_option("--out", out_path, "CSV output");
  overrides.add_to(sweep);

  // simulate
  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Annotator-efficiency sweep on synthetic worlds");
  simulate->add_option("--config", sim.config, "World config JSON");
  simulate->add_option("--M", sim.M, "Comma-separated annotator counts");
  simulate->add_option("--agg", sim.agg, "multi, ours or both")
      ->check(CLI::IsMember({"multi", "ours", "both"}));
  simulate->add_option("--worlds", sim.worlds, "Number of world seeds");
  simulate->add_option("--images", sim.images, "Images per world");
  simulate->add_option("--classes", sim.classes, "Number of classes");
  simulate->add_option("--pool-size", sim.pool_size, "Annotators in the pool");
  simulate->add_option("--concentration", sim.concentration, "Perception concentration");
  simulate->add_option("--quantization", sim.quantization, "Reporting step in percent");
  simulate->add_option("--tau", sim.tau, "Definitely-not threshold");
  simulate->add_option("--gamma", sim.gamma, "Reserve mass")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--seed", sim.seed, "Root seed");
  simulate->add_option("--out", sim.out, "CSV output");
  simulate->add_option("--emit-dir", sim.emit_dir, "Write a synthetic dataset here");
  simulate->add_option("--annotators-per-image", sim.annotators_per_image,
                       "Sessions per image in the emitted dataset");
  simulate->add_option("--batch-size", sim.batch_size, "Images per emitted session");
  simulate->add_option("--feature-dim", sim.feature_dim, "Emitted feature dimension");
  simulate->add_option("--feature-noise", sim.feature_noise, "Emitted feature noise")
      ->check(CLI::NonNegativeNumber);

  // serve
  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the elicitation backend");
  serve_cmd->add_option("--batch-plan", serve.batch_plan, "Batch plan JSON");
  serve_cmd->add_option("--plan-from", serve.plan_from, "Label CSV to plan batches from");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Store directory");
  serve_cmd->add_option("--image-dir", serve.image_dir, "Image directory");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port");
  serve_cmd->add_option("--ttl-minutes", serve.ttl_minutes, "Session lifetime");
  serve_cmd->add_option("--sessions-per-batch", serve.sessions_per_batch, "Cap per batch");
  serve_cmd->add_option("--seed", serve.seed, "Session shuffle seed");
  serve_cmd->add_option("--classes", serve.classes, "Comma-separated class names");

  // export-report
  std::string report_in, format = "csv";
  auto* export_cmd = app.add_subcommand("export-report", "Convert an evaluation report");
  export_cmd->add_option("--report", report_in, "Report JSON")->required();
  export_cmd->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  export_cmd->add_option("--out", out_path, "Output file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_json(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (ingest->parsed())
      return cmd_ingest(annotations, references, threshold, classes, out_path, report_path, out,
                        err);
    if (build->parsed()) return cmd_build_labels(pools_path, varieties, gamma, out_path, out);
    if (compare->parsed()) return cmd_compare(label_a, label_b, classes, out_path, out);
    if (train_cmd->parsed())
      return cmd_train(config, overrides, out_path, csv_path, models_dir, out);
    if (eval_cmd->parsed())
      return cmd_evaluate(config, overrides, models_dir, out_path, csv_path, out);
    if (sweep->parsed()) return cmd_sweep_gamma(config, overrides, grid, out_path, out, err);
    if (simulate->parsed()) return cmd_simulate(sim, out);
    if (serve_cmd->parsed()) return cmd_serve(serve, out);
    if (export_cmd->parsed()) return cmd_export_report(report_in, format, out_path, out);
  } catch (const CLI::ParseError& e) {
    error_json(err, "usage", e.what());
    return kExitUsage;
  } catch (const MissingFile& e) {
    error_json(err, "missing_file", e.what());
    return kExitMissingFile;
  } catch (const ConfigError& e) {
    error_json(err, "config", e.what());
    return kExitConfig;
  } catch (const SchemaError& e) {
    error_json(err, "config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    error_json(err, "runtime", e.what());
    return kExitRuntime;
  }
  error_json(err, "usage", "no subcommand");
  return kExitUsage;
}

}  // namespace softlabel
