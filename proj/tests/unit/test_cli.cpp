#include <doctest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "softlabel/cli.hpp"

using namespace softlabel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const LabelSpace kSpace = LabelSpace::cifar10();

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Small synthetic dataset written by the simulate subcommand.
fs::path emit_dataset(const std::string& name) {
  const auto dir = oracle::tmp_dir(name);
  const auto r = run({"simulate", "--images", "50", "--worlds", "1", "--M", "1", "--seed", "3",
                      "--emit-dir", (dir / "ds").string(), "--out", (dir / "curve.csv").string()});
  REQUIRE(r.code == 0);
  return dir;
}

}  // namespace

TEST_CASE("label csv round trip") {
  const auto dir = oracle::tmp_dir("cli_csv");
  std::vector<LabelRow> rows{{"x", "a1", hard_label(3, kSpace)},
                             {"x", "aggregate", softmax_smooth(hard_label(3, kSpace), 0.5)}};
  write_label_csv(dir / "l.csv", rows, kSpace);
  const auto back = read_label_csv(dir / "l.csv", kSpace);
  REQUIRE(back.size() == 2);
  CHECK(back[1].label.vector() == rows[1].label.vector());
  CHECK(back[1].label.variety() == LabelVariety::Smoothed);
  const auto per_image = image_labels(back);
  CHECK(per_image.at("x").source() == "aggregate");
  { std::ofstream(dir / "bare.csv") << "image_id,source,airplane,automobile,bird,cat,deer,dog,frog,horse,ship,truck\ny,h,0,0,0,1,0,0,0,0,0,0\n"; }
  CHECK(image_labels(read_label_csv(dir / "bare.csv", kSpace)).at("y")[3] == 1.0);
  { std::ofstream(dir / "bad.csv") << "image_id,source,cat\n"; }
  CHECK_THROWS_AS(read_label_csv(dir / "bad.csv", kSpace), SchemaError);
}

TEST_CASE("usage errors and missing files") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"compare", "only-one"}).code == kExitUsage);
  CHECK(run({"build-labels", "--pools", "x", "--bogus"}).code == kExitUsage);
  const auto missing = run({"compare", "/nonexistent/a.csv", "/nonexistent/b.csv"});
  CHECK(missing.code == kExitMissingFile);
  const auto err = json::parse(missing.err);
  CHECK(err.contains("error"));
  CHECK(err.contains("message"));
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("config errors") {
  const auto dir = oracle::tmp_dir("cli_config");
  { std::ofstream(dir / "c.json") << R"({"bogus": 1})"; }
  CHECK(run({"train", "--config", (dir / "c.json").string()}).code == kExitConfig);
  { std::ofstream(dir / "broken.json") << "{"; }
  CHECK(run({"train", "--config", (dir / "broken.json").string()}).code == kExitConfig);
}

TEST_CASE("simulate prints one row per M") {
  const auto dir = oracle::tmp_dir("cli_simulate");
  const std::vector<std::string> args{"simulate", "--worlds", "2", "--images", "30", "--agg", "ours",
                                      "--seed", "5", "--out", (dir / "a.csv").string()};
  REQUIRE(run(args).code == 0);
  const auto csv = slurp(dir / "a.csv");
  CHECK(lines(csv) == 8);
  CHECK(csv.rfind("M,aggregation,mean_distance,ci_low,ci_high\n", 0) == 0);
  auto again = args;
  again.back() = (dir / "b.csv").string();
  REQUIRE(run(again).code == 0);
  CHECK(slurp(dir / "b.csv") == csv);
  CHECK(run({"simulate", "--agg", "majority"}).code == kExitUsage);
}

TEST_CASE("ingest, build labels and compare") {
  const auto dir = emit_dataset("cli_pipeline");
  const auto ds = dir / "ds";
  for (const char* f : {"annotations.jsonl", "references.csv", "truth.csv", "features.json", "classes.json"})
    CHECK(fs::exists(ds / f));

  auto r = run({"ingest", "--annotations", (ds / "annotations.jsonl").string(), "--references",
                (ds / "references.csv").string(), "--out", (dir / "pools.json").string(), "--report",
                (dir / "qc.json").string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["sessions"] == 12);

  r = run({"build-labels", "--pools", (dir / "pools.json").string(), "--variety", "t2-clamp", "--out",
           (dir / "labels.csv").string()});
  REQUIRE(r.code == 0);
  const auto rows = read_label_csv(dir / "labels.csv", kSpace);
  // Six annotators and one aggregate per image.
  CHECK(rows.size() == 50 * 7);
  CHECK(std::count_if(rows.begin(), rows.end(), [](const LabelRow& l) { return l.source == kAggregateSource; }) == 50);

  r = run({"build-labels", "--pools", (dir / "pools.json").string(), "--variety", "t1-unif,t2-unif",
           "--out", (dir / "many").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "many" / "t1-unif.csv"));
  CHECK(fs::exists(dir / "many" / "t2-unif.csv"));

  r = run({"compare", (dir / "labels.csv").string(), (dir / "labels.csv").string(), "--out",
           (dir / "cmp.json").string()});
  REQUIRE(r.code == 0);
  const auto cmp = json::parse(slurp(dir / "cmp.json"));
  CHECK(cmp["mean_distance"] == 0.0);
  CHECK(cmp["entropy_pearson_r"].get<double>() == doctest::Approx(1.0));

  r = run({"compare", (dir / "labels.csv").string(), (ds / "truth.csv").string()});
  REQUIRE(r.code == 0);
  const auto vs_truth = json::parse(r.out);
  CHECK(vs_truth["common_images"] == 50);
  CHECK(vs_truth["mean_distance"].get<double>() < 0.2);
}

TEST_CASE("train, evaluate and export") {
  const auto dir = emit_dataset("cli_train");
  {
    // Last ten truth rows form the evaluation set.
    std::istringstream truth(slurp(dir / "ds" / "truth.csv"));
    std::vector<std::string> all;
    for (std::string line; std::getline(truth, line);) all.push_back(line);
    std::ofstream held(dir / "held.csv");
    held << all[0] << '\n';
    for (std::size_t i = all.size() - 10; i < all.size(); ++i) held << all[i] << '\n';
  }
  std::ofstream(dir / "exp.json") << json{{"features", "ds/features.json"},
                                          {"annotations", "ds/annotations.jsonl"},
                                          {"references", "ds/references.csv"},
                                          {"eval_sets", {{{"name", "held"}, {"labels", "held.csv"}}}},
                                          {"seeds", {0, 1}},
                                          {"hidden", {8}},
                                          {"schedule", {{"epochs", 2}, {"batch_size", 8}}},
                                          {"bin_size", 5}};
  auto r = run({"train", "--config", (dir / "exp.json").string(), "--out", (dir / "report.json").string(),
                "--csv", (dir / "report.csv").string(), "--models-dir", (dir / "models").string(), "--M", "3",
                "--mode", "deagg"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "models" / "model_seed_0.json"));
  const auto report = json::parse(slurp(dir / "report.json"));
  CHECK(report["seeds"].size() == 2);
  CHECK(report["time_seconds"].get<double>() == doctest::Approx(3 * 5 * 6.4));

  r = run({"evaluate", "--config", (dir / "exp.json").string(), "--models-dir", (dir / "models").string(),
           "--out", (dir / "again.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(slurp(dir / "again.json"))["metrics"] == report["metrics"]);

  r = run({"export-report", "--report", (dir / "report.json").string(), "--format", "csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("metric,name,value,ci_low,ci_high", 0) == 0);
}
