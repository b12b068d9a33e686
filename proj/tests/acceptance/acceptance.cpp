// Prints one PASS/FAIL/SKIP line per acceptance criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "softlabel/cli.hpp"
#include "softlabel/experiment.hpp"
#include "softlabel/ingest.hpp"
#include "softlabel/labelcore.hpp"
#include "softlabel/metrics.hpp"
#include "softlabel/model.hpp"
#include "softlabel/service.hpp"
#include "softlabel/simulator.hpp"
#include "softlabel/stats.hpp"
#include "softlabel/trainer.hpp"

using namespace softlabel;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Pass;
  std::string detail;
};

Verdict fail(std::string why) { return {Outcome::Fail, std::move(why)}; }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const LabelSpace kSpace = LabelSpace::cifar10();
const LabelVariety kElicited[] = {LabelVariety::T1Unif, LabelVariety::T1Clamp, LabelVariety::T2Unif,
                                  LabelVariety::T2Clamp, LabelVariety::SelectTop2};

// ---------------------------------------------------------------------------

Verdict simplex_suite() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> g(0.0, 0.4);
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto r = oracle::random_clean_record(rng, 10);
    const double gamma = g(rng);
    for (auto v : kElicited) {
      const auto l = construct_label(r, kSpace, v, {gamma});
      double s = 0.0;
      for (double p : l.probs()) {
        if (!(p >= 0.0 && p <= 1.0)) return fail("entry outside [0,1]");
        s += p;
      }
      worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
      if (worst_sum > 1e-9) return fail(fmt("sum off by %.3g", worst_sum));
      if (v == LabelVariety::T1Clamp || v == LabelVariety::T2Clamp)
        for (ClassIndex k : r.definitely_not)
          if (l[k] != 0.0) return fail("clamp put mass on a definitely-not class");
    }
  }
  return {Outcome::Pass, "50000 labels, max |sum-1| " + fmt("%.2g", worst_sum)};
}

Verdict recovery_identities() {
  std::mt19937_64 rng(102);
  std::size_t cases = 0;
  for (std::size_t M = 1; M <= 8; ++M) {
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<std::int64_t> counts(10, 0);
      std::vector<SoftLabel> members;
      for (std::size_t m = 0; m < M; ++m) {
        const ClassIndex k = std::uniform_int_distribution<ClassIndex>(0, 9)(rng);
        ++counts[k];
        members.push_back(hard_label(k, kSpace));
      }
      if (aggregate_mean(members).vector() != multi_aggregate(counts).vector())
        return fail("mean of one-hots differs from vote frequencies at M=" + std::to_string(M));
      ++cases;
    }
  }
  // A single fully confident T1 report is the hard label.
  for (ClassIndex k = 0; k < 10; ++k) {
    for (int trial = 0; trial < 100; ++trial) {
      auto r = oracle::random_clean_record(rng, 10);
      r.top1 = k;
      r.p1 = 100.0;
      r.top2.reset();
      r.p2.reset();
      r.definitely_not.erase(k);
      const auto hard = hard_label(k, kSpace).vector();
      if (construct_label(r, kSpace, LabelVariety::T1Unif, {0.1}).vector() != hard)
        return fail("T1-Unif at p1=100 is not one-hot");
      if (construct_label(r, kSpace, LabelVariety::T1Clamp, {0.0}).vector() != hard)
        return fail("T1-Clamp at p1=100, gamma=0 is not one-hot");
      const std::vector<SoftLabel> one{construct_label(r, kSpace, LabelVariety::T1Unif, {0.1})};
      if (aggregate_mean(one).vector() != hard) return fail("M=1 aggregate is not the hard label");
      ++cases;
    }
  }
  return {Outcome::Pass, std::to_string(cases) + " cases, exact equality"};
}

Verdict time_model() {
  const std::pair<LabelVariety, double> want[] = {{LabelVariety::T1Unif, 76.8},
                                                  {LabelVariety::T1Clamp, 115.2},
                                                  {LabelVariety::T2Unif, 153.6},
                                                  {LabelVariety::T2Clamp, 192.0}};
  std::string got;
  for (auto [v, seconds] : want) {
    const double t = estimate_time(6, v);
    got += fmt("%.17g ", t);
    if (t != seconds) return fail(to_string(v) + " gives " + fmt("%.17g", t));
  }
  return {Outcome::Pass, "M=6: " + got + "(exact)"};
}

Verdict gradient_oracle() {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::gamma_distribution<double> g(0.5, 1.0);
  const std::vector<std::vector<std::size_t>> shapes{{}, {8}, {12, 6}, {5, 5, 5}};
  int checked = 0;
  int skipped = 0;
  double worst = 0.0;
  for (int trial = 0; checked < 120; ++trial) {
    const std::size_t d = 3 + trial % 6;
    const std::size_t K = 2 + trial % 9;
    auto model = MicroModel::initialized(d, shapes[trial % shapes.size()], K, 1000 + trial);
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
    if (oracle::near_kink(model, x, 1e-3)) {
      ++skipped;
      continue;
    }
    std::vector<double> target(K);
    double s = 0.0;
    for (auto& t : target) s += (t = g(rng));
    for (auto& t : target) t /= s;
    const auto exact = backward(model, x, target);
    const auto fd = oracle::finite_differences(model, x, target, 1e-5);
    for (std::size_t l = 0; l < fd.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < fd.layers[l].weights.size(); ++i)
        worst = std::max(worst, oracle::rel_error(exact.layers[l].weights.data()[i], fd.layers[l].weights.data()[i]));
      for (Eigen::Index i = 0; i < fd.layers[l].bias.size(); ++i)
        worst = std::max(worst, oracle::rel_error(exact.layers[l].bias[i], fd.layers[l].bias[i]));
    }
    for (Eigen::Index i = 0; i < x.size(); ++i)
      worst = std::max(worst, oracle::rel_error(exact.input[i], fd.input[i]));
    ++checked;
  }
  const std::string detail = std::to_string(checked) + " instances (" + std::to_string(skipped) +
                             " near a ReLU kink redrawn), max rel error " + fmt("%.2e", worst);
  if (worst >= 1e-4) return fail(detail);
  return {Outcome::Pass, detail};
}

Verdict linearity_bridge() {
  std::mt19937_64 rng(105);
  std::gamma_distribution<double> g(1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t M = 1 + trial % 12;
    std::vector<SoftLabel> members;
    for (std::size_t m = 0; m < M; ++m)
      members.push_back(construct_label(oracle::random_clean_record(rng, 10), kSpace,
                                        kElicited[(trial + m) % 5], {0.1}));
    std::vector<double> p(10);
    double s = 0.0;
    for (auto& v : p) s += (v = g(rng));
    for (auto& v : p) v /= s;
    const double lhs = cross_entropy(p, aggregate_mean(members).probs());
    double rhs = 0.0;
    for (const auto& l : members) rhs += cross_entropy(p, l.probs());
    rhs /= static_cast<double>(M);
    worst = std::max(worst, std::fabs(lhs - rhs));
  }
  const std::string detail = "2000 pools, max |CE(p,mean) - mean CE| " + fmt("%.2e", worst);
  if (worst > 1e-9) return fail(detail);
  return {Outcome::Pass, detail};
}

Verdict metric_oracles() {
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::fabs(got - want)); };
  track(entropy(baseline_label(BaselineKind::Uniform, kSpace, 0)), std::log(10.0));
  for (ClassIndex i = 0; i < 10; ++i)
    for (ClassIndex j = 0; j < 10; ++j)
      if (i != j) track(label_distance(hard_label(i, kSpace), hard_label(j, kSpace)), 1.0);
  std::vector<double> a(10, 0.0), b(10, 0.0);
  a[0] = 0.7, a[1] = 0.3, b[0] = 0.5, b[1] = 0.5;
  track(label_distance(a, b), 0.2);
  const std::vector<double> xs{1, 2, 3}, ys{1, 2, 4};
  track(pearson_r(xs, ys), 3.0 / std::sqrt(2.0 * (14.0 / 3.0)));
  const std::vector<double> p{0.7, 0.3}, e{0.5, 0.5};
  track(cross_entropy(p, e), -(0.5 * std::log(0.7) + 0.5 * std::log(0.3)));

  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 10 + trial % 40;
    const double conf = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    const int correct = std::uniform_int_distribution<int>(0, n)(rng);
    std::vector<std::vector<double>> preds(n, std::vector<double>(10, (1.0 - conf) / 9.0));
    std::vector<SoftLabel> evals;
    for (int i = 0; i < n; ++i) {
      preds[i][0] = conf;
      evals.push_back(hard_label(i < correct ? 0 : 1, kSpace));
    }
    const double acc = static_cast<double>(correct) / n;
    track(calibration_rmse(preds, evals, static_cast<std::size_t>(n)), std::fabs(conf - acc));
    std::vector<double> r1(12), r2(12);
    for (int i = 0; i < 12; ++i) {
      r1[i] = std::normal_distribution<double>()(rng);
      r2[i] = std::normal_distribution<double>()(rng);
    }
    track(pearson_r(r1, r2), oracle::pearson(r1, r2));
    std::vector<double> q(10);
    double s = 0.0;
    for (auto& v : q) s += (v = std::gamma_distribution<double>(0.3, 1.0)(rng));
    for (auto& v : q) v /= s;
    track(entropy(q), oracle::entropy(q));
    track(label_distance(q, a), oracle::tv(q, a));
  }
  const std::string detail = "max abs error " + fmt("%.2e", worst);
  if (worst > 1e-9) return fail(detail);
  return {Outcome::Pass, detail};
}

Verdict simulator_ordering() {
  SweepSpec spec;
  spec.M_values = {1, 2, 4, 6, 8, 16, 32, 51};
  spec.world_seeds = 50;
  spec.seed = 2024;
  const auto res = run_sweep(spec);
  const auto& multi = res.per_seed.at(Aggregation::Multi);
  const auto& ours = res.per_seed.at(Aggregation::Ours);
  const std::size_t i6 = 3, i51 = 7;
  double ours6 = 0.0, multi51 = 0.0;
  for (std::size_t w = 0; w < spec.world_seeds; ++w) {
    ours6 += ours[w][i6] / spec.world_seeds;
    multi51 += multi[w][i51] / spec.world_seeds;
  }
  std::string detail = "OURS@6 " + fmt("%.4f", ours6) + " vs MULTI@51 " + fmt("%.4f", multi51);
  if (!(ours6 <= multi51)) return fail(detail);
  // Non-increasing: no consecutive step is significantly upward.
  for (const auto* curve : {&multi, &ours}) {
    const char* name = curve == &multi ? "multi" : "ours";
    for (std::size_t i = 0; i + 1 < spec.M_values.size(); ++i) {
      std::vector<double> diff;
      for (std::size_t w = 0; w < spec.world_seeds; ++w) diff.push_back((*curve)[w][i + 1] - (*curve)[w][i]);
      const double lb = paired_lower_bound(diff);
      if (lb > 0.0)
        return fail(detail + "; " + name + " rises from M=" + std::to_string(spec.M_values[i]) +
                    " to M=" + std::to_string(spec.M_values[i + 1]) + " (95% lower bound " +
                    fmt("%.4g", lb) + ")");
    }
  }
  // Smallest OURS M that matches MULTI@51.
  std::size_t match = 0;
  for (std::size_t i = 0; i < spec.M_values.size() && !match; ++i) {
    double m = 0.0;
    for (std::size_t w = 0; w < spec.world_seeds; ++w) m += ours[w][i] / spec.world_seeds;
    if (m <= multi51) match = spec.M_values[i];
  }
  return {Outcome::Pass, detail + "; OURS reaches MULTI@51 at M=" + std::to_string(match) + " (" +
                             fmt("%.1f", 51.0 / match) + "x fewer); both curves non-increasing"};
}

Verdict training_ordering() {
  // Ambiguous synthetic world; the last 300 images are held out with their
  // latent distributions as evaluation labels.
  WorldSpec ws;
  ws.images = 600;
  ws.seed = 7;
  const World world = make_world(ws);
  const AnnotatorModel annotators;
  const auto sessions = simulate_sessions(world, kSpace, annotators, 6, 25, ws.seed);
  const auto features = synthetic_features(world, FeatureSpec{32, 0.3, ws.seed});
  ReferenceLabels refs;
  for (std::size_t n = 0; n < world.size(); ++n)
    refs[synthetic_image_id(n)] = {SoftLabel(world.truths[n], LabelVariety::OursAgg, "t").argmax(), {}};
  const auto qc = apply_qc(sessions, refs);
  const auto pools = build_pools(qc.kept, kSpace, LabelVariety::T2Clamp, {0.1});

  std::vector<TrainExample> train;
  EvalSet eval{"heldout", {}};
  for (std::size_t n = 0; n < world.size(); ++n) {
    const auto id = synthetic_image_id(n);
    if (n < 300)
      train.push_back({id, features.row(n), pools.at(id), refs.at(id).hard});
    else
      eval.entries.push_back({id, features.row(n), SoftLabel(world.truths[n], LabelVariety::OursAgg, "truth")});
  }

  ExperimentConfig base;
  base.hidden = {128, 128};
  base.seeds = {0, 1, 2, 3, 4};
  base.schedule.epochs = 150;
  base.schedule.batch_size = 32;
  base.schedule.lr0 = 0.1;
  base.schedule.drop_epochs = {120, 135};
  base.schedule.lr_drop_factor = 0.1;
  base.schedule.weight_decay = 0.0;
  base.range = features.range();

  auto soft = base;
  soft.regime.mode = TargetMode::Deaggregated;
  soft.regime.m_subsample = 6;
  auto hard = base;
  hard.regime.baseline = Baseline::Hard;
  auto smooth = base;
  smooth.regime.baseline = Baseline::Smoothed;
  smooth.regime.beta = 0.05;

  const auto r_soft = run_experiment(soft, train, {eval});
  const auto r_hard = run_experiment(hard, train, {eval});
  const auto r_smooth = run_experiment(smooth, train, {eval});
  const auto& ce_soft = r_soft.find("soft_ce", "heldout")->per_seed;
  const auto& ce_hard = r_hard.find("soft_ce", "heldout")->per_seed;
  const auto& cal_hard = r_hard.find("calibration_rmse", "heldout")->per_seed;
  const auto& cal_smooth = r_smooth.find("calibration_rmse", "heldout")->per_seed;
  int ce_wins = 0, cal_wins = 0;
  for (std::size_t s = 0; s < 5; ++s) {
    ce_wins += ce_soft[s] < ce_hard[s];
    cal_wins += cal_smooth[s] < cal_hard[s];
  }
  const std::string detail =
      "soft CE lower in " + std::to_string(ce_wins) + "/5 seeds (mean " +
      fmt("%.3f", r_soft.find("soft_ce", "heldout")->summary.mean) + " vs " +
      fmt("%.3f", r_hard.find("soft_ce", "heldout")->summary.mean) + "); smoothing calibration better in " +
      std::to_string(cal_wins) + "/5 (mean " +
      fmt("%.3f", r_smooth.find("calibration_rmse", "heldout")->summary.mean) + " vs " +
      fmt("%.3f", r_hard.find("calibration_rmse", "heldout")->summary.mean) + ")";
  if (ce_wins < 4 || cal_wins < 3) return fail(detail);
  return {Outcome::Pass, detail};
}

// Label matrix CSV, or a reference CSV with per-class vote counts.
std::map<std::string, SoftLabel> load_any_labels(const std::string& path) {
  try {
    return image_labels(read_label_csv(path, kSpace));
  } catch (const SchemaError&) {
    std::map<std::string, SoftLabel> out;
    for (const auto& [id, ref] : parse_references(path, kSpace)) {
      if (!ref.counts) throw SchemaError("counts", path + " has no vote counts");
      out.emplace(id, multi_aggregate(*ref.counts));
    }
    return out;
  }
}

Verdict dataset_check() {
  const char* ours = std::getenv("SOFTLABEL_CIFAR10S_LABELS");
  const char* theirs = std::getenv("SOFTLABEL_CIFAR10H_LABELS");
  if (!ours || !theirs || !std::filesystem::exists(ours) || !std::filesystem::exists(theirs))
    return {Outcome::Skip,
            "set SOFTLABEL_CIFAR10S_LABELS and SOFTLABEL_CIFAR10H_LABELS to the released label files"};
  const auto rep = compare_label_sets(load_any_labels(ours), load_any_labels(theirs));
  if (!rep.entropy_pearson_r) return fail("entropy correlation undefined");
  const double r = *rep.entropy_pearson_r;
  const std::string detail = std::to_string(rep.common_images) + " images, entropy r " + fmt("%.3f", r) +
                             " (target 0.596 +/- 0.05), mean distance " + fmt("%.4f", rep.mean_distance) +
                             " (reported 0.028; depends on the ground metric, not asserted)";
  if (std::fabs(r - 0.596) > 0.05) return fail(detail);
  return {Outcome::Pass, detail};
}

Verdict qc_determinism() {
  std::mt19937_64 rng(110);
  ReferenceLabels refs;
  for (int k = 0; k < 25; ++k) refs["img_" + std::to_string(k)] = {static_cast<ClassIndex>(k % 10), {}};
  std::vector<RawSubmission> subs;
  for (int a = 0; a < 200; ++a) {
    RawSubmission s;
    s.annotator_id = "ann_" + std::to_string(a);
    s.batch_id = "batch_" + std::to_string(a % 8);
    const double sloppiness = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    const double skill = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
    for (int k = 0; k < 25; ++k) {
      auto r = oracle::random_clean_record(rng, 10);
      r.image_id = "img_" + std::to_string(k);
      r.annotator_id = s.annotator_id;
      if (std::bernoulli_distribution(skill)(rng)) {
        r.top1 = k % 10;
        if (r.top2 == r.top1) r.top2.reset(), r.p2.reset();
        r.definitely_not.erase(r.top1);
      }
      if (std::bernoulli_distribution(sloppiness)(rng)) r.p1 = 100.0 + std::uniform_int_distribution<int>(1, 50)(rng);
      if (std::bernoulli_distribution(sloppiness / 2)(rng)) r.definitely_not.insert(r.top1);
      if (std::bernoulli_distribution(sloppiness / 2)(rng)) r.p1.reset();
      s.responses.push_back(std::move(r));
    }
    subs.push_back(std::move(s));
  }
  auto canonical = [](std::vector<RawSubmission> v) {
    std::sort(v.begin(), v.end(),
              [](const RawSubmission& a, const RawSubmission& b) { return a.annotator_id < b.annotator_id; });
    return v;
  };
  const auto base = apply_qc(subs, refs);
  const auto expected = canonical(base.kept);
  if (apply_qc(base.kept, refs).kept != base.kept) return fail("second pass changed the kept set");
  std::map<std::string, bool> verdicts;
  for (const auto& v : base.verdicts) verdicts[v.annotator_id] = v.kept;
  auto order = subs;
  for (int replay = 0; replay < 1000; ++replay) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto res = apply_qc(order, refs);
    if (canonical(res.kept) != expected) return fail("kept set depends on order (replay " + std::to_string(replay) + ")");
    for (const auto& v : res.verdicts)
      if (verdicts.at(v.annotator_id) != v.kept) return fail("verdict depends on order");
    if (replay % 100 == 0 && apply_qc(res.kept, refs).kept != res.kept) return fail("not idempotent");
  }
  return {Outcome::Pass, "200 sessions, " + std::to_string(expected.size()) +
                             " kept, identical over 1000 shuffled replays"};
}

Verdict round_trip() {
  std::vector<BatchPlan> plans;
  for (int b = 0; b < 4; ++b) {
    BatchPlan p;
    p.batch_id = "batch_" + std::to_string(b);
    for (int i = 0; i < 25; ++i) p.image_ids.push_back(synthetic_image_id(b * 25 + i));
    plans.push_back(p);
  }
  ServiceConfig cfg;
  cfg.data_dir = oracle::tmp_dir("acceptance_round_trip");
  cfg.seed = 99;
  ElicitationService service(kSpace, plans, cfg);

  std::mt19937_64 rng(111);
  std::vector<RawSubmission> sent;
  for (int n = 0; n < 100; ++n) {
    const auto session = service.create_session("worker_" + std::to_string(n));
    RawSubmission direct;
    direct.annotator_id = session.annotator_id;
    direct.batch_id = session.batch_id;
    direct.client_metadata = {{"viewport", n}};
    nlohmann::json responses = nlohmann::json::array();
    for (std::size_t slot = 0; slot < session.presented_order.size(); ++slot) {
      auto r = oracle::random_clean_record(rng, 10);
      r.image_id = session.presented_order[slot];
      r.annotator_id = session.annotator_id;
      r.elapsed_seconds = std::uniform_real_distribution<double>(1.0, 60.0)(rng);
      r.is_repeat = session.is_repeat_slot(slot);
      auto j = record_to_json(r, kSpace);
      j.erase("is_repeat");
      responses.push_back(j);
      direct.responses.push_back(r);
    }
    service.submit(session.session_id, {{"responses", responses}, {"client_metadata", direct.client_metadata}});
    sent.push_back(std::move(direct));
  }

  std::istringstream in(service.export_dataset());
  const auto parsed = parse_annotations(in, kSpace);
  if (!parsed.errors.empty()) return fail("export has unparsable lines");
  if (parsed.submissions != sent) return fail("parsed sessions differ from what was submitted");
  for (auto v : {LabelVariety::T2Clamp, LabelVariety::T1Unif}) {
    PoolBuildStats a, b;
    const auto from_export = build_pools(parsed.submissions, kSpace, v, {0.1}, &a);
    const auto from_memory = build_pools(sent, kSpace, v, {0.1}, &b);
    if (from_export.size() != from_memory.size()) return fail("pool count differs");
    for (const auto& [id, pool] : from_memory) {
      const auto& other = from_export.at(id);
      if (!(other.per_annotator == pool.per_annotator) || !(other.aggregate == pool.aggregate))
        return fail("pool for " + id + " differs");
    }
    if (a.records_used != 100 * 25 || a.repeats_skipped != 100 * 2)
      return fail("unexpected pool statistics");
  }
  return {Outcome::Pass, "100 sessions, 2700 records, pools identical"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
    double budget_seconds;
  };
  const std::vector<Criterion> criteria{
      {"simplex suite", simplex_suite, 5},
      {"recovery identities", recovery_identities, 0},
      {"time model reproduction", time_model, 0},
      {"gradient oracle", gradient_oracle, 30},
      {"target linearity bridge", linearity_bridge, 0},
      {"metric oracles", metric_oracles, 0},
      {"simulator efficiency ordering", simulator_ordering, 120},
      {"desk-scale training ordering", training_ordering, 600},
      {"dataset-contingent comparison", dataset_check, 0},
      {"QC determinism", qc_determinism, 0},
      {"export round trip", round_trip, 0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (v.outcome != Outcome::Skip && c.budget_seconds > 0 && secs > c.budget_seconds) {
      v.outcome = Outcome::Fail;
      v.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::printf("%s  %-32s %7.2fs  %s\n", tag, c.name, secs, v.detail.c_str());
    std::fflush(stdout);
    failures += v.outcome == Outcome::Fail;
  }
  return failures == 0 ? 0 : 1;
}
