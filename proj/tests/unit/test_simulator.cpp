#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "softlabel/ingest.hpp"
#include "softlabel/metrics.hpp"
#include "softlabel/simulator.hpp"

using namespace softlabel;

namespace {

WorldSpec small_world(std::uint64_t seed) {
  WorldSpec w;
  w.images = 50;
  w.seed = seed;
  return w;
}

}  // namespace

TEST_CASE("world entropy mix") {
  const auto world = make_world(small_world(1));
  CHECK(world.size() == 50);
  const auto low = std::count(world.low_entropy.begin(), world.low_entropy.end(), true);
  CHECK(low == 6);
  for (std::size_t n = 0; n < world.size(); ++n) {
    const auto& q = world.truths[n];
    CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0));
    const double h = oracle::entropy(q);
    if (world.low_entropy[n])
      CHECK(h <= 0.10);
    else
      CHECK(h >= 0.25);
  }
  const auto again = make_world(small_world(1));
  CHECK(again.truths == world.truths);
  CHECK(make_world(small_world(2)).truths != world.truths);
}

TEST_CASE("percepts") {
  const auto world = make_world(small_world(3));
  AnnotatorModel m;
  const auto p = sample_percept(world, 4, 2, m, 9);
  CHECK(p == sample_percept(world, 4, 2, m, 9));
  CHECK(p != sample_percept(world, 4, 3, m, 9));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  for (std::size_t k = 0; k < p.size(); ++k)
    if (world.truths[4][k] == 0.0) CHECK(p[k] == 0.0);
  m.concentration = kNoiseless;
  CHECK(sample_percept(world, 4, 2, m, 9) == world.truths[4]);
  m.concentration = 1e6;
  for (std::size_t n = 0; n < 10; ++n)
    CHECK(oracle::tv(sample_percept(world, n, 0, m, 1), world.truths[n]) < 0.01);
}

TEST_CASE("annotator model validation") {
  AnnotatorModel m;
  CHECK_NOTHROW(m.validate());
  m.quantization = 7;
  CHECK_THROWS(m.validate());
  m.quantization = 0;
  m.concentration = -1;
  CHECK_THROWS(m.validate());
}

TEST_CASE("reports") {
  const std::vector<double> near{0.51, 0.49};
  CHECK(hard_report(near) == 0);
  const std::vector<double> tie{0.4, 0.4, 0.2};
  CHECK(hard_report(tie) == 0);

  AnnotatorModel m;
  m.exclusion_threshold = 0.03;
  std::vector<double> percept(10, 0.0);
  percept[0] = 0.70;
  percept[1] = 0.20;
  percept[2] = percept[3] = 0.05;
  const auto r = soft_report(m, percept, "img", "ann");
  CHECK(r.top1 == 0);
  CHECK(*r.p1 == 70);
  CHECK(*r.top2 == 1);
  CHECK(*r.p2 == 20);
  CHECK(r.definitely_not == std::set<ClassIndex>{4, 5, 6, 7, 8, 9});
  CHECK(r.image_id == "img");
  CHECK(record_violations(r).empty());

  percept.assign(10, 0.0);
  percept[5] = 0.987;
  percept[6] = 0.013;
  const auto single = soft_report(m, percept);
  CHECK(single.top1 == 5);
  CHECK(*single.p1 == 100);
  CHECK_FALSE(single.top2.has_value());
  CHECK(single.definitely_not.count(6) == 1);
  CHECK(record_violations(single).empty());

  m.behavior = ReporterBehavior::HardMode;
  CHECK(std::get<ClassIndex>(report(m, percept)) == 5);
}

TEST_CASE("noiseless OURS recovers the truth exactly") {
  const auto world = make_world(small_world(4));
  AnnotatorPool pool;
  pool.size = 8;
  pool.model.concentration = kNoiseless;
  pool.model.quantization = 0;
  pool.model.exclusion_threshold = 0.0;
  const std::vector<std::size_t> Ms{1, 3, 8};
  // With no exclusions the reserve would be spread; it must be zero here.
  for (const auto& pt : efficiency_curve(world, pool, Ms, Aggregation::Ours, {0.0}, 5)) {
    // Three-class truths lose their smallest entry to the two-slot report.
    double worst = 0.0;
    for (const auto& q : world.truths) {
      std::vector<double> s = q;
      std::sort(s.begin(), s.end(), std::greater<>());
      worst += std::accumulate(s.begin() + 2, s.end(), 0.0);
    }
    CHECK(pt.mean_distance <= worst / world.size() + 1e-12);
  }
}

TEST_CASE("noiseless OURS is exact on two-class truths") {
  auto spec = small_world(5);
  spec.three_class_fraction = 0.0;
  const auto world = make_world(spec);
  AnnotatorPool pool;
  pool.size = 4;
  pool.model.concentration = kNoiseless;
  pool.model.quantization = 0;
  pool.model.exclusion_threshold = 0.0;
  const std::vector<std::size_t> Ms{1, 4};
  for (const auto& pt : efficiency_curve(world, pool, Ms, Aggregation::Ours, {0.0}, 5))
    CHECK(pt.mean_distance == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("MULTI at M=1 matches the one-hot oracle") {
  const auto world = make_world(small_world(6));
  AnnotatorPool pool;
  pool.size = 3;
  pool.model.behavior = ReporterBehavior::HardMode;
  const std::vector<std::size_t> Ms{1};
  const auto pts = efficiency_curve(world, pool, Ms, Aggregation::Multi, {}, 11);
  double expected = 0.0;
  for (std::size_t n = 0; n < world.size(); ++n) {
    const auto percept = sample_percept(world, n, 0, pool.model, 11);
    std::vector<double> hot(world.spec.classes, 0.0);
    hot[hard_report(percept)] = 1.0;
    expected += oracle::tv(hot, world.truths[n]);
  }
  CHECK(pts[0].mean_distance == doctest::Approx(expected / world.size()).epsilon(1e-12));
}

TEST_CASE("efficiency curve errors") {
  const auto world = make_world(small_world(7));
  AnnotatorPool pool;
  pool.size = 4;
  const std::vector<std::size_t> too_many{5}, zero{0};
  CHECK_THROWS_AS(efficiency_curve(world, pool, too_many, Aggregation::Ours, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(efficiency_curve(world, pool, zero, Aggregation::Multi, {}, 1), std::invalid_argument);
}

TEST_CASE("sweep") {
  SweepSpec spec;
  spec.world.images = 40;
  spec.world_seeds = 3;
  spec.pool.size = 8;
  spec.M_values = {1, 2, 8};
  spec.seed = 2;
  const auto res = run_sweep(spec);
  CHECK(res.rows.size() == 6);
  CHECK(res.per_seed.at(Aggregation::Ours).size() == 3);
  CHECK(res.per_seed.at(Aggregation::Ours)[0].size() == 3);
  const auto csv = to_csv(res);
  CHECK(csv.rfind("M,aggregation,mean_distance,ci_low,ci_high\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(to_csv(run_sweep(spec)) == csv);
  CHECK(parse_aggregation(to_string(Aggregation::Ours)) == Aggregation::Ours);
}

TEST_CASE("simulated sessions are valid exports") {
  const auto world = make_world(small_world(8));
  const auto space = synthetic_space(10);
  CHECK(space == LabelSpace::cifar10());
  CHECK(synthetic_space(3).name(2) == "class_2");
  const auto subs = simulate_sessions(world, space, {}, 3, 25, 4);
  CHECK(subs.size() == 2 * 3);
  std::map<std::string, int> coverage;
  for (const auto& s : subs) {
    CHECK(submission_from_json(submission_to_json(s, space), space) == s);
    int repeats = 0;
    for (const auto& r : s.responses) {
      if (r.is_repeat)
        ++repeats;
      else
        ++coverage[r.image_id];
    }
    CHECK(repeats == 2);
  }
  CHECK(coverage.size() == 50);
  for (const auto& [id, c] : coverage) CHECK(c == 3);
  CHECK(synthetic_image_id(7) == "img_00007");
}

TEST_CASE("synthetic features") {
  const auto world = make_world(small_world(9));
  const auto f = synthetic_features(world, {8, 0.1, 3});
  CHECK(f.size() == 50);
  CHECK(f.dim() == 8);
  CHECK(f.matrix().minCoeff() >= 0.0);
  CHECK(f.matrix().maxCoeff() <= 1.0);
  CHECK(f.image_ids()[0] == synthetic_image_id(0));
  CHECK(synthetic_features(world, {8, 0.1, 3}).matrix() == f.matrix());
}
