#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "softlabel/metrics.hpp"
#include "softlabel/stats.hpp"

using namespace softlabel;

namespace {

const LabelSpace kSpace = LabelSpace::cifar10();

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t K) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> p(K);
  double s = 0.0;
  for (auto& v : p) s += (v = g(rng));
  for (auto& v : p) v /= s;
  return p;
}

SoftLabel two(double a) {
  std::vector<double> p(10, 0.0);
  p[0] = a;
  p[1] = 1.0 - a;
  return SoftLabel(p, LabelVariety::OursAgg, "x");
}

}  // namespace

TEST_CASE("entropy") {
  CHECK(entropy(baseline_label(BaselineKind::Uniform, kSpace, 0)) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(entropy(hard_label(4, kSpace)) == 0.0);
  const std::vector<double> half{0.5, 0.5};
  CHECK(entropy(half, 2.0) == doctest::Approx(1.0));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_simplex(rng, 10);
    CHECK(entropy(p) == doctest::Approx(oracle::entropy(p)).epsilon(1e-12));
  }
}

TEST_CASE("label distance") {
  CHECK(label_distance(two(0.7), two(0.5)) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(label_distance(two(0.7), two(0.7)) == 0.0);
  CHECK(label_distance(hard_label(1, kSpace), hard_label(2, kSpace)) == 1.0);
  const std::vector<double> a{0.5, 0.5}, b{1.0};
  CHECK_THROWS(label_distance(a, b));
}

TEST_CASE("label distance is a metric") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_simplex(rng, 10), b = random_simplex(rng, 10), c = random_simplex(rng, 10);
    CHECK(label_distance(a, b) == label_distance(b, a));
    CHECK(label_distance(a, a) <= 1e-12);
    CHECK(label_distance(a, c) <= label_distance(a, b) + label_distance(b, c) + 1e-12);
    CHECK(label_distance(a, b) == doctest::Approx(oracle::tv(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3}, y{1, 2, 4}, neg{-1, -2, -3};
  CHECK(pearson_r(x, x) == doctest::Approx(1.0));
  CHECK(pearson_r(x, neg) == doctest::Approx(-1.0));
  CHECK(pearson_r(x, y) == doctest::Approx(0.9820).epsilon(1e-4));
  CHECK(pearson_r(x, y) == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-12));
  const std::vector<double> flat{2, 2, 2}, one{1};
  CHECK_THROWS(pearson_r(x, flat));
  CHECK_THROWS(pearson_r(one, one));
  CHECK_THROWS(pearson_r(x, one));
}

TEST_CASE("cross entropy") {
  const std::vector<double> p{0.7, 0.3}, e{0.5, 0.5};
  CHECK(cross_entropy(p, e) == doctest::Approx(0.7803).epsilon(1e-4));
  CHECK(cross_entropy(p, e) == doctest::Approx(oracle::ce(p, e)).epsilon(1e-12));
  const auto hot = hard_label(3, kSpace);
  CHECK(cross_entropy(hot.probs(), hot.probs()) == 0.0);
  const auto u = baseline_label(BaselineKind::Uniform, kSpace, 0);
  CHECK(cross_entropy(u.probs(), hot.probs()) == doctest::Approx(std::log(10.0)));
  // Confident miss stays finite thanks to the floor.
  CHECK(cross_entropy(hard_label(0, kSpace).probs(), hot.probs()) ==
        doctest::Approx(-std::log(1e-12)));
  std::vector<double> p10(10, 0.0);
  p10[0] = 0.7;
  p10[1] = 0.3;
  CHECK(soft_cross_entropy({p10, p10}, {two(0.5), two(0.5)}) == doctest::Approx(0.7803).epsilon(1e-4));
  CHECK_THROWS(soft_cross_entropy({p}, {}));
}

TEST_CASE("cross entropy is minimized at the target and linear in it") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto e = random_simplex(rng, 10);
    const double at = cross_entropy(e, e);
    CHECK(at == doctest::Approx(oracle::entropy(e)).epsilon(1e-9));
    auto q = e;
    q[0] += 0.01;
    q[1] = std::max(q[1] - 0.01, 0.0);
    double s = 0;
    for (double v : q) s += v;
    for (double& v : q) v /= s;
    CHECK(cross_entropy(q, e) >= at - 1e-12);
    const auto p = random_simplex(rng, 10), e2 = random_simplex(rng, 10);
    std::vector<double> mid(10);
    for (int k = 0; k < 10; ++k) mid[k] = 0.5 * (e[k] + e2[k]);
    CHECK(cross_entropy(p, mid) ==
          doctest::Approx(0.5 * (cross_entropy(p, e) + cross_entropy(p, e2))).epsilon(1e-12));
  }
}

TEST_CASE("calibration") {
  auto pred = [](double c) {
    std::vector<double> p(10, (1.0 - c) / 9.0);
    p[0] = c;
    return p;
  };
  SUBCASE("single bin closed form") {
    std::vector<std::vector<double>> preds(10, pred(0.9));
    std::vector<SoftLabel> evals;
    for (int i = 0; i < 10; ++i) evals.push_back(hard_label(i < 5 ? 0 : 1, kSpace));
    CHECK(calibration_rmse(preds, evals, 10) == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("confident and correct") {
    std::vector<std::vector<double>> preds(7, hard_label(2, kSpace).vector());
    std::vector<SoftLabel> evals(7, hard_label(2, kSpace));
    CHECK(calibration_rmse(preds, evals, 3) == 0.0);
  }
  SUBCASE("half confidence, half correct in each bin") {
    std::vector<double> half(10, 0.0);
    half[0] = half[1] = 0.5;
    std::vector<std::vector<double>> preds(8, half);
    std::vector<SoftLabel> evals;
    for (int i = 0; i < 8; ++i) evals.push_back(hard_label(i % 2, kSpace));
    CHECK(calibration_rmse(preds, evals, 2) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("last bin absorbs the remainder") {
    std::vector<std::vector<double>> preds{pred(0.2), pred(0.4), pred(0.6), pred(0.8), pred(1.0)};
    std::vector<SoftLabel> evals(5, hard_label(0, kSpace));
    // Bins {.2,.4} and {.6,.8,1.0}; all correct.
    const double want = std::sqrt(2.0 / 5 * 0.7 * 0.7 + 3.0 / 5 * 0.2 * 0.2);
    CHECK(calibration_rmse(preds, evals, 2) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("order invariance and errors") {
    std::mt19937_64 rng(8);
    std::vector<std::vector<double>> preds;
    std::vector<SoftLabel> evals;
    for (int i = 0; i < 250; ++i) {
      preds.push_back(random_simplex(rng, 10));
      evals.push_back(SoftLabel::normalized(random_simplex(rng, 10), LabelVariety::OursAgg, "x"));
    }
    const double base = calibration_rmse(preds, evals, 100);
    std::vector<std::size_t> order(250);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int t = 0; t < 5; ++t) {
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::vector<double>> p2;
      std::vector<SoftLabel> e2;
      for (auto i : order) {
        p2.push_back(preds[i]);
        e2.push_back(evals[i]);
      }
      CHECK(calibration_rmse(p2, e2, 100) == base);
    }
    CHECK_THROWS(calibration_rmse(preds, evals, 0));
    CHECK_THROWS(calibration_rmse(preds, evals, 300));
  }
}

TEST_CASE("time model") {
  CHECK(estimate_time(6, LabelVariety::T1Unif) == 76.8);
  CHECK(estimate_time(6, LabelVariety::T1Clamp) == 115.2);
  CHECK(estimate_time(6, LabelVariety::T2Unif) == 153.6);
  CHECK(estimate_time(6, LabelVariety::T2Clamp) == 192.0);
  CHECK(estimate_time(51, LabelVariety::Hard) == 91.8);
  CHECK(estimate_time(12, LabelVariety::T2Clamp) == 2 * estimate_time(6, LabelVariety::T2Clamp));
  CHECK_THROWS(estimate_time(0, LabelVariety::T2Clamp));
  CHECK_THROWS(estimate_time(6, LabelVariety::Uniform));
}

TEST_CASE("compare label sets") {
  std::map<std::string, SoftLabel> a{{"x", two(0.7)}, {"y", two(0.9)}, {"z", two(1.0)}};
  auto rep = compare_label_sets(a, a);
  CHECK(rep.common_images == 3);
  CHECK(rep.mean_distance == 0.0);
  CHECK(*rep.entropy_pearson_r == doctest::Approx(1.0));
  CHECK(rep.per_image.size() == 3);
  CHECK(rep.per_image[0].top_mass_ours == doctest::Approx(0.7));
  CHECK(rep.per_image[0].zero_classes_ours == 8);

  std::map<std::string, SoftLabel> b{{"x", two(0.5)}, {"y", two(0.9)}, {"w", two(0.1)}};
  rep = compare_label_sets(a, b);
  CHECK(rep.common_images == 2);
  CHECK(rep.mean_distance == doctest::Approx(0.1));

  std::map<std::string, SoftLabel> h1{{"x", hard_label(0, kSpace)}}, h2{{"x", hard_label(1, kSpace)}};
  rep = compare_label_sets(h1, h2);
  CHECK(rep.mean_distance == 1.0);
  CHECK_FALSE(rep.entropy_pearson_r.has_value());
  CHECK_THROWS(compare_label_sets(h1, {{"q", hard_label(0, kSpace)}}));
  const auto j = to_json(rep);
  CHECK(j.contains("mean_distance"));
}

TEST_CASE("mean confidence intervals") {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const auto ci = mean_ci(xs);
  CHECK(ci.mean == 3.0);
  // t_{0.975,4} = 2.7764451...; sd = sqrt(2.5)
  const double half = 2.7764451051977987 * std::sqrt(2.5) / std::sqrt(5.0);
  CHECK(*ci.low == doctest::Approx(3.0 - half).epsilon(1e-9));
  CHECK(*ci.high == doctest::Approx(3.0 + half).epsilon(1e-9));
  const std::vector<double> one{4.0};
  CHECK_FALSE(mean_ci(one).low.has_value());
  // one-sided t_{0.95,4} = 2.1318467...
  CHECK(paired_lower_bound(xs) ==
        doctest::Approx(3.0 - 2.1318467863266499 * std::sqrt(2.5) / std::sqrt(5.0)).epsilon(1e-9));
  CHECK(std::isinf(paired_lower_bound(one)));
}
