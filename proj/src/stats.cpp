#include "softlabel/stats.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace softlabel {

namespace {

struct Moments {
  double mean;
  double standard_error;
};

Moments moments(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

MeanCi mean_ci(std::span<const double> samples, double level) {
  if (samples.empty()) throw std::invalid_argument("mean_ci: no samples");
  MeanCi out;
  if (samples.size() < 2) {
    out.mean = samples.front();
    return out;
  }
  const auto m = moments(samples);
  boost::math::students_t dist(static_cast<double>(samples.size() - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  out.mean = m.mean;
  out.low = m.mean - t * m.standard_error;
  out.high = m.mean + t * m.standard_error;
  return out;
}

double paired_lower_bound(std::span<const double> differences, double level) {
  if (differences.size() < 2) return -std::numeric_limits<double>::infinity();
  const auto m = moments(differences);
  boost::math::students_t dist(static_cast<double>(differences.size() - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, 1.0 - level));
  return m.mean - t * m.standard_error;
}

}  // namespace softlabel
