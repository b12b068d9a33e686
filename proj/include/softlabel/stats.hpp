#pragma once

#include <optional>
#include <span>

namespace softlabel {

/// Mean with a two-sided Student-t confidence interval. The interval is
/// absent for fewer than two samples.
struct MeanCi {
  double mean = 0.0;
  std::optional<double> low;
  std::optional<double> high;
};

MeanCi mean_ci(std::span<const double> samples, double level = 0.95);

/// Lower bound of the one-sided `level` confidence interval on the mean of
/// paired differences; -inf for fewer than two samples.
double paired_lower_bound(std::span<const double> differences, double level = 0.95);

}  // namespace softlabel
