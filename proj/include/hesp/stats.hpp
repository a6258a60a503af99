#pragma once

#include <span>
#include <vector>

namespace hesp {

/// Student t distribution; df = +inf gives the standard normal.
[[nodiscard]] double t_cdf(double x, double df);
[[nodiscard]] double t_quantile(double p, double df);
[[nodiscard]] double normal_quantile(double p);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). Sorts a copy of the data.
[[nodiscard]] double empirical_quantile(std::span<const double> data, double p);

/// Mean and sample standard deviation with a fixed left-to-right summation order.
struct Moments {
    double mean = 0.0;
    double sd = 0.0;
};
[[nodiscard]] Moments moments(std::span<const double> data);

}  // namespace hesp
