#include "hesp/stats.hpp"

#include "hesp/error.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>

namespace hesp {

double t_cdf(double x, double df) {
    if (std::isinf(df)) return boost::math::cdf(boost::math::normal_distribution<double>(), x);
    return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}

double t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    if (std::isinf(df)) return normal_quantile(p);
    if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double empirical_quantile(std::span<const double> data, double p) {
    if (data.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
    std::vector<double> v(data.begin(), data.end());
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Moments moments(std::span<const double> data) {
    Moments m;
    if (data.empty()) return m;
    double s = 0.0;
    for (double x : data) s += x;
    m.mean = s / static_cast<double>(data.size());
    if (data.size() > 1) {
        double ss = 0.0;
        for (double x : data) ss += (x - m.mean) * (x - m.mean);
        m.sd = std::sqrt(ss / static_cast<double>(data.size() - 1));
    }
    return m;
}

}  // namespace hesp
