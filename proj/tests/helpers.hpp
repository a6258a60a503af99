#pragma once

#include "hesp/error.hpp"
#include "hesp/panel.hpp"
#include "hesp/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

namespace hesp::testing {

/// Random basic panel with consecutive integer times -t_pre..t_post.
inline PanelData random_panel(std::size_t n, int t_pre, int t_post, std::uint64_t seed, std::size_t k = 0) {
    PanelData p;
    CounterRng rng(seed, 0);
    for (int t = -t_pre; t <= t_post; ++t) p.times.push_back(t);
    const auto T = static_cast<Eigen::Index>(p.times.size());
    p.outcomes.resize(static_cast<Eigen::Index>(n), T);
    p.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
        p.unit_ids.push_back(std::to_string(i + 1));
        p.treatment.push_back(i % 2 == 0 ? 1.0 : 0.0);
        for (Eigen::Index j = 0; j < T; ++j) p.outcomes(static_cast<Eigen::Index>(i), j) = rng.normal() + 0.3 * static_cast<double>(j);
        for (std::size_t c = 0; c < k; ++c) p.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.normal();
    }
    for (std::size_t c = 0; c < k; ++c) p.covariate_names.push_back("w" + std::to_string(c + 1));
    return p;
}

/// Four units, times {-1, 0, 1}: D = (1,1,0,0), Y(0) = (1,2,1,2).
inline PanelData hand_panel(double y1_unit2 = 4.0) {
    PanelData p;
    p.unit_ids = {"1", "2", "3", "4"};
    p.times = {-1.0, 0.0, 1.0};
    p.treatment = {1.0, 1.0, 0.0, 0.0};
    p.outcomes.resize(4, 3);
    p.outcomes << 0.0, 1.0, 3.0,
                  0.5, 2.0, y1_unit2,
                  0.2, 1.0, 1.5,
                  0.1, 2.0, 2.5;
    return p;
}

template <class F>
ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

}  // namespace hesp::testing
