#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace hesp {

/// Natural cubic spline interpolant.
///
/// Stored as knot values y and second derivatives M; on [x_j, x_{j+1}] the
/// curve is the usual A y_j + B y_{j+1} + ((A^3 - A) M_j + (B^3 - B) M_{j+1}) h^2 / 6.
class SplineCurve {
public:
    SplineCurve() = default;
    SplineCurve(std::vector<double> knots, std::vector<double> values, std::vector<double> second);

    [[nodiscard]] double eval(double t) const;
    [[nodiscard]] double deriv(double t) const;
    [[nodiscard]] double deriv2(double t) const;

    [[nodiscard]] const std::vector<double>& knots() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return y_; }
    [[nodiscard]] const std::vector<double>& second_derivatives() const noexcept { return m_; }
    [[nodiscard]] double lo() const noexcept { return x_.front(); }
    [[nodiscard]] double hi() const noexcept { return x_.back(); }

    /// Roots of the first derivative inside interval j, in increasing order.
    [[nodiscard]] std::vector<double> critical_points(std::size_t j) const;

private:
    std::size_t locate(double t) const;

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};

[[nodiscard]] SplineCurve natural_cubic_fit(std::span<const double> knots, std::span<const double> values);

/// Cardinal representation of natural cubic interpolation on fixed knots.
///
/// Interpolation is linear in the data, so S(t) = w(t)' y with weights that
/// depend on the knots only. G maps knot values to second derivatives.
class SplineBasis {
public:
    SplineBasis() = default;
    explicit SplineBasis(std::vector<double> knots);

    /// Weights of order 0 (value), 1 (slope) or 2 (curvature) at t.
    [[nodiscard]] Eigen::VectorXd weights(double t, int order = 0) const;

    /// Rows are weights(grid[k], order).
    [[nodiscard]] Eigen::MatrixXd weight_matrix(std::span<const double> grid, int order = 0) const;

    [[nodiscard]] const std::vector<double>& knots() const noexcept { return x_; }
    [[nodiscard]] std::size_t size() const noexcept { return x_.size(); }
    [[nodiscard]] double lo() const noexcept { return x_.front(); }
    [[nodiscard]] double hi() const noexcept { return x_.back(); }
    [[nodiscard]] const Eigen::MatrixXd& second_derivative_operator() const noexcept { return g_; }

private:
    std::vector<double> x_;
    Eigen::MatrixXd g_;
};

/// Tensor-product natural cubic spline surface on a shared square grid:
/// C(s, t) = w(s)' C w(t).
class CovSurface {
public:
    CovSurface() = default;
    CovSurface(SplineBasis basis, Eigen::MatrixXd values);

    [[nodiscard]] double eval(double s, double t) const;
    [[nodiscard]] double diag(double t) const { return eval(t, t); }
    /// Partial derivative of order (ds, dt) in s and t.
    [[nodiscard]] double partial(double s, double t, int ds, int dt) const;

    [[nodiscard]] const SplineBasis& basis() const noexcept { return basis_; }
    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return c_; }
    [[nodiscard]] double lo() const noexcept { return basis_.lo(); }
    [[nodiscard]] double hi() const noexcept { return basis_.hi(); }
    [[nodiscard]] double max_diagonal() const;

private:
    SplineBasis basis_;
    Eigen::MatrixXd c_;
};

[[nodiscard]] CovSurface tensor_fit(std::span<const double> grid, const Eigen::MatrixXd& matrix);

/// Default variance floor: 1e-10 times the largest grid diagonal.
[[nodiscard]] double default_ridge(const CovSurface& surface);

/// Square root of the mixed partial of the correlation at s = t.
[[nodiscard]] double corr_roughness(const CovSurface& surface, double t, double ridge);

/// Same quantity from precomputed weight vectors, for loops over a grid.
[[nodiscard]] double corr_roughness(const Eigen::MatrixXd& c, const Eigen::VectorXd& w0,
                                    const Eigen::VectorXd& w1, double ridge);

}  // namespace hesp
