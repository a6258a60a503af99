#include "hesp/spline.hpp"

#include "hesp/error.hpp"
#include "hesp/panel.hpp"

#include <algorithm>
#include <cmath>

namespace hesp {

namespace {

void check_knots(std::span<const double> knots) {
    if (knots.size() < 2) throw Error(ErrorCode::TooFewKnots, "need at least 2 knots");
    for (std::size_t j = 1; j < knots.size(); ++j) {
        if (!(knots[j] > knots[j - 1])) throw Error(ErrorCode::NonMonotoneKnots, "knots must be strictly increasing");
    }
}

// Second derivatives of the natural interpolant; Thomas recurrence on the
// interior equations with M_0 = M_{K-1} = 0.
std::vector<double> solve_natural(std::span<const double> x, std::span<const double> y) {
    const std::size_t K = x.size();
    std::vector<double> m(K, 0.0);
    if (K < 3) return m;
    const std::size_t N = K - 2;
    std::vector<double> diag(N);
    std::vector<double> upper(N);
    std::vector<double> rhs(N);
    for (std::size_t i = 1; i + 1 < K; ++i) {
        const double h0 = x[i] - x[i - 1];
        const double h1 = x[i + 1] - x[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for (std::size_t i = 1; i < N; ++i) {
        const double lower = x[i + 1] - x[i];  // h_{i} multiplies M_{i} in row i+1
        const double f = lower / diag[i - 1];
        diag[i] -= f * upper[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    m[N] = rhs[N - 1] / diag[N - 1];
    for (std::size_t i = N - 1; i-- > 0;) m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    return m;
}

std::size_t locate_in(const std::vector<double>& x, double t) {
    if (!(t >= x.front() && t <= x.back())) {
        throw Error(ErrorCode::OutOfDomain,
                    "t = " + format_real(t) + " outside [" + format_real(x.front()) + ", " + format_real(x.back()) + "]");
    }
    const auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    return std::min(j == 0 ? 0 : j - 1, x.size() - 2);
}

}  // namespace

SplineCurve::SplineCurve(std::vector<double> knots, std::vector<double> values, std::vector<double> second)
    : x_(std::move(knots)), y_(std::move(values)), m_(std::move(second)) {}

std::size_t SplineCurve::locate(double t) const { return locate_in(x_, t); }

double SplineCurve::eval(double t) const {
    const std::size_t j = locate(t);
    const double h = x_[j + 1] - x_[j];
    const double a = (x_[j + 1] - t) / h;
    const double b = (t - x_[j]) / h;
    return a * y_[j] + b * y_[j + 1] + ((a * a * a - a) * m_[j] + (b * b * b - b) * m_[j + 1]) * h * h / 6.0;
}

double SplineCurve::deriv(double t) const {
    const std::size_t j = locate(t);
    const double h = x_[j + 1] - x_[j];
    const double a = (x_[j + 1] - t) / h;
    const double b = (t - x_[j]) / h;
    return (y_[j + 1] - y_[j]) / h - (3.0 * a * a - 1.0) * h * m_[j] / 6.0 + (3.0 * b * b - 1.0) * h * m_[j + 1] / 6.0;
}

double SplineCurve::deriv2(double t) const {
    const std::size_t j = locate(t);
    const double h = x_[j + 1] - x_[j];
    const double a = (x_[j + 1] - t) / h;
    const double b = (t - x_[j]) / h;
    return a * m_[j] + b * m_[j + 1];
}

std::vector<double> SplineCurve::critical_points(std::size_t j) const {
    const double h = x_[j + 1] - x_[j];
    // S' as a quadratic in b = (t - x_j) / h.
    const double c0 = (y_[j + 1] - y_[j]) / h - h * m_[j] / 3.0 - h * m_[j + 1] / 6.0;
    const double c1 = h * m_[j];
    const double c2 = 0.5 * h * (m_[j + 1] - m_[j]);
    std::vector<double> roots;
    const double scale = std::abs(c0) + std::abs(c1) + std::abs(c2);
    if (scale == 0.0) return roots;
    if (std::abs(c2) <= 1e-14 * scale) {
        if (std::abs(c1) > 1e-14 * scale) roots.push_back(-c0 / c1);
    } else {
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (c1 + std::copysign(sq, c1));
            if (q != 0.0) roots.push_back(c0 / q);
            roots.push_back(q / c2);
        }
    }
    std::vector<double> out;
    for (double b : roots) {
        if (b > 0.0 && b < 1.0) out.push_back(x_[j] + b * h);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SplineCurve natural_cubic_fit(std::span<const double> knots, std::span<const double> values) {
    check_knots(knots);
    if (values.size() != knots.size()) throw Error(ErrorCode::DimensionMismatch, "values and knots differ in length");
    return SplineCurve({knots.begin(), knots.end()}, {values.begin(), values.end()}, solve_natural(knots, values));
}

SplineBasis::SplineBasis(std::vector<double> knots) : x_(std::move(knots)) {
    check_knots(x_);
    const std::size_t K = x_.size();
    g_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
    std::vector<double> e(K, 0.0);
    for (std::size_t c = 0; c < K; ++c) {
        e[c] = 1.0;
        const auto m = solve_natural(x_, e);
        for (std::size_t r = 0; r < K; ++r) g_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m[r];
        e[c] = 0.0;
    }
}

Eigen::VectorXd SplineBasis::weights(double t, int order) const {
    const std::size_t j = locate_in(x_, t);
    const auto J = static_cast<Eigen::Index>(j);
    const double h = x_[j + 1] - x_[j];
    const double a = (x_[j + 1] - t) / h;
    const double b = (t - x_[j]) / h;
    const auto K = static_cast<Eigen::Index>(x_.size());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(K);
    double cy0 = 0.0, cy1 = 0.0, cm0 = 0.0, cm1 = 0.0;
    switch (order) {
        case 0:
            cy0 = a;
            cy1 = b;
            cm0 = (a * a * a - a) * h * h / 6.0;
            cm1 = (b * b * b - b) * h * h / 6.0;
            break;
        case 1:
            cy0 = -1.0 / h;
            cy1 = 1.0 / h;
            cm0 = -(3.0 * a * a - 1.0) * h / 6.0;
            cm1 = (3.0 * b * b - 1.0) * h / 6.0;
            break;
        case 2:
            cm0 = a;
            cm1 = b;
            break;
        default: throw Error(ErrorCode::InvalidArgument, "derivative order must be 0, 1 or 2");
    }
    w(J) += cy0;
    w(J + 1) += cy1;
    w += cm0 * g_.row(J).transpose() + cm1 * g_.row(J + 1).transpose();
    return w;
}

Eigen::MatrixXd SplineBasis::weight_matrix(std::span<const double> grid, int order) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(x_.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = weights(grid[k], order).transpose();
    return out;
}

CovSurface::CovSurface(SplineBasis basis, Eigen::MatrixXd values) : basis_(std::move(basis)), c_(std::move(values)) {
    const auto K = static_cast<Eigen::Index>(basis_.size());
    if (c_.rows() != K || c_.cols() != K) throw Error(ErrorCode::DimensionMismatch, "matrix does not match grid");
}

double CovSurface::eval(double s, double t) const { return partial(s, t, 0, 0); }

double CovSurface::partial(double s, double t, int ds, int dt) const {
    const Eigen::VectorXd ws = basis_.weights(s, ds);
    const Eigen::VectorXd wt = basis_.weights(t, dt);
    return ws.dot(c_ * wt);
}

double CovSurface::max_diagonal() const { return c_.diagonal().maxCoeff(); }

CovSurface tensor_fit(std::span<const double> grid, const Eigen::MatrixXd& matrix) {
    if (matrix.rows() != static_cast<Eigen::Index>(grid.size()) || matrix.cols() != matrix.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "matrix must be square with one row per grid point");
    }
    return CovSurface(SplineBasis({grid.begin(), grid.end()}), matrix);
}

double default_ridge(const CovSurface& surface) { return 1e-10 * std::max(surface.max_diagonal(), 0.0); }

double corr_roughness(const Eigen::MatrixXd& c, const Eigen::VectorXd& w0, const Eigen::VectorXd& w1, double ridge) {
    const Eigen::VectorXd cw0 = c * w0;
    const double a = w0.dot(cw0);
    if (!(a > ridge)) throw Error(ErrorCode::DegenerateVariance, "variance below ridge");
    const double c1 = w1.dot(cw0);
    const double c12 = w1.dot(c * w1);
    const double rad = c12 / a - (c1 * c1) / (a * a);
    return std::sqrt(std::max(rad, 0.0));
}

double corr_roughness(const CovSurface& surface, double t, double ridge) {
    const auto& b = surface.basis();
    return corr_roughness(surface.values(), b.weights(t, 0), b.weights(t, 1), ridge);
}

}  // namespace hesp
