#include "mobnet/spline.hpp"

#include <algorithm>
#include <cmath>

#include "mobnet/error.hpp"

namespace mobnet::model {

namespace {
constexpr int kOrder = 4;
constexpr int kDegree = 3;
}  // namespace

SplineBasis SplineBasis::from_data(std::span<const double> x, int n_knots) {
    std::vector<double> distinct(x.begin(), x.end());
    for (double v : distinct)
        if (!std::isfinite(v)) throw InputError("spline covariate has non-finite values");
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 4) throw InputError("a cubic spline needs at least 4 distinct covariate values");
    if (n_knots < 2) throw InputError("a cubic spline needs at least 2 knots");
    const int k = std::min<int>(n_knots, static_cast<int>(distinct.size()));
    std::vector<double> knots;
    const double last = static_cast<double>(distinct.size() - 1);
    for (int i = 0; i < k; ++i) {
        const double h = last * static_cast<double>(i) / static_cast<double>(k - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, distinct.size() - 1);
        knots.push_back(distinct[lo] + (h - static_cast<double>(lo)) * (distinct[hi] - distinct[lo]));
    }
    knots.back() = distinct.back();
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    return SplineBasis(std::move(knots));
}

SplineBasis SplineBasis::from_knots(std::vector<double> knots) {
    if (knots.size() < 2) throw InputError("a cubic spline needs at least 2 knots");
    for (std::size_t i = 1; i < knots.size(); ++i)
        if (!(knots[i] > knots[i - 1])) throw InputError("spline knots must be strictly increasing");
    return SplineBasis(std::move(knots));
}

SplineBasis::SplineBasis(std::vector<double> knots) : knots_(std::move(knots)) {
    for (int i = 0; i < kDegree; ++i) full_.push_back(knots_.front());
    full_.insert(full_.end(), knots_.begin(), knots_.end());
    for (int i = 0; i < kDegree; ++i) full_.push_back(knots_.back());

    // B'' is linear on each knot interval, so Simpson's rule integrates the
    // products exactly.
    const int dim = dimension();
    penalty_ = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t seg = 0; seg + 1 < knots_.size(); ++seg) {
        const double a = knots_[seg], b = knots_[seg + 1];
        const int span = static_cast<int>(seg) + kDegree;
        const double xs[3] = {a, 0.5 * (a + b), b};
        const double ws[3] = {(b - a) / 6.0, 4.0 * (b - a) / 6.0, (b - a) / 6.0};
        for (int q = 0; q < 3; ++q) {
            double d[3][4];
            const int first = local(xs[q], span, d);
            for (int i = 0; i < kOrder; ++i)
                for (int j = 0; j < kOrder; ++j) penalty_(first + i, first + j) += ws[q] * d[2][i] * d[2][j];
        }
    }
    penalty_ = 0.5 * (penalty_ + penalty_.transpose());
}

int SplineBasis::find_span(double x) const {
    // Last interval is closed on the right.
    const int last_span = static_cast<int>(full_.size()) - kOrder - 1;
    if (x >= full_[last_span + 1]) return last_span;
    auto it = std::upper_bound(full_.begin() + kDegree, full_.begin() + last_span + 1, x);
    return static_cast<int>(it - full_.begin()) - 1;
}

int SplineBasis::local(double x, int span, double out[3][4]) const {
    // Piegl & Tiller, "The NURBS Book", algorithm A2.3.
    double ndu[kOrder][kOrder];
    double left[kOrder], right[kOrder];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= kDegree; ++j) {
        left[j] = x - full_[span + 1 - j];
        right[j] = full_[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= kDegree; ++j) out[0][j] = ndu[j][kDegree];
    double a[2][kOrder];
    for (int r = 0; r <= kDegree; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= 2; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = kDegree - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : kDegree - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            out[k][r] = d;
            std::swap(s1, s2);
        }
    }
    const double factors[3] = {1.0, 3.0, 6.0};
    for (int k = 1; k <= 2; ++k)
        for (int j = 0; j <= kDegree; ++j) out[k][j] *= factors[k];
    return span - kDegree;
}

Eigen::RowVectorXd SplineBasis::evaluate_at(double x, int derivative) const {
    if (derivative < 0 || derivative > 2) throw InputError("spline derivative order must be 0, 1 or 2");
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dimension());
    double d[3][4];
    if (x < lower() || x > upper()) {
        // Linear continuation from the nearest boundary.
        const double edge = x < lower() ? lower() : upper();
        const int first = local(edge, find_span(edge), d);
        for (int j = 0; j < kOrder; ++j) {
            if (derivative == 0) row[first + j] = d[0][j] + d[1][j] * (x - edge);
            else if (derivative == 1) row[first + j] = d[1][j];
        }
        return row;
    }
    const int first = local(x, find_span(x), d);
    for (int j = 0; j < kOrder; ++j) row[first + j] = d[derivative][j];
    return row;
}

Eigen::MatrixXd SplineBasis::evaluate(std::span<const double> x, int derivative) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), dimension());
    for (std::size_t r = 0; r < x.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = evaluate_at(x[r], derivative);
    return out;
}

PenalizedSmoother::PenalizedSmoother(std::span<const double> grid, double lambda, int n_knots)
    : grid_(grid.begin(), grid.end()), basis_(SplineBasis::from_data(grid, n_knots)) {
    if (!(lambda >= 0.0)) throw InputError("smoothing penalty must be non-negative");
    for (std::size_t i = 1; i < grid_.size(); ++i)
        if (!(grid_[i] > grid_[i - 1])) throw InputError("smoothing grid must be strictly increasing");
    design_ = basis_.evaluate(grid_);
    const Eigen::MatrixXd lhs = design_.transpose() * design_ + lambda * basis_.penalty();
    solver_ = lhs.completeOrthogonalDecomposition().solve(design_.transpose());
}

Eigen::VectorXd PenalizedSmoother::coefficients(std::span<const double> values) const {
    if (values.size() != grid_.size()) throw InputError("series length does not match the smoothing grid");
    const Eigen::Map<const Eigen::VectorXd> y(values.data(), static_cast<Eigen::Index>(values.size()));
    return solver_ * y;
}

Eigen::VectorXd PenalizedSmoother::smooth(std::span<const double> values) const {
    return design_ * coefficients(values);
}

double PenalizedSmoother::integral(std::span<const double> values, int refine) const {
    const Eigen::VectorXd c = coefficients(values);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i) {
        const double a = grid_[i], b = grid_[i + 1];
        const double h = (b - a) / refine;
        double prev = basis_.evaluate_at(a).dot(c);
        for (int k = 1; k <= refine; ++k) {
            const double cur = basis_.evaluate_at(a + k * h).dot(c);
            total += 0.5 * h * (prev + cur);
            prev = cur;
        }
    }
    return total;
}

}  // namespace mobnet::model
