#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mobnet::model {

// Cubic B-spline basis over distinct knots k_0 < ... < k_{K-1} (boundary
// knots repeated to order 4), with the exact penalty matrix
// S_ij = integral of B_i''(x) B_j''(x) over [k_0, k_{K-1}].
// Outside the boundary knots each basis function continues linearly.
class SplineBasis {
public:
    // Knots at evenly spaced type-7 quantiles of the distinct values of x.
    // Needs at least 4 distinct values; the knot count is capped by the
    // number of distinct values.
    static SplineBasis from_data(std::span<const double> x, int n_knots = 10);
    // Needs at least 2 strictly increasing knots.
    static SplineBasis from_knots(std::vector<double> knots);

    int dimension() const { return static_cast<int>(knots_.size()) + 2; }
    const std::vector<double>& knots() const { return knots_; }
    double lower() const { return knots_.front(); }
    double upper() const { return knots_.back(); }

    // Row r holds the basis (or its derivative) evaluated at x[r].
    Eigen::MatrixXd evaluate(std::span<const double> x, int derivative = 0) const;
    Eigen::RowVectorXd evaluate_at(double x, int derivative = 0) const;

    const Eigen::MatrixXd& penalty() const { return penalty_; }

private:
    explicit SplineBasis(std::vector<double> knots);
    // Non-zero basis derivatives 0..2 at x within knot interval `span`
    // of the full knot vector; returns the first basis index.
    int local(double x, int span, double out[3][4]) const;
    int find_span(double x) const;

    std::vector<double> knots_;     // distinct knots
    std::vector<double> full_;      // with repeated boundary knots
    Eigen::MatrixXd penalty_;
};

// Penalized least-squares smoother on a fixed grid, used for curve-valued
// data: coefficients solve (B'B + lambda S) c = B'y.
class PenalizedSmoother {
public:
    PenalizedSmoother(std::span<const double> grid, double lambda, int n_knots = 10);

    // Spline coefficients for one series observed on the grid.
    Eigen::VectorXd coefficients(std::span<const double> values) const;
    Eigen::VectorXd smooth(std::span<const double> values) const;
    // Trapezoid integral of the smoothed curve over the grid span, on a grid
    // refined `refine` times per interval.
    double integral(std::span<const double> values, int refine = 8) const;

    const SplineBasis& basis() const { return basis_; }

private:
    std::vector<double> grid_;
    SplineBasis basis_;
    Eigen::MatrixXd design_;
    Eigen::MatrixXd solver_;  // (B'B + lambda S)^{-1} B'
};

}  // namespace mobnet::model
