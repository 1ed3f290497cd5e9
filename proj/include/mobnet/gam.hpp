#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mobnet/spline.hpp"
#include "mobnet/stats.hpp"

namespace mobnet::model {

// Penalized cubic-spline term. With `by`, one curve per level (each
// centred within its level) sharing a single smoothing parameter.
struct SmoothTerm {
    std::string name;
    std::vector<double> x;
    int n_knots = 10;
    std::vector<std::string> by;
    std::optional<double> lambda;  // fixed; infinity keeps only the linear part
};

struct LinearTerm {
    std::string name;
    std::vector<double> x;
};

// Ridge-penalized group indicators.
struct RandomIntercept {
    std::string name;
    std::vector<std::string> levels;
    std::optional<double> lambda;
};

struct GamDesign {
    std::vector<SmoothTerm> smooths;
    std::vector<LinearTerm> linear;
    std::vector<RandomIntercept> random;

    std::size_t rows() const;
};

struct GamOptions {
    double log10_lambda_min = -6.0;
    double log10_lambda_max = 6.0;
    double log10_lambda_step = 0.5;
    double tolerance = 1e-6;  // relative GCV improvement that ends the search
    int max_sweeps = 20;
};

enum class TermKind { intercept, linear, smooth, random };
std::string to_string(TermKind kind);

struct TermInfo {
    std::string name;
    TermKind kind = TermKind::linear;
    std::string level;         // by-level of a smooth; empty otherwise
    std::size_t first = 0;     // first coefficient column
    std::size_t size = 0;      // number of columns
    std::size_t lambda_group = 0;
};

// Maps a spline basis to a term's constrained, reparametrized columns.
struct SmoothColumns {
    std::string name;
    std::string level;
    SplineBasis basis;
    Eigen::MatrixXd transform;  // basis dimension x term columns
    std::size_t term = 0;       // index into GamFit::terms
    double x_min = 0.0, x_max = 0.0;
};

struct CurvePoint {
    double x = 0.0;
    double fit = 0.0;
    double se = 0.0;
};

struct GamFit {
    std::string variant;
    GamDesign design;
    Eigen::VectorXd response;
    std::vector<TermInfo> terms;
    std::vector<SmoothColumns> smooths;
    std::vector<std::string> lambda_names;
    std::vector<double> lambdas;
    std::vector<std::optional<double>> lambda_fixed;  // user-fixed values per group
    // Smooth null-space columns dropped because they duplicated earlier
    // unpenalized columns (e.g. the linear part of f(a) + f(b) vs f(a + b)).
    std::vector<std::string> absorbed;

    Eigen::MatrixXd X;
    Eigen::VectorXd penalty;  // per-column diagonal penalty before lambda
    std::vector<std::size_t> column_group;
    std::vector<bool> column_penalized;

    Eigen::VectorXd coefficients;
    Eigen::MatrixXd h_inverse;  // (X'X + S_lambda)^{-1}
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double rss = 0.0;
    double tss = 0.0;
    double r_squared = 0.0;
    double edf = 0.0;
    double sigma2 = 0.0;
    double gcv = 0.0;

    const TermInfo& term(const std::string& name, const std::string& level = {}) const;
    bool has_term(const std::string& name) const;
    double intercept() const { return coefficients[0]; }
    // Smooth curve with pointwise standard errors from sigma2 * h_inverse.
    std::vector<CurvePoint> curve(const std::string& name, std::span<const double> x,
                                  const std::string& level = {}) const;
    // Random-intercept estimates by level.
    std::map<std::string, double> random_effects(const std::string& name) const;
    // Wald-type F statistic of one term: b' V^{-1} b / k with V = sigma2 * H^{-1}_jj.
    double term_f(const std::string& name) const;
};

GamFit fit_pgam(const GamDesign& design, std::span<const double> response, const GamOptions& options = {});

struct PermFResult {
    stats::TestResult test;
    std::vector<std::string> added_terms;
    std::vector<double> observed_f;
    GamFit extended;
};

// Permutational F test of the terms that `extended` adds to the null fit's
// design. Each replicate refits the extension, smoothing parameters
// included, on null fitted values plus permuted null residuals. The
// observed response and every replicate go through the same GCV search: a
// one-step-at-a-time walk on the grid starting from the extension's own
// GCV choice.
PermFResult perm_f_test(const GamFit& null_fit, const GamDesign& extended, std::size_t permutations,
                        std::uint64_t seed, const GamOptions& options = {});

}  // namespace mobnet::model
