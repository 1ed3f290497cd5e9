#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobnet::stats {

struct RobustStats {
    double median = 0.0;
    double mad = 0.0;  // unscaled median absolute deviation
};

double median(std::span<const double> sample);
RobustStats robust_stats(std::span<const double> sample);

// Mid-ranks (1-based; ties share the average rank).
std::vector<double> mid_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

enum class TestKind { location, scale, joint };
enum class PermutationMode { exhaustive, monte_carlo };

std::string to_string(TestKind kind);
std::string to_string(PermutationMode mode);

// p = (1 + #{replicate >= observed}) / (1 + B) under Monte Carlo sampling;
// the exact tie-inclusive share of all arrangements (identity included)
// under exhaustive enumeration.
struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_permutations = 0;  // replicates drawn, or arrangements enumerated
    std::uint64_t seed = 0;
    PermutationMode mode = PermutationMode::monte_carlo;
    bool degenerate = false;
};

// Two-sample statistics on a pooled sample whose first n1 entries form
// group 1.
double location_statistic(std::span<const double> g1, std::span<const double> g2);
double scale_statistic(std::span<const double> g1, std::span<const double> g2);
double joint_statistic(std::span<const double> g1, std::span<const double> g2);

// Number of distinct group-1 label sets, saturating at max + 1.
std::uint64_t arrangement_count(std::size_t n1, std::size_t n2, std::uint64_t max);

TestResult partial_perm_test(std::span<const double> g1, std::span<const double> g2, TestKind kind,
                             std::size_t permutations, std::uint64_t seed);

struct NpcAnovaResult {
    TestResult location;
    TestResult scale;
    TestResult joint;
    double p_location_corrected = 1.0;
    double p_scale_corrected = 1.0;

    double p_location_raw() const { return location.p_value; }
    double p_scale_raw() const { return scale.p_value; }
    double p_joint() const { return joint.p_value; }
};

// Location, scale and joint tests evaluated on one shared stream of
// relabelings; corrected p_i = max(p_i, p_joint).
NpcAnovaResult npc_anova(std::span<const double> g1, std::span<const double> g2, std::size_t permutations,
                         std::uint64_t seed);

// Rows are regions, columns the yearly grid. Each series is smoothed, the
// regions are ranked by the integral of their smoothed X and Y curves, and
// the statistic is |Pearson correlation| of the two rank vectors. The null
// permutes which Y curve belongs to which region.
TestResult spearman_perm_test(const Eigen::MatrixXd& x_curves, const Eigen::MatrixXd& y_curves,
                              std::span<const double> grid, std::size_t permutations, std::uint64_t seed,
                              double lambda = 1.0, int n_knots = 10);

struct PcaResult {
    Eigen::MatrixXd loadings;     // orthonormal columns, decreasing variance
    Eigen::VectorXd eigenvalues;  // covariance eigenvalues, decreasing
    Eigen::VectorXd proportions;  // variance shares, sum to 1
    bool standardized = false;
};

// Column-centred (and optionally column-standardized) principal components.
// Loading signs make each column's largest-magnitude entry positive.
PcaResult pca(const Eigen::MatrixXd& data, bool standardize,
              const std::vector<std::string>& column_names = {});

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    // Indices of the observations the fit was computed on (all for OLS).
    std::vector<std::size_t> support;
};

LineFit ols_fit(std::span<const double> x, std::span<const double> y);

// Least trimmed squares: minimizes the sum of the h smallest squared
// residuals. Exhaustive over h-subsets for n <= 12, otherwise random
// two-point starts refined by concentration steps. h = 0 means ceil(0.75 n).
LineFit lts_fit(std::span<const double> x, std::span<const double> y, std::size_t h = 0,
                std::uint64_t seed = 0, int starts = 500);

}  // namespace mobnet::stats
