#include "mobnet/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "mobnet/error.hpp"
#include "mobnet/parallel.hpp"
#include "mobnet/random.hpp"
#include "mobnet/spline.hpp"

namespace mobnet::stats {

namespace {

// Median of a scratch buffer; reorders it.
double median_inplace(std::span<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

bool at_least(double replicate, double observed) {
    return replicate >= observed - 1e-12 * std::abs(observed);
}

void mid_ranks_into(std::span<const double> values, std::vector<std::size_t>& order, std::span<double> ranks) {
    const std::size_t n = values.size();
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
}

// Evaluates all three two-sample statistics for a relabeling of a pooled
// sample; indices [0, n1) of `perm` form group 1.
class TwoSample {
public:
    TwoSample(std::span<const double> g1, std::span<const double> g2) : n1_(g1.size()), n2_(g2.size()) {
        pooled_.assign(g1.begin(), g1.end());
        pooled_.insert(pooled_.end(), g2.begin(), g2.end());
        raw_ranks_.resize(pooled_.size());
        std::vector<std::size_t> order;
        mid_ranks_into(pooled_, order, raw_ranks_);
    }

    std::size_t n1() const { return n1_; }
    std::size_t size() const { return pooled_.size(); }
    bool constant() const {
        return std::all_of(pooled_.begin(), pooled_.end(), [&](double v) { return v == pooled_.front(); });
    }

    struct Scratch {
        std::vector<double> a, b, dev, dev_ranks;
        std::vector<std::size_t> order;
    };

    std::array<double, 3> evaluate(std::span<const std::size_t> perm, Scratch& s) const {
        const std::size_t n = pooled_.size();
        s.a.resize(n1_);
        s.b.resize(n2_);
        for (std::size_t i = 0; i < n1_; ++i) s.a[i] = pooled_[perm[i]];
        for (std::size_t i = 0; i < n2_; ++i) s.b[i] = pooled_[perm[n1_ + i]];
        const double med1 = median_inplace(s.a), med2 = median_inplace(s.b);

        // Absolute deviations for MAD, squared deviations for the V ranks.
        s.dev.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double med = i < n1_ ? med1 : med2;
            s.dev[i] = std::abs(pooled_[perm[i]] - med);
        }
        s.a.assign(s.dev.begin(), s.dev.begin() + static_cast<std::ptrdiff_t>(n1_));
        s.b.assign(s.dev.begin() + static_cast<std::ptrdiff_t>(n1_), s.dev.end());
        const double mad1 = median_inplace(s.a), mad2 = median_inplace(s.b);

        const double loc = (med1 - med2) * (med1 - med2);
        const double scale = (mad1 - mad2) * (mad1 - mad2);

        const double n1 = static_cast<double>(n1_), n2 = static_cast<double>(n2_);
        double r1 = 0.0;
        for (std::size_t i = 0; i < n1_; ++i) r1 += raw_ranks_[perm[i]];
        const double u1 = r1 - n1 * (n1 + 1.0) / 2.0;
        const double u = std::max(u1, n1 * n2 - u1);

        for (auto& d : s.dev) d = d * d;
        s.dev_ranks.resize(n);
        mid_ranks_into(s.dev, s.order, s.dev_ranks);
        double v_r1 = 0.0;
        for (std::size_t i = 0; i < n1_; ++i) v_r1 += s.dev_ranks[i];
        const double v1 = v_r1 - n1 * (n1 + 1.0) / 2.0;
        const double v = std::max(v1, n1 * n2 - v1);

        return {loc, scale, std::max(u, v)};
    }

private:
    std::size_t n1_, n2_;
    std::vector<double> pooled_;
    std::vector<double> raw_ranks_;
};

struct PermutationCounts {
    std::array<double, 3> observed{};
    std::array<std::size_t, 3> at_least{};
    std::size_t replicates = 0;
    PermutationMode mode = PermutationMode::monte_carlo;
};

PermutationCounts run_permutations(const TwoSample& data, std::size_t permutations, std::uint64_t seed) {
    const std::size_t n = data.size();
    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    TwoSample::Scratch scratch;
    PermutationCounts counts;
    counts.observed = data.evaluate(identity, scratch);

    if (arrangement_count(data.n1(), n - data.n1(), permutations) <= permutations) {
        counts.mode = PermutationMode::exhaustive;
        // Enumerate group-1 index sets via a selection mask.
        std::vector<char> mask(n, 0);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(data.n1()), 1);
        std::vector<std::size_t> perm(n);
        do {
            std::size_t a = 0, b = data.n1();
            for (std::size_t i = 0; i < n; ++i) {
                if (mask[i]) perm[a++] = i;
                else perm[b++] = i;
            }
            const auto stats = data.evaluate(perm, scratch);
            for (int k = 0; k < 3; ++k)
                if (at_least(stats[k], counts.observed[k])) ++counts.at_least[k];
            ++counts.replicates;
        } while (std::prev_permutation(mask.begin(), mask.end()));
        return counts;
    }

    counts.mode = PermutationMode::monte_carlo;
    counts.replicates = permutations;
    std::vector<std::array<double, 3>> replicate_stats(permutations);
    parallel_for(permutations, [&](std::size_t r) {
        thread_local TwoSample::Scratch local;
        Rng rng(seed, r);
        const auto perm = random_permutation(n, rng);
        replicate_stats[r] = data.evaluate(perm, local);
    });
    for (const auto& stats : replicate_stats)
        for (int k = 0; k < 3; ++k)
            if (at_least(stats[k], counts.observed[k])) ++counts.at_least[k];
    return counts;
}

TestResult make_result(const PermutationCounts& counts, int k, std::uint64_t seed, bool degenerate) {
    TestResult r;
    r.statistic = counts.observed[k];
    r.n_permutations = counts.replicates;
    r.seed = seed;
    r.mode = counts.mode;
    r.degenerate = degenerate;
    if (degenerate) {
        r.p_value = 1.0;
    } else if (counts.mode == PermutationMode::exhaustive) {
        r.p_value = static_cast<double>(counts.at_least[k]) / static_cast<double>(counts.replicates);
    } else {
        r.p_value = (1.0 + static_cast<double>(counts.at_least[k])) / (1.0 + static_cast<double>(counts.replicates));
    }
    return r;
}

void check_groups(std::span<const double> g1, std::span<const double> g2) {
    if (g1.size() < 2 || g2.size() < 2) throw InputError("permutation tests need at least 2 observations per group");
    for (double v : g1)
        if (!std::isfinite(v)) throw InputError("non-finite observation in group 1");
    for (double v : g2)
        if (!std::isfinite(v)) throw InputError("non-finite observation in group 2");
}

int kind_index(TestKind kind) {
    switch (kind) {
        case TestKind::location: return 0;
        case TestKind::scale: return 1;
        case TestKind::joint: return 2;
    }
    return 0;
}

}  // namespace

double median(std::span<const double> sample) {
    if (sample.empty()) throw InputError("median of an empty sample");
    std::vector<double> copy(sample.begin(), sample.end());
    return median_inplace(copy);
}

RobustStats robust_stats(std::span<const double> sample) {
    const double med = median(sample);
    std::vector<double> dev(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) dev[i] = std::abs(sample[i] - med);
    return {med, median_inplace(dev)};
}

std::vector<double> mid_ranks(std::span<const double> values) {
    std::vector<double> ranks(values.size());
    std::vector<std::size_t> order;
    mid_ranks_into(values, order, ranks);
    return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InputError("pearson: need two equal-length samples of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::string to_string(TestKind kind) {
    switch (kind) {
        case TestKind::location: return "location";
        case TestKind::scale: return "scale";
        case TestKind::joint: return "joint";
    }
    return "unknown";
}

std::string to_string(PermutationMode mode) {
    return mode == PermutationMode::exhaustive ? "exhaustive" : "monte_carlo";
}

double location_statistic(std::span<const double> g1, std::span<const double> g2) {
    const double d = median(g1) - median(g2);
    return d * d;
}

double scale_statistic(std::span<const double> g1, std::span<const double> g2) {
    const double d = robust_stats(g1).mad - robust_stats(g2).mad;
    return d * d;
}

double joint_statistic(std::span<const double> g1, std::span<const double> g2) {
    TwoSample data(g1, g2);
    std::vector<std::size_t> identity(data.size());
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    TwoSample::Scratch scratch;
    return data.evaluate(identity, scratch)[2];
}

std::uint64_t arrangement_count(std::size_t n1, std::size_t n2, std::uint64_t max) {
    // C(n1 + n2, n1), computed incrementally; each partial product is an
    // exact binomial coefficient.
    const std::size_t k = std::min(n1, n2);
    const std::size_t n = n1 + n2;
    std::uint64_t c = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
        if (c > (max + 1) * i / num + 1) return max + 1;
        c = c * num / i;
        if (c > max) return max + 1;
    }
    return c;
}

TestResult partial_perm_test(std::span<const double> g1, std::span<const double> g2, TestKind kind,
                             std::size_t permutations, std::uint64_t seed) {
    check_groups(g1, g2);
    if (permutations == 0) throw InputError("at least one permutation is required");
    TwoSample data(g1, g2);
    const auto counts = run_permutations(data, permutations, seed);
    return make_result(counts, kind_index(kind), seed, data.constant());
}

NpcAnovaResult npc_anova(std::span<const double> g1, std::span<const double> g2, std::size_t permutations,
                         std::uint64_t seed) {
    check_groups(g1, g2);
    if (permutations == 0) throw InputError("at least one permutation is required");
    TwoSample data(g1, g2);
    const auto counts = run_permutations(data, permutations, seed);
    const bool degenerate = data.constant();
    NpcAnovaResult r;
    r.location = make_result(counts, 0, seed, degenerate);
    r.scale = make_result(counts, 1, seed, degenerate);
    r.joint = make_result(counts, 2, seed, degenerate);
    r.p_location_corrected = std::max(r.location.p_value, r.joint.p_value);
    r.p_scale_corrected = std::max(r.scale.p_value, r.joint.p_value);
    return r;
}

TestResult spearman_perm_test(const Eigen::MatrixXd& x_curves, const Eigen::MatrixXd& y_curves,
                              std::span<const double> grid, std::size_t permutations, std::uint64_t seed,
                              double lambda, int n_knots) {
    const auto n = x_curves.rows();
    if (n < 3) throw InputError("the functional Spearman test needs at least 3 regions");
    if (y_curves.rows() != n) throw InputError("X and Y curve sets cover different numbers of regions");
    if (x_curves.cols() != static_cast<Eigen::Index>(grid.size()) || y_curves.cols() != x_curves.cols())
        throw InputError("curve length does not match the year grid");
    if (permutations == 0) throw InputError("at least one permutation is required");

    const model::PenalizedSmoother smoother(grid, lambda, n_knots);
    std::vector<double> x_score(n), y_score(n);
    std::vector<double> row(grid.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < grid.size(); ++t) row[t] = x_curves(i, static_cast<Eigen::Index>(t));
        x_score[i] = smoother.integral(row);
        for (std::size_t t = 0; t < grid.size(); ++t) row[t] = y_curves(i, static_cast<Eigen::Index>(t));
        y_score[i] = smoother.integral(row);
    }
    const auto rx = mid_ranks(x_score);
    const auto ry = mid_ranks(y_score);

    TestResult result;
    result.seed = seed;
    result.statistic = std::abs(pearson(rx, ry));
    const bool degenerate = std::all_of(rx.begin(), rx.end(), [&](double v) { return v == rx.front(); }) ||
                            std::all_of(ry.begin(), ry.end(), [&](double v) { return v == ry.front(); });
    result.degenerate = degenerate;

    std::uint64_t factorial = 1;
    bool small = true;
    for (Eigen::Index k = 2; k <= n && small; ++k) {
        factorial *= static_cast<std::uint64_t>(k);
        if (factorial > permutations) small = false;
    }
    std::size_t hits = 0;
    if (small) {
        result.mode = PermutationMode::exhaustive;
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::vector<double> permuted(n);
        std::size_t total = 0;
        do {
            for (Eigen::Index i = 0; i < n; ++i) permuted[i] = ry[perm[i]];
            if (at_least(std::abs(pearson(rx, permuted)), result.statistic)) ++hits;
            ++total;
        } while (std::next_permutation(perm.begin(), perm.end()));
        result.n_permutations = total;
        result.p_value = degenerate ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
        return result;
    }
    result.mode = PermutationMode::monte_carlo;
    result.n_permutations = permutations;
    std::vector<char> exceed(permutations, 0);
    parallel_for(permutations, [&](std::size_t r) {
        Rng rng(seed, r);
        const auto perm = random_permutation(static_cast<std::size_t>(n), rng);
        std::vector<double> permuted(n);
        for (Eigen::Index i = 0; i < n; ++i) permuted[i] = ry[perm[i]];
        exceed[r] = at_least(std::abs(pearson(rx, permuted)), result.statistic) ? 1 : 0;
    });
    hits = static_cast<std::size_t>(std::count(exceed.begin(), exceed.end(), 1));
    result.p_value = degenerate ? 1.0 : (1.0 + static_cast<double>(hits)) / (1.0 + static_cast<double>(permutations));
    return result;
}

PcaResult pca(const Eigen::MatrixXd& data, bool standardize, const std::vector<std::string>& column_names) {
    if (data.rows() < 2 || data.cols() < 2) throw InputError("PCA needs at least 2 rows and 2 columns");
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    const double dof = static_cast<double>(data.rows() - 1);
    if (standardize) {
        for (Eigen::Index j = 0; j < centered.cols(); ++j) {
            const double sd = std::sqrt(centered.col(j).squaredNorm() / dof);
            if (!(sd > 0.0)) {
                const std::string name = static_cast<std::size_t>(j) < column_names.size()
                                             ? column_names[j]
                                             : "#" + std::to_string(j);
                throw InputError("column " + name + " has zero variance and cannot be standardized");
            }
            centered.col(j) /= sd;
        }
    }
    const Eigen::MatrixXd cov = centered.transpose() * centered / dof;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
    const auto p = cov.rows();
    PcaResult result;
    result.standardized = standardize;
    result.loadings.resize(p, p);
    result.eigenvalues.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        result.eigenvalues[k] = std::max(0.0, solver.eigenvalues()[p - 1 - k]);
        Eigen::VectorXd v = solver.eigenvectors().col(p - 1 - k);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        result.loadings.col(k) = v;
    }
    const double total = result.eigenvalues.sum();
    if (!(total > 0.0)) throw NumericError("PCA input has no variance");
    result.proportions = result.eigenvalues / total;
    return result;
}

namespace {

void check_line_input(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("x and y lengths differ");
    if (x.size() < 3) throw InputError("line fits need at least 3 points");
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); }))
        throw InputError("x is constant; the slope is not identifiable");
}

LineFit ols_subset(std::span<const double> x, std::span<const double> y, const std::vector<std::size_t>& idx) {
    double mx = 0.0, my = 0.0;
    for (auto i : idx) {
        mx += x[i];
        my += y[i];
    }
    const double n = static_cast<double>(idx.size());
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (auto i : idx) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (auto i : idx) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 0.0;
    fit.support = idx;
    return fit;
}

// Sum of the h smallest squared residuals and the indices achieving it.
double trimmed_objective(std::span<const double> x, std::span<const double> y, double slope, double intercept,
                         std::size_t h, std::vector<std::size_t>* support) {
    std::vector<std::pair<double, std::size_t>> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - intercept - slope * x[i];
        r[i] = {e * e, i};
    }
    std::sort(r.begin(), r.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < h; ++i) sum += r[i].first;
    if (support) {
        support->clear();
        for (std::size_t i = 0; i < h; ++i) support->push_back(r[i].second);
        std::sort(support->begin(), support->end());
    }
    return sum;
}

}  // namespace

LineFit ols_fit(std::span<const double> x, std::span<const double> y) {
    check_line_input(x, y);
    std::vector<std::size_t> all(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return ols_subset(x, y, all);
}

LineFit lts_fit(std::span<const double> x, std::span<const double> y, std::size_t h, std::uint64_t seed,
                int starts) {
    check_line_input(x, y);
    const std::size_t n = x.size();
    if (h == 0) h = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(n)));
    if (h < 3 || h > n) throw InputError("LTS trim h must lie in [3, n]");

    LineFit best;
    double best_obj = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<std::size_t>& subset) {
        LineFit fit = ols_subset(x, y, subset);
        std::vector<std::size_t> support;
        const double obj = trimmed_objective(x, y, fit.slope, fit.intercept, h, &support);
        if (!std::isfinite(best_obj) || obj < best_obj - 1e-15 * (1.0 + best_obj)) {
            best_obj = obj;
            best = ols_subset(x, y, support);
        }
        return std::pair(obj, support);
    };

    if (n <= 12) {
        std::vector<char> mask(n, 0);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(h), 1);
        std::vector<std::size_t> subset;
        do {
            subset.clear();
            for (std::size_t i = 0; i < n; ++i)
                if (mask[i]) subset.push_back(i);
            consider(subset);
        } while (std::prev_permutation(mask.begin(), mask.end()));
        return best;
    }

    for (int s = 0; s < starts; ++s) {
        Rng rng(seed, static_cast<std::uint64_t>(s));
        std::size_t i = rng.below(n), j = rng.below(n - 1);
        if (j >= i) ++j;
        if (x[i] == x[j]) continue;
        std::vector<std::size_t> subset{std::min(i, j), std::max(i, j)};
        LineFit start = ols_subset(x, y, subset);
        std::vector<std::size_t> support;
        double obj = trimmed_objective(x, y, start.slope, start.intercept, h, &support);
        // Concentration steps never increase the trimmed objective.
        for (int step = 0; step < 100; ++step) {
            auto [next_obj, next_support] = consider(support);
            if (!(next_obj < obj - 1e-15 * (1.0 + obj))) break;
            obj = next_obj;
            support = std::move(next_support);
        }
    }
    return best;
}

}  // namespace mobnet::stats
