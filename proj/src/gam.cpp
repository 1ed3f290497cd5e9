#include "mobnet/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>

#include "mobnet/error.hpp"
#include "mobnet/parallel.hpp"
#include "mobnet/random.hpp"

namespace mobnet::model {

namespace {

constexpr std::size_t kNoGroup = std::numeric_limits<std::size_t>::max();

struct Column {
    std::size_t term = 0;
    Eigen::VectorXd data;
    double penalty = 0.0;
    std::size_t group = kNoGroup;
    bool smooth_null = false;
    std::size_t smooth = 0;     // SmoothColumns index, for smooth columns
    Eigen::VectorXd transform;  // basis-space direction, for smooth columns
};

void check_length(std::size_t got, std::size_t n, const std::string& name) {
    if (got != n) throw InputError("term " + name + " has " + std::to_string(got) + " rows, expected " + std::to_string(n));
}

void check_finite(std::span<const double> x, const std::string& name) {
    for (double v : x)
        if (!std::isfinite(v)) throw InputError("term " + name + " has non-finite values");
}

std::vector<std::string> sorted_levels(const std::vector<std::string>& labels) {
    std::set<std::string> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

struct Assembly {
    std::vector<Column> columns;
    std::vector<TermInfo> terms;
    std::vector<SmoothColumns> smooths;
    std::vector<std::string> lambda_names;
    std::vector<std::optional<double>> fixed;
    std::vector<std::string> absorbed;
};

void add_smooth(Assembly& a, const SmoothTerm& term, std::size_t n) {
    check_length(term.x.size(), n, term.name);
    check_finite(term.x, term.name);
    if (!term.by.empty()) check_length(term.by.size(), n, term.name);
    if (term.lambda && !(*term.lambda >= 0.0)) throw InputError("smoothing parameter of " + term.name + " must be >= 0");
    const SplineBasis basis = SplineBasis::from_data(term.x, term.n_knots);
    const Eigen::MatrixXd full = basis.evaluate(term.x);
    const int d = basis.dimension();

    const std::size_t group = a.lambda_names.size();
    a.lambda_names.push_back(term.name);
    a.fixed.push_back(term.lambda);
    const bool drop_range = term.lambda && std::isinf(*term.lambda);

    const std::vector<std::string> levels = term.by.empty() ? std::vector<std::string>{""} : sorted_levels(term.by);
    for (const auto& level : levels) {
        Eigen::MatrixXd B = full;
        if (!term.by.empty())
            for (std::size_t i = 0; i < n; ++i)
                if (term.by[i] != level) B.row(static_cast<Eigen::Index>(i)).setZero();
        const Eigen::VectorXd sums = B.colwise().sum().transpose();
        if (!(sums.norm() > 0.0)) throw InputError("smooth " + term.name + " has no rows at level " + level);

        // Null space of the sum-to-zero constraint.
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(sums);
        const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
        const Eigen::MatrixXd Z = Q.rightCols(d - 1);
        const Eigen::MatrixXd Xc = B * Z;
        const Eigen::MatrixXd Sc = Z.transpose() * basis.penalty() * Z;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Sc + Sc.transpose()));
        const Eigen::VectorXd values = eig.eigenvalues();
        const double top = values.maxCoeff();
        const double trace_s = values.sum();
        const double scale = trace_s > 0.0 ? Xc.squaredNorm() / trace_s : 1.0;

        SmoothColumns sc{term.name, level, basis, Eigen::MatrixXd(d, 0), a.terms.size(), 0.0, 0.0};
        const auto [lo, hi] = std::minmax_element(term.x.begin(), term.x.end());
        sc.x_min = *lo;
        sc.x_max = *hi;
        const std::size_t smooth_index = a.smooths.size();
        a.smooths.push_back(sc);

        TermInfo info{term.name, TermKind::smooth, level, 0, 0, group};
        a.terms.push_back(info);
        const std::size_t term_index = a.terms.size() - 1;

        // Null-space (linear) directions first, then the penalized range.
        for (int pass = 0; pass < 2; ++pass) {
            for (int k = 0; k < d - 1; ++k) {
                const bool is_null = values[k] <= 1e-9 * top;
                if ((pass == 0) != is_null) continue;
                if (!is_null && drop_range) continue;
                Column c;
                c.term = term_index;
                c.transform = Z * eig.eigenvectors().col(k);
                c.data = B * c.transform;
                c.penalty = is_null ? 0.0 : values[k] * scale;
                c.group = is_null ? kNoGroup : group;
                c.smooth_null = is_null;
                c.smooth = smooth_index;
                a.columns.push_back(std::move(c));
            }
        }
    }
}

void add_random(Assembly& a, const RandomIntercept& term, std::size_t n) {
    check_length(term.levels.size(), n, term.name);
    if (term.lambda && !(*term.lambda >= 0.0)) throw InputError("ridge parameter of " + term.name + " must be >= 0");
    const std::size_t group = a.lambda_names.size();
    a.lambda_names.push_back(term.name);
    a.fixed.push_back(term.lambda);
    const auto levels = sorted_levels(term.levels);
    for (const auto& level : levels) {
        a.terms.push_back(TermInfo{term.name, TermKind::random, level, 0, 0, group});
        if (term.lambda && std::isinf(*term.lambda)) continue;
        Column c;
        c.term = a.terms.size() - 1;
        c.data = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            if (term.levels[i] == level) c.data[static_cast<Eigen::Index>(i)] = 1.0;
        c.penalty = static_cast<double>(n) / static_cast<double>(levels.size());
        c.group = group;
        a.columns.push_back(std::move(c));
    }
}

// Walks the unpenalized columns in order, keeping an orthonormal basis of
// the accepted ones. A smooth's linear direction that is already spanned is
// absorbed; any other dependency is a confounding error.
void check_rank(Assembly& a) {
    std::vector<Eigen::VectorXd> basis;
    std::vector<std::size_t> accepted;
    std::vector<bool> keep(a.columns.size(), true);
    for (std::size_t j = 0; j < a.columns.size(); ++j) {
        const Column& c = a.columns[j];
        if (c.group != kNoGroup) continue;
        const double norm = c.data.norm();
        Eigen::VectorXd r = norm > 0.0 ? Eigen::VectorXd(c.data / norm) : c.data;
        for (int rep = 0; rep < 2; ++rep)
            for (const auto& q : basis) r -= q.dot(r) * q;
        const double residual = r.norm();
        if (norm > 0.0 && residual > 1e-8) {
            basis.push_back(r / residual);
            accepted.push_back(j);
            continue;
        }
        const TermInfo& t = a.terms[c.term];
        if (c.smooth_null && norm > 0.0) {
            keep[j] = false;
            a.absorbed.push_back(t.level.empty() ? t.name : t.name + "[" + t.level + "]");
            continue;
        }
        std::set<std::string> involved{t.name};
        if (norm > 0.0 && !accepted.empty()) {
            Eigen::MatrixXd A(c.data.size(), static_cast<Eigen::Index>(accepted.size()));
            for (std::size_t k = 0; k < accepted.size(); ++k) A.col(static_cast<Eigen::Index>(k)) = a.columns[accepted[k]].data;
            const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(c.data);
            for (std::size_t k = 0; k < accepted.size(); ++k)
                if (std::abs(coef[static_cast<Eigen::Index>(k)]) * A.col(static_cast<Eigen::Index>(k)).norm() > 1e-6 * norm)
                    involved.insert(a.terms[a.columns[accepted[k]].term].name);
        }
        std::string names;
        for (const auto& name : involved) names += (names.empty() ? "" : ", ") + name;
        throw InputError("design is rank deficient; confounded terms: " + names);
    }
    std::vector<Column> kept;
    for (std::size_t j = 0; j < a.columns.size(); ++j)
        if (keep[j]) kept.push_back(std::move(a.columns[j]));
    a.columns = std::move(kept);
}

Assembly assemble(const GamDesign& design) {
    const std::size_t n = design.rows();
    if (n == 0) throw InputError("model has no observations");
    Assembly a;
    a.terms.push_back(TermInfo{"(Intercept)", TermKind::intercept, "", 0, 0, kNoGroup});
    Column intercept;
    intercept.term = 0;
    intercept.data = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    a.columns.push_back(std::move(intercept));

    std::set<std::string> names{"(Intercept)"};
    auto claim = [&](const std::string& name) {
        if (name.empty()) throw InputError("model terms need names");
        if (!names.insert(name).second) throw InputError("duplicate model term " + name);
    };
    for (const auto& term : design.linear) {
        claim(term.name);
        check_length(term.x.size(), n, term.name);
        check_finite(term.x, term.name);
        a.terms.push_back(TermInfo{term.name, TermKind::linear, "", 0, 0, kNoGroup});
        Column c;
        c.term = a.terms.size() - 1;
        c.data = Eigen::Map<const Eigen::VectorXd>(term.x.data(), static_cast<Eigen::Index>(n));
        a.columns.push_back(std::move(c));
    }
    for (const auto& term : design.smooths) {
        claim(term.name);
        add_smooth(a, term, n);
    }
    for (const auto& term : design.random) {
        claim(term.name);
        add_random(a, term, n);
    }
    check_rank(a);
    return a;
}

struct Solution {
    Eigen::VectorXd beta;
    Eigen::MatrixXd h_inverse;
    double rss = 0.0;
    double edf = 0.0;
    double gcv = std::numeric_limits<double>::infinity();
};

// Cholesky factor of X'X + S for one set of smoothing parameters. It does
// not depend on the response, so permutation replicates share it.
struct Factor {
    bool ok = false;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::MatrixXd h_inverse;
    Eigen::VectorXd d;
    double edf = 0.0;
};

class Problem {
public:
    Problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& penalty, const std::vector<std::size_t>& group)
        : penalty_(penalty), group_(group), n_(static_cast<double>(X.rows())) {
        xtx_ = X.transpose() * X;
    }

    double n() const { return n_; }

    std::shared_ptr<const Factor> factor(const std::vector<double>& lambdas) const {
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(lambdas); it != cache_.end()) return it->second;
        }
        auto f = std::make_shared<Factor>();
        f->d = Eigen::VectorXd::Zero(penalty_.size());
        for (Eigen::Index j = 0; j < penalty_.size(); ++j)
            if (group_[static_cast<std::size_t>(j)] != kNoGroup) f->d[j] = penalty_[j] * lambdas[group_[static_cast<std::size_t>(j)]];
        Eigen::MatrixXd H = xtx_;
        H.diagonal() += f->d;
        f->llt.compute(H);
        if (f->llt.info() == Eigen::Success) {
            const Eigen::Index p = H.rows();
            f->h_inverse = f->llt.solve(Eigen::MatrixXd::Identity(p, p));
            f->edf = static_cast<double>(p) - f->h_inverse.diagonal().dot(f->d);
            f->ok = f->h_inverse.allFinite();
        }
        std::lock_guard lock(mutex_);
        if (cache_.size() < kCacheLimit) cache_.emplace(lambdas, f);
        return f;
    }

    std::optional<Solution> solve(const std::vector<double>& lambdas, const Eigen::VectorXd& xty, double yty,
                                  bool want_inverse) const {
        const auto f = factor(lambdas);
        if (!f->ok) return std::nullopt;
        Solution s;
        s.beta = f->llt.solve(xty);
        if (!s.beta.allFinite()) return std::nullopt;
        s.edf = f->edf;
        s.rss = std::max(0.0, yty - s.beta.dot(xty) - s.beta.dot(f->d.cwiseProduct(s.beta)));
        const double denom = n_ - s.edf;
        s.gcv = denom > 0.0 ? n_ * s.rss / (denom * denom) : std::numeric_limits<double>::infinity();
        if (want_inverse) s.h_inverse = f->h_inverse;
        return s;
    }

private:
    static constexpr std::size_t kCacheLimit = 4096;
    Eigen::MatrixXd xtx_;
    Eigen::VectorXd penalty_;
    std::vector<std::size_t> group_;
    double n_;
    mutable std::mutex mutex_;
    mutable std::map<std::vector<double>, std::shared_ptr<const Factor>> cache_;
};

std::vector<double> lambda_grid(const GamOptions& options) {
    std::vector<double> grid;
    for (int k = 0;; ++k) {
        const double e = options.log10_lambda_min + k * options.log10_lambda_step;
        if (e > options.log10_lambda_max + 1e-9) break;
        grid.push_back(std::pow(10.0, e));
    }
    if (grid.empty()) throw InputError("empty smoothing-parameter grid");
    return grid;
}

// Coordinate-wise GCV search over the grid from `start` (all 1 when empty).
// The full search scans the whole grid for each parameter; the local one
// walks a parameter one grid step at a time while GCV keeps improving.
enum class Search { full, local };

std::vector<double> select_lambdas(const Problem& problem, const std::vector<std::optional<double>>& fixed,
                                   const GamOptions& options, const Eigen::VectorXd& xty, double yty,
                                   std::vector<double> start = {}, Search search = Search::full) {
    std::vector<double> lambdas = start.empty() ? std::vector<double>(fixed.size(), 1.0) : std::move(start);
    const std::vector<double> grid = lambda_grid(options);
    for (std::size_t g = 0; g < fixed.size(); ++g)
        if (fixed[g]) lambdas[g] = std::isinf(*fixed[g]) ? 0.0 : *fixed[g];

    auto score = [&](const std::vector<double>& l) {
        const auto s = problem.solve(l, xty, yty, false);
        return s ? s->gcv : std::numeric_limits<double>::infinity();
    };
    auto nearest = [&](double v) {
        std::size_t k = 0;
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (std::abs(std::log(grid[i] / v)) < std::abs(std::log(grid[k] / v))) k = i;
        return k;
    };
    double best = score(lambdas);
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        const double before = best;
        for (std::size_t g = 0; g < fixed.size(); ++g) {
            if (fixed[g]) continue;
            if (search == Search::full) {
                double chosen = lambdas[g];
                for (double value : grid) {
                    if (value == lambdas[g]) continue;
                    std::vector<double> trial = lambdas;
                    trial[g] = value;
                    const double s = score(trial);
                    if (s < best) {
                        best = s;
                        chosen = value;
                    }
                }
                lambdas[g] = chosen;
                continue;
            }
            std::size_t at = nearest(lambdas[g]);
            for (int dir : {-1, 1}) {
                bool moved = false;
                for (;;) {
                    const long next = static_cast<long>(at) + dir;
                    if (next < 0 || next >= static_cast<long>(grid.size())) break;
                    std::vector<double> trial = lambdas;
                    trial[g] = grid[static_cast<std::size_t>(next)];
                    const double s = score(trial);
                    if (!(s < best)) break;
                    best = s;
                    lambdas = std::move(trial);
                    at = static_cast<std::size_t>(next);
                    moved = true;
                }
                if (moved) break;
            }
        }
        if (!std::isfinite(best)) throw NumericError("GCV could not be evaluated for any smoothing parameter");
        if (!(before - best > options.tolerance * std::abs(before))) break;
    }
    return lambdas;
}

GamFit finish(Assembly&& a, const GamDesign& design, const Eigen::VectorXd& y, const GamOptions& options) {
    const auto n = y.size();
    const auto p = static_cast<Eigen::Index>(a.columns.size());
    GamFit fit;
    fit.design = design;
    fit.response = y;
    fit.X.resize(n, p);
    fit.penalty.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const Column& c = a.columns[static_cast<std::size_t>(j)];
        fit.X.col(j) = c.data;
        fit.penalty[j] = c.penalty;
        fit.column_group.push_back(c.group);
        fit.column_penalized.push_back(c.group != kNoGroup);
    }
    // Term column ranges (columns of a term are contiguous).
    for (auto& t : a.terms) t.size = 0;
    for (Eigen::Index j = p - 1; j >= 0; --j) {
        auto& t = a.terms[a.columns[static_cast<std::size_t>(j)].term];
        t.first = static_cast<std::size_t>(j);
        ++t.size;
    }
    for (auto& sc : a.smooths) {
        std::vector<Eigen::VectorXd> dirs;
        for (const auto& c : a.columns)
            if (c.group != kNoGroup || c.smooth_null)
                if (c.term == sc.term) dirs.push_back(c.transform);
        sc.transform.resize(sc.basis.dimension(), static_cast<Eigen::Index>(dirs.size()));
        for (std::size_t k = 0; k < dirs.size(); ++k) sc.transform.col(static_cast<Eigen::Index>(k)) = dirs[k];
    }

    const Problem problem(fit.X, fit.penalty, fit.column_group);
    const Eigen::VectorXd xty = fit.X.transpose() * y;
    const double yty = y.squaredNorm();
    std::vector<double> lambdas = select_lambdas(problem, a.fixed, options, xty, yty);
    const auto solution = problem.solve(lambdas, xty, yty, true);
    if (!solution) throw NumericError("penalized normal equations are not positive definite");

    fit.terms = std::move(a.terms);
    fit.smooths = std::move(a.smooths);
    fit.lambda_names = std::move(a.lambda_names);
    fit.lambdas = lambdas;
    fit.lambda_fixed = a.fixed;
    for (std::size_t g = 0; g < a.fixed.size(); ++g)
        if (a.fixed[g] && std::isinf(*a.fixed[g])) fit.lambdas[g] = std::numeric_limits<double>::infinity();
    fit.absorbed = std::move(a.absorbed);
    fit.coefficients = solution->beta;
    fit.h_inverse = solution->h_inverse;
    fit.fitted = fit.X * fit.coefficients;
    fit.residuals = y - fit.fitted;
    fit.rss = fit.residuals.squaredNorm();
    fit.tss = (y.array() - y.mean()).square().sum();
    fit.r_squared = fit.tss > 0.0 ? 1.0 - fit.rss / fit.tss : 0.0;
    fit.edf = solution->edf;
    const double dof = static_cast<double>(n) - fit.edf;
    fit.sigma2 = dof > 0.0 ? fit.rss / dof : 0.0;
    fit.gcv = dof > 0.0 ? static_cast<double>(n) * fit.rss / (dof * dof) : std::numeric_limits<double>::infinity();
    return fit;
}

std::vector<Eigen::Index> term_columns(const GamFit& fit, const std::string& name) {
    std::vector<Eigen::Index> cols;
    for (const auto& t : fit.terms)
        if (t.name == name)
            for (std::size_t k = 0; k < t.size; ++k) cols.push_back(static_cast<Eigen::Index>(t.first + k));
    return cols;
}

// Pseudo-inverse of a symmetric positive semidefinite block.
Eigen::MatrixXd pinv_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    const Eigen::VectorXd values = eig.eigenvalues();
    const double top = values.size() ? values.maxCoeff() : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
    for (Eigen::Index k = 0; k < values.size(); ++k)
        if (values[k] > 1e-12 * top) inv[k] = 1.0 / values[k];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) out(a, b) = m(idx[a], idx[b]);
    return out;
}

bool same_smooth(const SmoothTerm& a, const SmoothTerm& b) {
    return a.x == b.x && a.n_knots == b.n_knots && a.by == b.by && a.lambda == b.lambda;
}

}  // namespace

std::size_t GamDesign::rows() const {
    if (!linear.empty()) return linear.front().x.size();
    if (!smooths.empty()) return smooths.front().x.size();
    if (!random.empty()) return random.front().levels.size();
    return 0;
}

std::string to_string(TermKind kind) {
    switch (kind) {
        case TermKind::intercept: return "intercept";
        case TermKind::linear: return "linear";
        case TermKind::smooth: return "smooth";
        case TermKind::random: return "random";
    }
    return "unknown";
}

const TermInfo& GamFit::term(const std::string& name, const std::string& level) const {
    for (const auto& t : terms)
        if (t.name == name && t.level == level) return t;
    throw InputError("model has no term " + name + (level.empty() ? "" : "[" + level + "]"));
}

bool GamFit::has_term(const std::string& name) const {
    return std::any_of(terms.begin(), terms.end(), [&](const TermInfo& t) { return t.name == name; });
}

std::vector<CurvePoint> GamFit::curve(const std::string& name, std::span<const double> x,
                                      const std::string& level) const {
    const SmoothColumns* sc = nullptr;
    for (const auto& s : smooths)
        if (s.name == name && s.level == level) sc = &s;
    if (!sc) throw InputError("model has no smooth " + name + (level.empty() ? "" : "[" + level + "]"));
    const TermInfo& t = terms[sc->term];
    const auto k = static_cast<Eigen::Index>(t.size);
    const auto first = static_cast<Eigen::Index>(t.first);
    const Eigen::VectorXd beta = coefficients.segment(first, k);
    const Eigen::MatrixXd V = sigma2 * h_inverse.block(first, first, k, k);
    std::vector<CurvePoint> out;
    out.reserve(x.size());
    for (double v : x) {
        const Eigen::RowVectorXd row = sc->basis.evaluate_at(v) * sc->transform;
        const double var = (row * V * row.transpose())(0, 0);
        out.push_back({v, row.dot(beta), std::sqrt(std::max(0.0, var))});
    }
    return out;
}

std::map<std::string, double> GamFit::random_effects(const std::string& name) const {
    std::map<std::string, double> out;
    for (const auto& t : terms)
        if (t.name == name && t.kind == TermKind::random)
            out[t.level] = t.size ? coefficients[static_cast<Eigen::Index>(t.first)] : 0.0;
    if (out.empty()) throw InputError("model has no random intercept " + name);
    return out;
}

double GamFit::term_f(const std::string& name) const {
    const auto cols = term_columns(*this, name);
    if (cols.empty()) return 0.0;
    Eigen::VectorXd b(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) b[static_cast<Eigen::Index>(k)] = coefficients[cols[k]];
    if (!(sigma2 > 0.0)) return std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd M = pinv_psd(submatrix(h_inverse, cols));
    return b.dot(M * b) / (static_cast<double>(cols.size()) * sigma2);
}

GamFit fit_pgam(const GamDesign& design, std::span<const double> response, const GamOptions& options) {
    const std::size_t n = design.rows();
    if (response.size() != n) throw InputError("response length does not match the design");
    check_finite(response, "response");
    if (options.log10_lambda_step <= 0.0) throw InputError("smoothing grid step must be positive");
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(response.data(), static_cast<Eigen::Index>(n));
    return finish(assemble(design), design, y, options);
}

PermFResult perm_f_test(const GamFit& null_fit, const GamDesign& extended, std::size_t permutations,
                        std::uint64_t seed, const GamOptions& options) {
    if (permutations == 0) throw InputError("the permutational F test needs at least one permutation");
    const GamDesign& base = null_fit.design;
    if (extended.rows() != base.rows()) throw InputError("null and extended designs have different rows");

    auto nested_error = [](const std::string& name) {
        return InputError("designs are not nested: null term " + name + " is missing or differs in the extension");
    };
    for (const auto& t : base.linear) {
        auto it = std::find_if(extended.linear.begin(), extended.linear.end(), [&](const LinearTerm& e) { return e.name == t.name; });
        if (it == extended.linear.end() || it->x != t.x) throw nested_error(t.name);
    }
    for (const auto& t : base.smooths) {
        auto it = std::find_if(extended.smooths.begin(), extended.smooths.end(), [&](const SmoothTerm& e) { return e.name == t.name; });
        if (it == extended.smooths.end() || !same_smooth(*it, t)) throw nested_error(t.name);
    }
    for (const auto& t : base.random) {
        auto it = std::find_if(extended.random.begin(), extended.random.end(), [&](const RandomIntercept& e) { return e.name == t.name; });
        if (it == extended.random.end() || it->levels != t.levels || it->lambda != t.lambda) throw nested_error(t.name);
    }
    std::set<std::string> base_names;
    for (const auto& t : base.linear) base_names.insert(t.name);
    for (const auto& t : base.smooths) base_names.insert(t.name);
    for (const auto& t : base.random) base_names.insert(t.name);
    std::vector<std::string> added;
    for (const auto& t : extended.linear)
        if (!base_names.count(t.name)) added.push_back(t.name);
    for (const auto& t : extended.smooths)
        if (!base_names.count(t.name)) added.push_back(t.name);
    for (const auto& t : extended.random)
        if (!base_names.count(t.name)) added.push_back(t.name);
    if (added.empty()) throw InputError("the extended design adds no terms to the null design");

    const Eigen::VectorXd& y = null_fit.response;
    PermFResult result;
    result.extended = fit_pgam(extended, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), options);
    const GamFit& ext = result.extended;

    std::vector<std::vector<Eigen::Index>> blocks;
    for (const auto& name : added) blocks.push_back(term_columns(ext, name));
    result.added_terms = added;

    const Problem problem(ext.X, ext.penalty, ext.column_group);
    std::vector<double> start = ext.lambdas;
    for (auto& l : start)
        if (std::isinf(l)) l = 0.0;

    // F of every added term after a fresh GCV fit of the extension to `v`.
    auto term_statistics = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd xty = ext.X.transpose() * v;
        const double yty = v.squaredNorm();
        const auto lambdas = select_lambdas(problem, ext.lambda_fixed, options, xty, yty, start, Search::local);
        const auto sol = problem.solve(lambdas, xty, yty, true);
        if (!sol) throw NumericError("penalized normal equations are not positive definite");
        const double dof = problem.n() - sol->edf;
        if (!(dof > 0.0)) throw NumericError("extended model leaves no residual degrees of freedom");
        const double sigma2 = sol->rss / dof;
        std::vector<double> f;
        for (const auto& cols : blocks) {
            if (cols.empty()) {
                f.push_back(0.0);
                continue;
            }
            Eigen::VectorXd b(static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k) b[static_cast<Eigen::Index>(k)] = sol->beta[cols[k]];
            const Eigen::MatrixXd M = pinv_psd(submatrix(sol->h_inverse, cols));
            f.push_back(sigma2 > 0.0 ? b.dot(M * b) / (static_cast<double>(cols.size()) * sigma2)
                                     : std::numeric_limits<double>::infinity());
        }
        return f;
    };
    result.observed_f = term_statistics(y);
    const double observed = *std::max_element(result.observed_f.begin(), result.observed_f.end());

    const Eigen::VectorXd& fitted0 = null_fit.fitted;
    const Eigen::VectorXd& resid0 = null_fit.residuals;
    const auto n = static_cast<std::size_t>(y.size());
    std::vector<double> replicate(permutations);
    parallel_for(permutations, [&](std::size_t r) {
        Rng rng(seed, r);
        const auto perm = random_permutation(n, rng);
        Eigen::VectorXd ystar(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            ystar[static_cast<Eigen::Index>(i)] = fitted0[static_cast<Eigen::Index>(i)] + resid0[static_cast<Eigen::Index>(perm[i])];
        const auto f = term_statistics(ystar);
        replicate[r] = *std::max_element(f.begin(), f.end());
    });
    std::size_t hits = 0;
    for (double v : replicate)
        if (v >= observed - 1e-12 * std::abs(observed)) ++hits;

    result.test.statistic = observed;
    result.test.n_permutations = permutations;
    result.test.seed = seed;
    result.test.mode = stats::PermutationMode::monte_carlo;
    result.test.p_value = (1.0 + static_cast<double>(hits)) / (1.0 + static_cast<double>(permutations));
    return result;
}

}  // namespace mobnet::model
