#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "mobnet/error.hpp"
#include "mobnet/gam.hpp"
#include "mobnet/models.hpp"
#include "mobnet/random.hpp"
#include "mobnet/spline.hpp"

using namespace mobnet;
using namespace mobnet::model;

namespace {

std::vector<double> uniform_points(Rng& rng, int n, double lo, double hi) {
    std::vector<double> x(n);
    for (auto& v : x) v = lo + (hi - lo) * rng.uniform();
    return x;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("geodesic distance") {
    CHECK(geodesic_distance({10, 20}, {10, 20}) == 0.0);
    CHECK(geodesic_distance({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * kEarthRadiusKm));
    const ingest::Centroid a{45.1, 7.6}, b{52.5, 13.4};
    CHECK(geodesic_distance(a, b) == geodesic_distance(b, a));
    CHECK_THROWS_AS(geodesic_distance({95, 0}, {0, 0}), InputError);
}

TEST_CASE("spline basis") {
    Rng rng(1);
    const auto x = uniform_points(rng, 80, 0, 5);
    const auto b = SplineBasis::from_data(x, 10);
    CHECK(b.dimension() == 12);
    const Eigen::MatrixXd B = b.evaluate(x);
    for (Eigen::Index r = 0; r < B.rows(); ++r) CHECK(B.row(r).sum() == doctest::Approx(1.0));
    const Eigen::MatrixXd& S = b.penalty();
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff() > -1e-9);
    // constants and lines carry no penalty
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(b.dimension());
    CHECK(std::abs(ones.dot(S * ones)) < 1e-9);
    const Eigen::VectorXd line = (B.transpose() * B).ldlt().solve(B.transpose() * Eigen::Map<const Eigen::VectorXd>(x.data(), 80));
    CHECK(std::abs(line.dot(S * line)) < 1e-8);

    const std::vector<double> few{1, 2, 3, 3, 2};
    CHECK_THROWS_AS(SplineBasis::from_data(few), InputError);
}

TEST_CASE("unpenalized cubic recovery at the knots") {
    Rng rng(2);
    const auto x = uniform_points(rng, 60, -2, 3);
    const auto b = SplineBasis::from_data(x, 8);
    auto cubic = [](double v) { return 0.5 * v * v * v - v * v + 2 * v - 1; };
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) y[i] = cubic(x[i]);
    const Eigen::MatrixXd B = b.evaluate(x);
    const Eigen::VectorXd c = B.colPivHouseholderQr().solve(y);
    for (double k : b.knots()) CHECK(std::abs(b.evaluate_at(k).dot(c) - cubic(k)) < 1e-10);
}

TEST_CASE("gam recovers an exact linear response") {
    Rng rng(3);
    const auto x = uniform_points(rng, 100, 0, 10);
    std::vector<double> y(100);
    for (int i = 0; i < 100; ++i) y[i] = 3 + 0.7 * x[i];
    GamDesign d;
    d.smooths.push_back({"f_x", x});
    const auto fit = fit_pgam(d, y);
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("gam smooth of sin(x)") {
    Rng rng(4);
    const auto x = uniform_points(rng, 200, 0, 2 * std::numbers::pi);
    std::vector<double> y(200);
    Eigen::VectorXd truth(200);
    for (int i = 0; i < 200; ++i) {
        truth[i] = std::sin(x[i]);
        y[i] = truth[i] + 0.2 * rng.normal();
    }
    GamDesign d;
    d.smooths.push_back({"f_x", x});
    const auto fit = fit_pgam(d, y);
    CHECK(correlation(fit.fitted, truth) > 0.99);
    CHECK((fit.fitted + fit.residuals - Eigen::Map<const Eigen::VectorXd>(y.data(), 200)).cwiseAbs().maxCoeff() <
          1e-14);
    const double rss = fit.residuals.squaredNorm();
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), 200);
    const double tss = (yv.array() - yv.mean()).matrix().squaredNorm();
    CHECK(fit.r_squared == doctest::Approx(1 - rss / tss).epsilon(1e-12));
    const auto curve = fit.curve("f_x", std::vector<double>{1.0, 2.0});
    CHECK(curve.size() == 2);
    CHECK(curve[0].se > 0);
}

TEST_CASE("infinite smoothing reduces to the linear model") {
    Rng rng(5);
    const int n = 150;
    const auto a = uniform_points(rng, n, 0, 1), b = uniform_points(rng, n, -1, 1);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = std::exp(a[i]) + b[i] * b[i] + 0.1 * rng.normal();
    GamDesign d;
    d.smooths.push_back({"f_a", a, 10, {}, std::numeric_limits<double>::infinity()});
    d.smooths.push_back({"f_b", b, 10, {}, std::numeric_limits<double>::infinity()});
    const auto fit = fit_pgam(d, y);
    Eigen::MatrixXd X(n, 3);
    for (int i = 0; i < n; ++i) X.row(i) << 1, a[i], b[i];
    const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
    CHECK((fit.fitted - X * beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("residuals orthogonal to unpenalized columns") {
    Rng rng(6);
    const int n = 120;
    const auto a = uniform_points(rng, n, 0, 3), z = uniform_points(rng, n, 0, 1);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(2 * a[i]) + 2 * z[i] + 0.1 * rng.normal();
    GamDesign d;
    d.smooths.push_back({"f_a", a});
    d.linear.push_back({"z", z});
    const auto fit = fit_pgam(d, y);
    for (Eigen::Index j = 0; j < fit.X.cols(); ++j)
        if (!fit.column_penalized[static_cast<std::size_t>(j)]) CHECK(std::abs(fit.X.col(j).dot(fit.residuals)) < 1e-8);
}

TEST_CASE("random intercept offset") {
    Rng rng(7);
    const int n = 2000;
    const double delta = 0.8;
    std::vector<std::string> g(n);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
        g[i] = i % 2 ? "b" : "a";
        x[i] = rng.uniform();
        y[i] = x[i] + (i % 2 ? delta : 0.0) + 0.5 * rng.normal();
    }
    GamDesign d;
    d.linear.push_back({"x", x});
    d.random.push_back({"group", g});
    const auto fit = fit_pgam(d, y);
    const auto re = fit.random_effects("group");
    const double se = 0.5 * std::sqrt(2.0 / (n / 2));
    CHECK(std::abs(re.at("b") - re.at("a") - delta) < 3 * se + 0.01);
}

TEST_CASE("rank deficiency names the terms") {
    std::vector<double> a{1, 2, 3, 4, 5, 6}, y{1, 3, 2, 5, 4, 6};
    GamDesign d;
    d.linear.push_back({"a", a});
    d.linear.push_back({"a_copy", a});
    try {
        fit_pgam(d, y);
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("a_copy") != std::string::npos);
    }
}

TEST_CASE("permutational F test") {
    Rng rng(8);
    const int n = 200;
    const auto a = uniform_points(rng, n, 0, 1), b = uniform_points(rng, n, 0, 1);
    std::vector<double> y(n), y_scaled(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(3 * a[i]) + 1.5 * std::cos(4 * b[i]) + 0.3 * rng.normal();
    for (int i = 0; i < n; ++i) y_scaled[i] = 5 + 3 * y[i];
    GamDesign null_d;
    null_d.smooths.push_back({"f_a", a});
    GamDesign ext = null_d;
    ext.smooths.push_back({"f_b", b});

    const auto null_fit = fit_pgam(null_d, y);
    const auto r = perm_f_test(null_fit, ext, 99, 1);
    CHECK(r.added_terms == std::vector<std::string>{"f_b"});
    CHECK(r.test.p_value <= 0.01);
    CHECK_THROWS_AS(perm_f_test(null_fit, ext, 0, 1), InputError);

    const auto scaled = perm_f_test(fit_pgam(null_d, y_scaled), ext, 99, 1);
    CHECK(scaled.test.statistic == doctest::Approx(r.test.statistic).epsilon(1e-10));

    GamDesign other;
    other.smooths.push_back({"f_b", b});
    CHECK_THROWS_AS(perm_f_test(null_fit, other, 9, 1), InputError);
}

TEST_CASE("permutational F test null calibration") {
    const int sims = 200, n = 80;
    int rejections = 0;
    for (int s = 0; s < sims; ++s) {
        Rng rng(100, static_cast<std::uint64_t>(s));
        const auto a = uniform_points(rng, n, 0, 1), noise = uniform_points(rng, n, 0, 1);
        std::vector<double> y(n);
        for (int i = 0; i < n; ++i) y[i] = std::sin(3 * a[i]) + 0.5 * rng.normal();
        GamDesign null_d;
        null_d.smooths.push_back({"f_a", a, 6});
        GamDesign ext = null_d;
        ext.smooths.push_back({"f_noise", noise, 6});
        if (perm_f_test(fit_pgam(null_d, y), ext, 99, static_cast<std::uint64_t>(s)).test.p_value <= 0.05)
            ++rejections;
    }
    const double rate = static_cast<double>(rejections) / sims;
    CHECK(rate <= 0.05 + 2.5 * std::sqrt(0.05 * 0.95 / sims));
}

TEST_CASE("education imputer") {
    Rng rng(9);
    std::vector<double> att(40), edu(40);
    for (int i = 0; i < 40; ++i) {
        att[i] = rng.uniform() * 50;
        edu[i] = 0.2 + 0.01 * att[i];
    }
    const auto imp = fit_edu_imputer(att, edu);
    CHECK(imp.fit.r_squared > 0.999);
    CHECK(imp.predict(25) == doctest::Approx(0.45).epsilon(1e-3));
    CHECK(imp.predict(1e6) <= 1.0);
    CHECK(imp.predict(-1e6) >= 0.0);
    std::vector<double> few(10, 0.5);
    CHECK_THROWS_AS(fit_edu_imputer(few, few), InputError);
}

TEST_CASE("language families") {
    const auto f = LanguageFamilies::bundled();
    CHECK(f.family_of("DE21", "DE") == "Germanic");
    CHECK(f.family_of("BE10", "BE") == "Romance");
    CHECK(f.family_of("BE21", "BE") == "Germanic");
    CHECK(f.family_of("XX01", "XX") == "XX");
    std::ostringstream out;
    f.write(out);
    CHECK(out.str().rfind("country_or_region,family\n", 0) == 0);
}
