#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

#include "mobnet/communities.hpp"
#include "mobnet/error.hpp"
#include "mobnet/network.hpp"
#include "mobnet/random.hpp"

using namespace mobnet;
using namespace mobnet::network;

namespace {

std::vector<std::string> names(int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("N" + std::to_string(i));
    return v;
}

MobilityNetwork make(const Eigen::MatrixXd& w) { return MobilityNetwork(names(static_cast<int>(w.rows())), w); }

Eigen::MatrixXd random_weights(Rng& rng, int n, double density) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && rng.uniform() < density) w(i, j) = 1 + static_cast<double>(rng.below(20));
    return w;
}

}  // namespace

TEST_CASE("network from flow table") {
    ingest::FlowTable t({2013, 2014}, {"R1", "R2", "R3"}, ingest::Scope::internal);
    t.add({2013, "R1", "R2"}, 2);
    t.add({2014, "R1", "R2"}, 3);
    const auto cum = from_flow_table(t);
    CHECK(cum.weights()(0, 1) == 5);
    CHECK(from_flow_table(t, 2013).weights()(0, 1) == 2);
    ingest::FlowTable empty({2013, 2014}, {"R1", "R2"}, ingest::Scope::internal);
    CHECK(from_flow_table(empty).weights().isZero());
    ingest::FlowTable all({2013, 2014}, {"R1", "R2"}, ingest::Scope::all);
    CHECK_THROWS_AS(from_flow_table(all), InputError);
}

TEST_CASE("strengths") {
    Eigen::MatrixXd w(2, 2);
    w << 0, 3, 0, 0;
    const auto net = make(w);
    CHECK(node_strength(net, StrengthMode::out) == Eigen::Vector2d(3, 0));
    CHECK(node_strength(net, StrengthMode::in) == Eigen::Vector2d(0, 3));
    CHECK(node_strength(net, StrengthMode::total) == Eigen::Vector2d(3, 3));
    CHECK(node_strength(make(Eigen::MatrixXd::Zero(3, 3)), StrengthMode::total).isZero());
}

TEST_CASE("network validation") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 2);
    w(0, 0) = 1;
    CHECK_THROWS_AS(make(w), InputError);
    w(0, 0) = 0;
    w(0, 1) = -1;
    CHECK_THROWS_AS(make(w), InputError);
}

TEST_CASE("HITS small cases") {
    Eigen::MatrixXd w(2, 2);
    w << 0, 1, 1, 0;
    const auto h = hits_scores(make(w));
    CHECK(h.converged);
    CHECK(h.hub[0] == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(h.authority[1] == doctest::Approx(1 / std::sqrt(2.0)));

    Eigen::MatrixXd star = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 1; i < 4; ++i) star(i, 0) = 1;
    const auto s = hits_scores(make(star));
    CHECK(s.authority[0] == doctest::Approx(1.0));
    CHECK(s.authority.tail(3).norm() == doctest::Approx(0.0));

    CHECK_THROWS_AS(hits_scores(make(Eigen::MatrixXd::Zero(3, 3))), InputError);
}

TEST_CASE("HITS scale invariance") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const Eigen::MatrixXd w = random_weights(rng, 8, 0.5);
        if (w.sum() == 0) continue;
        const auto a = hits_scores(make(w));
        const auto b = hits_scores(make(w * 10));
        CHECK((a.hub - b.hub).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.authority - b.authority).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("s-core chain example") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = 1;
    w(1, 2) = 2;
    const auto c = s_core_decomposition(make(w), StrengthMode::total);
    CHECK(c.shell == std::vector<int>{0, 1, 1});
    CHECK(c.thresholds == std::vector<double>{1, 2});

    Eigen::MatrixXd ring = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4; ++i) ring(i, (i + 1) % 4) = 1;
    CHECK(s_core_decomposition(make(ring), StrengthMode::total).shell_count() == 1);

    const auto z = s_core_decomposition(make(Eigen::MatrixXd::Zero(3, 3)), StrengthMode::in);
    CHECK(z.thresholds == std::vector<double>{0});
    CHECK(z.shell == std::vector<int>{0, 0, 0});
}

TEST_CASE("s-core shells nest") {
    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
        const auto net = make(random_weights(rng, 10, 0.4));
        for (auto mode : {StrengthMode::in, StrengthMode::out, StrengthMode::total}) {
            const auto c = s_core_decomposition(net, mode);
            for (std::size_t k = 1; k < c.thresholds.size(); ++k) CHECK(c.thresholds[k] > c.thresholds[k - 1]);
            for (int s : c.shell) CHECK((s >= 0 && s < c.shell_count()));
        }
    }
}

TEST_CASE("quantile partitions") {
    const auto n = names(10);
    std::vector<double> s(10);
    for (int i = 0; i < 10; ++i) s[i] = i;
    CHECK(type7_quantile(s, 0.9) == doctest::Approx(8.1));
    const auto p = quantile_partition(n, s, 0.9);
    CHECK(std::count(p.labels.begin(), p.labels.end(), 1) == 1);
    CHECK(p.labels[9] == 1);
    // as q shrinks the threshold tends to the minimum score
    const auto low = quantile_partition(n, s, 1e-9);
    CHECK(std::count(low.labels.begin(), low.labels.end(), 1) == 9);
    CHECK(type7_quantile(s, 1e-12) < 1e-10);
    const auto u = quantile_partition(n, s, 0.9, std::span<const double>(s));
    CHECK(u.labels == p.labels);
    std::vector<double> r(s.rbegin(), s.rend());
    const auto both = quantile_partition(n, s, 0.9, std::span<const double>(r));
    CHECK(both.labels[0] == 1);
    CHECK(both.labels[9] == 1);
    const auto cut = cutoff_partition(n, s, 7.0);
    CHECK(std::count(cut.labels.begin(), cut.labels.end(), 1) == 2);
}

TEST_CASE("congruence") {
    Partition a{names(10), std::vector<int>(10, 0)};
    auto b = a;
    CHECK(congruence(a, b) == 1.0);
    for (auto& l : b.labels) l = 1;
    CHECK(congruence(a, b) == 0.0);
    b = a;
    b.labels[3] = 1;
    CHECK(congruence(a, b) == doctest::Approx(0.9));
    CHECK(congruence(b, a) == congruence(a, b));
    Partition c{names(9), std::vector<int>(9, 0)};
    CHECK_THROWS_AS(congruence(a, c), InputError);
}

TEST_CASE("edge betweenness communities") {
    SUBCASE("two triangles and a bridge") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(6, 6);
        auto link = [&](int i, int j) { w(i, j) = w(j, i) = 1; };
        link(0, 1), link(1, 2), link(0, 2), link(3, 4), link(4, 5), link(3, 5), link(2, 3);
        const auto r = edge_betweenness_communities(make(w));
        const auto& l = r.partition.labels;
        CHECK(l[0] == l[1]);
        CHECK(l[1] == l[2]);
        CHECK(l[3] == l[4]);
        CHECK(l[4] == l[5]);
        CHECK(l[0] != l[3]);
        CHECK(r.modularity > 0.3);
    }
    SUBCASE("complete uniform graph") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Ones(5, 5) - Eigen::MatrixXd::Identity(5, 5);
        const auto r = edge_betweenness_communities(make(w));
        CHECK(std::set<int>(r.partition.labels.begin(), r.partition.labels.end()).size() == 1);
    }
    SUBCASE("disconnected components") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(5, 5);
        w(0, 1) = 1;
        w(1, 2) = 1;
        w(3, 4) = 2;
        const auto r = edge_betweenness_communities(make(w));
        const auto& l = r.partition.labels;
        CHECK(l[0] == l[2]);
        CHECK(l[3] == l[4]);
        CHECK(l[0] != l[3]);
    }
}

TEST_CASE("map equation communities") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(8, 8);
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (i != j) w(4 * b + i, 4 * b + j) = 10;
    w(3, 4) = w(4, 3) = 1;
    const auto r = map_equation_communities(make(w), 1);
    const auto& l = r.partition.labels;
    for (int i = 1; i < 4; ++i) {
        CHECK(l[i] == l[0]);
        CHECK(l[4 + i] == l[4]);
    }
    CHECK(l[0] != l[4]);
    CHECK(r.codelength < r.one_module_codelength);
    for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1] + 1e-12);

    // exhaustive oracle over all set partitions of 8 nodes
    const auto flow = random_walk_flow(make(w));
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> labels(8, 0), maxv(8, 0);
    std::function<void(int)> rec = [&](int i) {
        if (i == 8) {
            best = std::min(best, map_equation_codelength(flow, labels));
            return;
        }
        const int limit = i == 0 ? 0 : maxv[i - 1] + 1;
        for (int v = 0; v <= limit; ++v) {
            labels[i] = v;
            maxv[i] = std::max(i == 0 ? 0 : maxv[i - 1], v);
            rec(i + 1);
        }
    };
    rec(0);
    CHECK(r.codelength == doctest::Approx(best).epsilon(1e-12));

    Eigen::MatrixXd one = Eigen::MatrixXd::Zero(1, 1);
    CHECK(map_equation_communities(make(one), 1).partition.labels == std::vector<int>{0});
}

TEST_CASE("map equation ignores node order up to relabeling") {
    Rng rng(4);
    const Eigen::MatrixXd w = random_weights(rng, 9, 0.35);
    const auto base = map_equation_communities(make(w), 3);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(9);
    perm.setIdentity();
    std::vector<int> order(9);
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    for (int i = 0; i < 9; ++i) perm.indices()[i] = order[i];
    const Eigen::MatrixXd pw = perm.transpose() * w * perm;
    const auto other = map_equation_communities(make(pw), 3);
    CHECK(other.codelength == doctest::Approx(base.codelength).epsilon(1e-9));
}

TEST_CASE("network csv formats round trip") {
    Rng rng(6);
    const auto net = make(random_weights(rng, 5, 0.5));
    std::ostringstream out;
    write_edge_list(out, net);
    CHECK(out.str().rfind("sender,receiver,weight\n", 0) == 0);
    std::istringstream in(out.str());
    const auto back = read_edge_list(in, net.nodes());
    CHECK(back.weights() == net.weights());

    Partition p{names(3), {1, 0, 1}};
    std::ostringstream pout;
    write_partition(pout, p);
    std::istringstream pin(pout.str());
    const auto q = read_partition(pin);
    CHECK(q.nodes == p.nodes);
    CHECK(q.labels == p.labels);
}
