#include "mobnet/communities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "mobnet/random.hpp"

namespace mobnet::network {

Eigen::MatrixXd undirected_weights(const MobilityNetwork& network) {
    return network.weights() + network.weights().transpose();
}

namespace {

// Betweenness contributions of all shortest paths whose endpoints lie in
// `nodes`; paths never leave the node set's components.
void accumulate_betweenness(const Eigen::MatrixXd& g, const std::vector<int>& nodes,
                            std::map<std::pair<int, int>, double>& out) {
    const int n = static_cast<int>(g.rows());
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (int v : nodes)
        for (int w = 0; w < n; ++w)
            if (g(v, w) > 0.0) adj[v].emplace_back(w, 1.0 / g(v, w));

    std::vector<double> dist(n), sigma(n), delta(n);
    std::vector<std::vector<int>> pred(n);
    std::vector<char> done(n);
    std::vector<int> order;
    for (int s : nodes) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(done.begin(), done.end(), 0);
        for (auto& p : pred) p.clear();
        order.clear();
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
        dist[s] = 0.0;
        sigma[s] = 1.0;
        queue.emplace(0.0, s);
        while (!queue.empty()) {
            const auto [d, v] = queue.top();
            queue.pop();
            if (done[v]) continue;
            done[v] = 1;
            order.push_back(v);
            for (const auto& [w, len] : adj[v]) {
                if (done[w]) continue;
                const double nd = d + len;
                const double eps = 1e-12 * (1.0 + nd);
                if (nd < dist[w] - eps) {
                    dist[w] = nd;
                    sigma[w] = sigma[v];
                    pred[w].assign(1, v);
                    queue.emplace(nd, w);
                } else if (std::abs(nd - dist[w]) <= eps) {
                    sigma[w] += sigma[v];
                    pred[w].push_back(v);
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const int w = *it;
            for (int v : pred[w]) {
                const double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                out[{std::min(v, w), std::max(v, w)}] += 0.5 * c;
                delta[v] += c;
            }
        }
    }
}

std::vector<int> components(const Eigen::MatrixXd& g) {
    const int n = static_cast<int>(g.rows());
    std::vector<int> label(n, -1);
    int next = 0;
    for (int s = 0; s < n; ++s) {
        if (label[s] >= 0) continue;
        std::vector<int> stack{s};
        label[s] = next;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w = 0; w < n; ++w)
                if (g(v, w) > 0.0 && label[w] < 0) {
                    label[w] = next;
                    stack.push_back(w);
                }
        }
        ++next;
    }
    return label;
}

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

}  // namespace

std::map<std::pair<int, int>, double> edge_betweenness(const Eigen::MatrixXd& undirected) {
    std::map<std::pair<int, int>, double> out;
    const int n = static_cast<int>(undirected.rows());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (undirected(i, j) > 0.0) out[{i, j}] = 0.0;
    std::vector<int> nodes(n);
    std::iota(nodes.begin(), nodes.end(), 0);
    accumulate_betweenness(undirected, nodes, out);
    return out;
}

double modularity(const Eigen::MatrixXd& undirected, const std::vector<int>& labels) {
    const double two_m = undirected.sum();
    if (!(two_m > 0.0)) return 0.0;
    const Eigen::VectorXd degree = undirected.rowwise().sum();
    std::map<int, double> inside, degree_sum;
    const auto n = undirected.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        degree_sum[labels[i]] += degree[i];
        for (Eigen::Index j = 0; j < n; ++j)
            if (labels[i] == labels[j]) inside[labels[i]] += undirected(i, j);
    }
    double q = 0.0;
    for (const auto& [c, d] : degree_sum) q += inside[c] / two_m - (d / two_m) * (d / two_m);
    return q;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
    std::map<int, int> renumber;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, _] = renumber.try_emplace(labels[i], static_cast<int>(renumber.size()));
        out[i] = it->second;
    }
    return out;
}

GirvanNewmanResult edge_betweenness_communities(const MobilityNetwork& network) {
    const Eigen::MatrixXd original = undirected_weights(network);
    Eigen::MatrixXd g = original;
    GirvanNewmanResult result;
    result.partition.nodes = network.nodes();

    std::vector<int> labels = components(g);
    result.partition.labels = labels;
    result.modularity = result.initial_modularity = modularity(original, labels);

    auto betweenness = edge_betweenness(g);
    while (!betweenness.empty()) {
        auto best = betweenness.begin();
        for (auto it = betweenness.begin(); it != betweenness.end(); ++it)
            if (it->second > best->second + 1e-12 * (1.0 + std::abs(best->second))) best = it;
        const auto [i, j] = best->first;
        EdgeRemoval step{i, j, best->second, 0, 0.0};
        g(i, j) = g(j, i) = 0.0;
        betweenness.erase(best);

        labels = components(g);
        step.components = *std::max_element(labels.begin(), labels.end()) + 1;
        step.modularity = modularity(original, labels);
        result.history.push_back(step);
        if (step.modularity > result.modularity + 1e-12) {
            result.modularity = step.modularity;
            result.partition.labels = labels;
        }

        // Only paths inside the touched component(s) changed.
        std::vector<int> touched;
        for (int v = 0; v < static_cast<int>(labels.size()); ++v)
            if (labels[v] == labels[i] || labels[v] == labels[j]) touched.push_back(v);
        std::map<std::pair<int, int>, double> local;
        for (int v : touched)
            for (int w : touched)
                if (v < w && g(v, w) > 0.0) local[{v, w}] = 0.0;
        accumulate_betweenness(g, touched, local);
        for (const auto& [edge, value] : local) betweenness[edge] = value;
    }
    result.partition.labels = canonical_labels(result.partition.labels);
    return result;
}

FlowModel random_walk_flow(const MobilityNetwork& network, double teleport) {
    const auto& w = network.weights();
    const Eigen::Index n = network.size();
    const Eigen::VectorXd out = w.rowwise().sum();
    Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (out[i] > 0.0) transition.row(i) = w.row(i) / out[i];

    Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 10000; ++it) {
        double jump = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) jump += out[i] > 0.0 ? teleport * p[i] : p[i];
        Eigen::VectorXd next = (1.0 - teleport) * (transition.transpose() * p);
        next.array() += jump / static_cast<double>(n);
        next /= next.sum();
        const double change = (next - p).cwiseAbs().sum();
        p = std::move(next);
        if (change < 1e-15) break;
    }

    FlowModel flow;
    flow.visit = p;
    flow.link_flow = Eigen::MatrixXd::Zero(n, n);
    flow.teleport = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (out[i] > 0.0) {
            flow.link_flow.row(i) = (1.0 - teleport) * p[i] * transition.row(i);
            flow.teleport[i] = teleport * p[i];
        } else {
            flow.teleport[i] = p[i];
        }
    }
    return flow;
}

double map_equation_codelength(const FlowModel& flow, const std::vector<int>& labels) {
    const auto n = flow.visit.size();
    std::map<int, double> visit, tele, exit_links, size;
    for (Eigen::Index a = 0; a < n; ++a) {
        const int m = labels[a];
        visit[m] += flow.visit[a];
        tele[m] += flow.teleport[a];
        size[m] += 1.0;
        for (Eigen::Index b = 0; b < n; ++b)
            if (labels[b] != m) exit_links[m] += flow.link_flow(a, b);
    }
    const double nn = static_cast<double>(n);
    double total_exit = 0.0, exit_terms = 0.0, module_terms = 0.0, node_terms = 0.0;
    for (const auto& [m, p] : visit) {
        const double q = (n > 1 ? tele[m] * (nn - size[m]) / (nn - 1.0) : 0.0) + exit_links[m];
        total_exit += q;
        exit_terms += plogp(q);
        module_terms += plogp(q + p);
    }
    for (Eigen::Index a = 0; a < n; ++a) node_terms += plogp(flow.visit[a]);
    return plogp(total_exit) - 2.0 * exit_terms - node_terms + module_terms;
}

MapEquationResult map_equation_communities(const MobilityNetwork& network, std::uint64_t seed, double teleport) {
    const int n = static_cast<int>(network.size());
    MapEquationResult result;
    result.partition.nodes = network.nodes();
    if (n == 0) return result;

    const FlowModel flow = random_walk_flow(network, teleport);
    const double nn = static_cast<double>(n);
    const double tele_scale = n > 1 ? 1.0 / (nn - 1.0) : 0.0;

    std::vector<int> label(n);
    std::iota(label.begin(), label.end(), 0);
    std::vector<double> visit(n), tele(n), exit_links(n), size(n, 1.0), out_flow(n);
    double node_terms = 0.0;
    for (int a = 0; a < n; ++a) {
        visit[a] = flow.visit[a];
        tele[a] = flow.teleport[a];
        out_flow[a] = flow.link_flow.row(a).sum();
        exit_links[a] = out_flow[a];
        node_terms += plogp(visit[a]);
    }
    auto module_exit = [&](double t, double sz, double links) { return t * (nn - sz) * tele_scale + links; };

    double total_exit = 0.0, exit_terms = 0.0, module_terms = 0.0;
    for (int m = 0; m < n; ++m) {
        const double q = module_exit(tele[m], size[m], exit_links[m]);
        total_exit += q;
        exit_terms += plogp(q);
        module_terms += plogp(q + visit[m]);
    }
    auto codelength = [&] { return plogp(total_exit) - 2.0 * exit_terms - node_terms + module_terms; };

    double current = codelength();
    result.trace.push_back(current);
    std::vector<int> empty_modules;
    std::vector<double> to_module(n, 0.0), from_module(n, 0.0);
    std::vector<int> touched;

    for (int pass = 0; pass < 200; ++pass) {
        Rng rng(seed, static_cast<std::uint64_t>(pass));
        const auto order = random_permutation(static_cast<std::size_t>(n), rng);
        bool moved_any = false;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const int a = static_cast<int>(order[k]);
            const int old_m = label[a];
            touched.clear();
            for (int b = 0; b < n; ++b) {
                if (b == a) continue;
                const double f_out = flow.link_flow(a, b), f_in = flow.link_flow(b, a);
                if (f_out <= 0.0 && f_in <= 0.0) continue;
                const int m = label[b];
                if (to_module[m] == 0.0 && from_module[m] == 0.0) touched.push_back(m);
                to_module[m] += f_out;
                from_module[m] += f_in;
            }
            // Removing a from its module.
            const double old_q = module_exit(tele[old_m], size[old_m], exit_links[old_m]);
            const double rem_links = exit_links[old_m] - out_flow[a] + to_module[old_m] + from_module[old_m];
            const double rem_tele = tele[old_m] - tele[a];
            const double rem_visit = visit[old_m] - visit[a];
            const double rem_size = size[old_m] - 1.0;
            const double rem_q = rem_size > 0.0 ? module_exit(rem_tele, rem_size, rem_links) : 0.0;

            auto evaluate = [&](int target, double& new_total, double& new_exit_terms, double& new_module_terms,
                                double& target_links) {
                const double t_links = target >= 0 ? exit_links[target] : 0.0;
                const double t_tele = target >= 0 ? tele[target] : 0.0;
                const double t_visit = target >= 0 ? visit[target] : 0.0;
                const double t_size = target >= 0 ? size[target] : 0.0;
                const double t_q = target >= 0 ? module_exit(t_tele, t_size, t_links) : 0.0;
                const double f_to = target >= 0 ? to_module[target] : 0.0;
                const double f_from = target >= 0 ? from_module[target] : 0.0;
                target_links = t_links + out_flow[a] - f_to - f_from;
                const double add_q = module_exit(t_tele + tele[a], t_size + 1.0, target_links);
                new_total = total_exit - old_q - t_q + rem_q + add_q;
                new_exit_terms = exit_terms - plogp(old_q) - plogp(t_q) + plogp(rem_q) + plogp(add_q);
                new_module_terms = module_terms - plogp(old_q + visit[old_m]) - plogp(t_q + t_visit) +
                                   plogp(rem_q + rem_visit) + plogp(add_q + t_visit + visit[a]);
                return plogp(new_total) - 2.0 * new_exit_terms - node_terms + new_module_terms;
            };

            int best_target = old_m;
            double best_len = current, best_total = 0, best_exit = 0, best_module = 0, best_links = 0;
            auto consider = [&](int target) {
                double t, e, m, l;
                const double len = evaluate(target, t, e, m, l);
                if (len < best_len - 1e-12) {
                    best_len = len;
                    best_target = target;
                    best_total = t;
                    best_exit = e;
                    best_module = m;
                    best_links = l;
                }
            };
            std::sort(touched.begin(), touched.end());
            for (int m : touched)
                if (m != old_m) consider(m);
            if (size[old_m] > 1.0) consider(-1);

            for (int m : touched) to_module[m] = from_module[m] = 0.0;
            if (best_target == old_m) continue;

            int target = best_target;
            if (target < 0) {
                // A fresh module always exists: there are n slots and old_m holds >= 2 nodes.
                target = empty_modules.back();
                empty_modules.pop_back();
            }
            exit_links[old_m] = rem_links;
            tele[old_m] = rem_tele;
            visit[old_m] = rem_visit;
            size[old_m] = rem_size;
            if (rem_size == 0.0) {
                exit_links[old_m] = tele[old_m] = visit[old_m] = 0.0;
                empty_modules.push_back(old_m);
            }
            exit_links[target] = best_links;
            tele[target] += tele[a];
            visit[target] += visit[a];
            size[target] += 1.0;
            label[a] = target;
            total_exit = best_total;
            exit_terms = best_exit;
            module_terms = best_module;
            current = best_len;
            result.trace.push_back(current);
            moved_any = true;
        }
        result.passes = pass + 1;
        if (!moved_any) break;
    }

    std::vector<int> labels = canonical_labels(label);
    result.codelength = map_equation_codelength(flow, labels);
    result.one_module_codelength = map_equation_codelength(flow, std::vector<int>(n, 0));
    if (result.one_module_codelength < result.codelength - 1e-12) {
        labels.assign(n, 0);
        result.codelength = result.one_module_codelength;
    }
    result.partition.labels = std::move(labels);
    return result;
}

}  // namespace mobnet::network
