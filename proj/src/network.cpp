#include "mobnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "mobnet/csv.hpp"
#include "mobnet/error.hpp"

namespace mobnet::network {

MobilityNetwork::MobilityNetwork(std::vector<std::string> nodes, Eigen::MatrixXd weights)
    : nodes_(std::move(nodes)), weights_(std::move(weights)) {
    if (weights_.rows() != weights_.cols()) throw InputError("weight matrix is not square");
    if (static_cast<std::size_t>(weights_.rows()) != nodes_.size())
        throw InputError("weight matrix size does not match the node list");
    for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
        if (weights_(i, i) != 0.0) throw InputError("self-loop weight on node " + nodes_[i]);
        for (Eigen::Index j = 0; j < weights_.cols(); ++j)
            if (!std::isfinite(weights_(i, j)) || weights_(i, j) < 0.0)
                throw InputError("invalid weight " + nodes_[i] + "->" + nodes_[j]);
    }
}

Eigen::MatrixXd MobilityNetwork::adjacency() const {
    return (weights_.array() > 0.0).cast<double>().matrix();
}

std::optional<Eigen::Index> MobilityNetwork::index_of(std::string_view node) const {
    auto it = std::find(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - nodes_.begin());
}

MobilityNetwork from_flow_table(const ingest::FlowTable& table, std::optional<int> year) {
    if (table.scope() != ingest::Scope::internal)
        throw InputError("networks are built from internal-scope flow tables only");
    if (year && table.cumulative()) throw InputError("cannot take a year slice of a cumulative flow table");
    std::vector<std::string> nodes(table.universe().begin(), table.universe().end());
    std::map<std::string_view, Eigen::Index> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(nodes.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [key, count] : table.entries()) {
        if (year && key.year != year) continue;
        w(index.at(key.sender), index.at(key.receiver)) += count;
    }
    return MobilityNetwork(std::move(nodes), std::move(w));
}

std::string to_string(StrengthMode mode) {
    switch (mode) {
        case StrengthMode::in: return "in";
        case StrengthMode::out: return "out";
        case StrengthMode::total: return "total";
    }
    return "unknown";
}

std::optional<StrengthMode> parse_strength_mode(std::string_view name) {
    if (name == "in") return StrengthMode::in;
    if (name == "out") return StrengthMode::out;
    if (name == "total") return StrengthMode::total;
    return std::nullopt;
}

Eigen::VectorXd node_strength(const MobilityNetwork& network, StrengthMode mode) {
    const auto& w = network.weights();
    switch (mode) {
        case StrengthMode::out: return w.rowwise().sum();
        case StrengthMode::in: return w.colwise().sum().transpose();
        case StrengthMode::total: return w.rowwise().sum() + w.colwise().sum().transpose();
    }
    return {};
}

HitsScores hits_scores(const MobilityNetwork& network, double tol, int max_iter) {
    const auto& w = network.weights();
    if (w.size() == 0 || !(w.maxCoeff() > 0.0)) throw InputError("HITS needs at least one positive weight");
    const Eigen::Index n = network.size();
    HitsScores s;
    s.hub = Eigen::VectorXd::Ones(n).normalized();
    s.authority = Eigen::VectorXd::Ones(n).normalized();
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd authority = w.transpose() * s.hub;
        authority.normalize();
        Eigen::VectorXd hub = w * authority;
        hub.normalize();
        const double change = std::max((authority - s.authority).cwiseAbs().maxCoeff(),
                                       (hub - s.hub).cwiseAbs().maxCoeff());
        s.authority = std::move(authority);
        s.hub = std::move(hub);
        s.iterations = it;
        if (change < tol) {
            s.converged = true;
            break;
        }
    }
    return s;
}

SCoreResult s_core_decomposition(const MobilityNetwork& network, StrengthMode mode) {
    const auto& w = network.weights();
    const Eigen::Index n = network.size();
    SCoreResult result;
    result.mode = mode;
    result.shell.assign(static_cast<std::size_t>(n), -1);
    std::vector<bool> alive(static_cast<std::size_t>(n), true);
    Eigen::Index remaining = n;

    auto strengths = [&] {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (!alive[j]) continue;
                if (mode != StrengthMode::in) s[i] += w(i, j);
                if (mode != StrengthMode::out) s[i] += w(j, i);
            }
        }
        return s;
    };

    int shell = 0;
    while (remaining > 0) {
        Eigen::VectorXd s = strengths();
        double threshold = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i)
            if (alive[i]) threshold = std::min(threshold, s[i]);
        bool removed = true;
        while (removed && remaining > 0) {
            removed = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (alive[i] && s[i] <= threshold) {
                    alive[i] = false;
                    result.shell[i] = shell;
                    --remaining;
                    removed = true;
                }
            }
            if (removed) s = strengths();
        }
        result.thresholds.push_back(threshold);
        ++shell;
    }
    return result;
}

double type7_quantile(std::span<const double> values, double q) {
    if (values.empty()) throw InputError("quantile of an empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

void check_scores(const std::vector<std::string>& nodes, std::span<const double> scores,
                  const std::optional<std::span<const double>>& other) {
    if (scores.empty()) throw InputError("partition of an empty score set");
    if (scores.size() != nodes.size() || (other && other->size() != nodes.size()))
        throw InputError("score vector length does not match the node list");
}

}  // namespace

Partition quantile_partition(const std::vector<std::string>& nodes, std::span<const double> scores, double q,
                             std::optional<std::span<const double>> other) {
    check_scores(nodes, scores, other);
    if (!(q > 0.0 && q < 1.0)) throw InputError("quantile level must lie in (0, 1)");
    const double cut = type7_quantile(scores, q);
    const double other_cut = other ? type7_quantile(*other, q) : 0.0;
    Partition p{nodes, std::vector<int>(nodes.size(), 0)};
    for (std::size_t i = 0; i < nodes.size(); ++i)
        p.labels[i] = (scores[i] >= cut || (other && (*other)[i] >= other_cut)) ? 1 : 0;
    return p;
}

Partition cutoff_partition(const std::vector<std::string>& nodes, std::span<const double> scores, double cutoff,
                           std::optional<std::span<const double>> other) {
    check_scores(nodes, scores, other);
    Partition p{nodes, std::vector<int>(nodes.size(), 0)};
    for (std::size_t i = 0; i < nodes.size(); ++i)
        p.labels[i] = (scores[i] > cutoff || (other && (*other)[i] > cutoff)) ? 1 : 0;
    return p;
}

double congruence(const Partition& a, const Partition& b) {
    if (a.nodes.size() != a.labels.size() || b.nodes.size() != b.labels.size())
        throw InputError("partition labels do not match its node list");
    std::map<std::string_view, int> lookup;
    for (std::size_t i = 0; i < b.nodes.size(); ++i) lookup[b.nodes[i]] = b.labels[i];
    if (lookup.size() != b.nodes.size() || a.nodes.size() != b.nodes.size())
        throw InputError("partitions cover different node sets");
    if (a.nodes.empty()) return 1.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        auto it = lookup.find(a.nodes[i]);
        if (it == lookup.end()) throw InputError("node " + a.nodes[i] + " missing from the second partition");
        if (it->second == a.labels[i]) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(a.nodes.size());
}

std::vector<double> coreness_scores(const SCoreResult& cores) {
    return {cores.shell.begin(), cores.shell.end()};
}

void write_edge_list(std::ostream& out, const MobilityNetwork& network) {
    csv::Writer wr(out);
    wr.row({"sender", "receiver", "weight"});
    const auto& w = network.weights();
    for (Eigen::Index i = 0; i < network.size(); ++i)
        for (Eigen::Index j = 0; j < network.size(); ++j)
            if (w(i, j) > 0.0) wr.row({network.nodes()[i], network.nodes()[j], csv::format_number(w(i, j))});
}

MobilityNetwork read_edge_list(std::istream& in, std::optional<std::vector<std::string>> nodes) {
    const auto table = csv::parse(in);
    const auto c_s = table.column("sender"), c_r = table.column("receiver"), c_w = table.column("weight");
    std::vector<std::tuple<std::string, std::string, double>> edges;
    std::set<std::string> seen;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw InputError("edge list: wrong field count");
        edges.emplace_back(row[c_s], row[c_r], csv::parse_double(row[c_w], "weight"));
        seen.insert(row[c_s]);
        seen.insert(row[c_r]);
    }
    std::vector<std::string> names = nodes ? std::move(*nodes) : std::vector<std::string>(seen.begin(), seen.end());
    std::map<std::string_view, Eigen::Index> index;
    for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<Eigen::Index>(i);
    const auto n = static_cast<Eigen::Index>(names.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [s, r, weight] : edges) {
        auto si = index.find(s), ri = index.find(r);
        if (si == index.end() || ri == index.end()) throw InputError("edge " + s + "->" + r + " leaves the node list");
        w(si->second, ri->second) += weight;
    }
    return MobilityNetwork(std::move(names), std::move(w));
}

void write_scores(std::ostream& out, const MobilityNetwork& network, const HitsScores& scores) {
    csv::Writer w(out);
    w.row({"region", "hub", "authority"});
    for (Eigen::Index i = 0; i < network.size(); ++i)
        w.row({network.nodes()[i], csv::format_number(scores.hub[i]), csv::format_number(scores.authority[i])});
}

void write_shells(std::ostream& out, const MobilityNetwork& network, const SCoreResult& cores) {
    csv::Writer w(out);
    w.row({"region", "shell", "threshold"});
    for (Eigen::Index i = 0; i < network.size(); ++i) {
        const int shell = cores.shell[i];
        w.row({network.nodes()[i], std::to_string(shell), csv::format_number(cores.thresholds[shell])});
    }
}

void write_partition(std::ostream& out, const Partition& partition) {
    csv::Writer w(out);
    w.row({"region", "label"});
    for (std::size_t i = 0; i < partition.nodes.size(); ++i)
        w.row({partition.nodes[i], std::to_string(partition.labels[i])});
}

Partition read_partition(std::istream& in) {
    const auto table = csv::parse(in);
    const auto c_region = table.column("region"), c_label = table.column("label");
    Partition p;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw InputError("partition: wrong field count");
        p.nodes.push_back(row[c_region]);
        p.labels.push_back(csv::parse_int(row[c_label], "label"));
    }
    return p;
}

Partition read_partition(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_partition(in);
}

}  // namespace mobnet::network
