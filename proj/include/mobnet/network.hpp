#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mobnet/ingest.hpp"

namespace mobnet::network {

// Weighted directed graph over region codes; weights(i, j) counts
// researchers moving from node i to node j.
class MobilityNetwork {
public:
    MobilityNetwork() = default;
    // Throws InputError on a non-square matrix, size mismatch, negative or
    // non-finite weights, or a non-zero diagonal.
    MobilityNetwork(std::vector<std::string> nodes, Eigen::MatrixXd weights);

    const std::vector<std::string>& nodes() const { return nodes_; }
    const Eigen::MatrixXd& weights() const { return weights_; }
    Eigen::Index size() const { return weights_.rows(); }
    // a_ij = 1 iff w_ij > 0.
    Eigen::MatrixXd adjacency() const;
    std::optional<Eigen::Index> index_of(std::string_view node) const;

private:
    std::vector<std::string> nodes_;
    Eigen::MatrixXd weights_;
};

// Sums an internal-scope flow table over all years (year empty) or one year.
MobilityNetwork from_flow_table(const ingest::FlowTable& table, std::optional<int> year = std::nullopt);

enum class StrengthMode { in, out, total };
std::string to_string(StrengthMode mode);
std::optional<StrengthMode> parse_strength_mode(std::string_view name);

Eigen::VectorXd node_strength(const MobilityNetwork& network, StrengthMode mode);

struct HitsScores {
    Eigen::VectorXd hub;
    Eigen::VectorXd authority;
    int iterations = 0;
    bool converged = false;
};

// Power iteration from the all-ones vector: authority <- W^T hub,
// hub <- W authority, each normalized to unit Euclidean norm. Stops when
// both vectors move less than `tol` in max-norm.
HitsScores hits_scores(const MobilityNetwork& network, double tol = 1e-10, int max_iter = 1000);

struct SCoreResult {
    // Strictly increasing; thresholds[k] is the removal threshold of shell k.
    std::vector<double> thresholds;
    // Shell index per node (0 = most peripheral).
    std::vector<int> shell;
    StrengthMode mode = StrengthMode::total;

    int shell_count() const { return static_cast<int>(thresholds.size()); }
};

// Each round takes the minimum strength of the current core as threshold
// and removes every node whose strength, recomputed on the shrinking
// subnetwork, is at or below it. The nodes removed in round k form shell k.
SCoreResult s_core_decomposition(const MobilityNetwork& network, StrengthMode mode);

// Binary (1 = high, 0 = low) or community labels over a node list.
struct Partition {
    std::vector<std::string> nodes;
    std::vector<int> labels;
};

// Linear-interpolation sample quantile (Hyndman-Fan type 7).
double type7_quantile(std::span<const double> values, double q);

// High = score >= the q-quantile of its own score set; with `other`, a
// node is high when it is high in either set.
Partition quantile_partition(const std::vector<std::string>& nodes, std::span<const double> scores, double q,
                             std::optional<std::span<const double>> other = std::nullopt);

// High = score strictly above `cutoff` (in either set when `other` is given).
Partition cutoff_partition(const std::vector<std::string>& nodes, std::span<const double> scores, double cutoff,
                           std::optional<std::span<const double>> other = std::nullopt);

// Fraction of nodes with equal labels. Throws InputError on node-set mismatch.
double congruence(const Partition& a, const Partition& b);

// Shell index as a per-node score, for quantile partitions on coreness.
std::vector<double> coreness_scores(const SCoreResult& cores);

void write_edge_list(std::ostream& out, const MobilityNetwork& network);
MobilityNetwork read_edge_list(std::istream& in, std::optional<std::vector<std::string>> nodes = std::nullopt);
void write_scores(std::ostream& out, const MobilityNetwork& network, const HitsScores& scores);
void write_shells(std::ostream& out, const MobilityNetwork& network, const SCoreResult& cores);
void write_partition(std::ostream& out, const Partition& partition);
Partition read_partition(std::istream& in);
Partition read_partition(const std::filesystem::path& path);

}  // namespace mobnet::network
