#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mobnet/network.hpp"

namespace mobnet::network {

// Symmetrized weights w_ij + w_ji used by the undirected analyses.
Eigen::MatrixXd undirected_weights(const MobilityNetwork& network);

// Shortest-path edge betweenness on an undirected weighted graph with edge
// length 1 / weight. Keys are (i, j) with i < j; each unordered node pair
// contributes once.
std::map<std::pair<int, int>, double> edge_betweenness(const Eigen::MatrixXd& undirected);

// Newman modularity of `labels` on an undirected weighted graph.
double modularity(const Eigen::MatrixXd& undirected, const std::vector<int>& labels);

// Relabels communities 0, 1, ... in order of first appearance.
std::vector<int> canonical_labels(const std::vector<int>& labels);

struct EdgeRemoval {
    int from = 0;
    int to = 0;
    double betweenness = 0.0;
    int components = 0;
    double modularity = 0.0;
};

struct GirvanNewmanResult {
    Partition partition;
    double modularity = 0.0;
    // Modularity of the starting components, before any removal.
    double initial_modularity = 0.0;
    std::vector<EdgeRemoval> history;
};

// Removes the highest-betweenness edge until no edge is left, recomputing
// betweenness after every removal, and returns the component partition of
// highest modularity (earliest on ties).
GirvanNewmanResult edge_betweenness_communities(const MobilityNetwork& network);

// Random-walk flow model behind the two-level map equation.
struct FlowModel {
    Eigen::VectorXd visit;        // stationary visit rates
    Eigen::MatrixXd link_flow;    // non-teleport flow along each arc
    Eigen::VectorXd teleport;     // per-node teleport flow (visit * teleport prob)
};

FlowModel random_walk_flow(const MobilityNetwork& network, double teleport = 0.15);

// Two-level map equation codelength (bits) of a module assignment.
double map_equation_codelength(const FlowModel& flow, const std::vector<int>& labels);

struct MapEquationResult {
    Partition partition;
    double codelength = 0.0;
    double one_module_codelength = 0.0;
    // Codelength after every accepted move (starting with all singletons).
    std::vector<double> trace;
    int passes = 0;
};

// Greedy node moving from singleton modules: each pass visits nodes in a
// seeded random order and moves a node to the neighbouring (or a fresh)
// module with the largest codelength decrease, until a pass changes
// nothing. The one-module solution wins when it is shorter.
MapEquationResult map_equation_communities(const MobilityNetwork& network, std::uint64_t seed,
                                           double teleport = 0.15);

}  // namespace mobnet::network
