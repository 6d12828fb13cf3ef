#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dnx/graph.hpp"

namespace dnx {

enum class Split : std::uint8_t { train, val, test };

struct SplitMasks {
    std::vector<bool> train;
    std::vector<bool> val;
    std::vector<bool> test;

    bool empty() const { return train.empty(); }
    std::vector<NodeId> nodes(Split s) const;

    friend bool operator==(const SplitMasks&, const SplitMasks&) = default;
};

/// A node-classification benchmark: graph, features, labels and, for the
/// synthetic benchmarks, the motif each node belongs to.
struct Dataset {
    std::string name;
    Graph graph;
    FeatureMatrix features;
    std::vector<int> labels;
    int num_classes = 0;
    // node -> members of its motif. Empty when the file carries no ground truth.
    std::map<NodeId, std::vector<NodeId>> ground_truth;
    // node -> motif index, -1 for base nodes. Empty when unknown.
    std::vector<int> motif_of;
    SplitMasks splits;
    // Label ids that denote base (non-motif) nodes.
    std::vector<int> base_classes;

    std::size_t num_nodes() const { return graph.num_nodes(); }
    bool has_ground_truth() const { return !ground_truth.empty(); }
    bool is_motif_node(NodeId u) const { return ground_truth.count(u) != 0; }
    std::vector<NodeId> motif_nodes() const;

    /// Checks every structural invariant; throws DataError on violation.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class Benchmark { ba_house, ba_community, ba_grids, tree_cycles, tree_grids, ba_bottle };

struct GenSpec {
    Benchmark benchmark = Benchmark::ba_house;
    std::uint64_t seed = 0;
};

struct BenchmarkStats {
    std::size_t nodes;
    int labels;
    std::size_t reference_edges;  // directed edge count of the reference release
};

/// Canonical names: ba-house, ba-community, ba-grids, tree-cycles,
/// tree-grids, ba-bottle. Throws UsageError on an unknown name.
Benchmark parse_benchmark(std::string_view name);
std::string_view benchmark_name(Benchmark b);
BenchmarkStats reference_stats(Benchmark b);
const std::vector<Benchmark>& all_benchmarks();

Dataset generate(const GenSpec& request);

/// One-hot degree features; degrees above `cap` share the last column.
FeatureMatrix one_hot_degree(const Graph& g, int cap);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dnx
