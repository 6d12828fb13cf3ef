#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "dnx/dataset.hpp"
#include "dnx/error.hpp"
#include "dnx/rng.hpp"

namespace dnx {

namespace {

// A planted motif: local edges, per-node role label (1-based, 0 is base),
// and the local node that receives the attachment edge.
struct MotifShape {
    int size;
    std::vector<Edge> edges;
    std::vector<int> roles;
    int anchor;
};

// Square 0-1-2-3 with roof 4 on the top edge 0-1.
MotifShape house() {
    return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 0}, {4, 1}}, {2, 2, 3, 3, 1}, 0};
}

// Square 0-1-2-3 with a one-node neck 4 on corner 0; attached at the
// opposite corner 2. Roles: neck, shoulder, body.
MotifShape bottle() {
    return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 0}}, {2, 3, 3, 3, 1}, 2};
}

MotifShape grid3() {
    MotifShape s{9, {}, std::vector<int>(9, 1), 0};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            if (c < 2) s.edges.emplace_back(r * 3 + c, r * 3 + c + 1);
            if (r < 2) s.edges.emplace_back(r * 3 + c, (r + 1) * 3 + c);
        }
    return s;
}

MotifShape cycle6() {
    MotifShape s{6, {}, std::vector<int>(6, 1), 0};
    for (int i = 0; i < 6; ++i) s.edges.emplace_back(i, (i + 1) % 6);
    return s;
}

// Barabasi-Albert preferential attachment: the first new node links to the
// m seed nodes, later nodes pick m distinct targets with probability
// proportional to degree.
std::vector<Edge> barabasi_albert(int n, int m, Rng& rng) {
    std::vector<Edge> edges;
    std::vector<NodeId> targets(m);
    std::iota(targets.begin(), targets.end(), 0);
    std::vector<NodeId> repeated;
    for (NodeId source = m; source < n; ++source) {
        for (NodeId t : targets) edges.emplace_back(t, source);
        repeated.insert(repeated.end(), targets.begin(), targets.end());
        repeated.insert(repeated.end(), m, source);
        std::vector<NodeId> next;
        std::uniform_int_distribution<std::size_t> pick(0, repeated.size() - 1);
        while (static_cast<int>(next.size()) < m) {
            const NodeId c = repeated[pick(rng)];
            if (std::find(next.begin(), next.end(), c) == next.end()) next.push_back(c);
        }
        targets = std::move(next);
    }
    return edges;
}

// Balanced binary tree of the given height in BFS numbering.
std::vector<Edge> balanced_binary_tree(int height, int& nodes) {
    nodes = (1 << (height + 1)) - 1;
    std::vector<Edge> edges;
    for (NodeId v = 1; v < nodes; ++v) edges.emplace_back((v - 1) / 2, v);
    return edges;
}

struct Builder {
    std::vector<Edge> edges;
    std::vector<int> labels;
    std::vector<int> motif_of;
    std::map<NodeId, std::vector<NodeId>> truth;
    int motif_count = 0;

    NodeId size() const { return static_cast<NodeId>(labels.size()); }

    void add_base(int n, const std::vector<Edge>& base_edges, int label) {
        const NodeId off = size();
        for (const auto& [a, b] : base_edges) edges.emplace_back(a + off, b + off);
        labels.insert(labels.end(), n, label);
        motif_of.insert(motif_of.end(), n, -1);
    }

    // Plants `count` copies of `shape`, each attached by one edge to a
    // distinct base node drawn uniformly from [base_offset, base_offset + base_size).
    void plant(const MotifShape& shape, int count, NodeId base_offset, int base_size,
               int label_offset, Rng& rng) {
        std::vector<NodeId> anchors(base_size);
        std::iota(anchors.begin(), anchors.end(), base_offset);
        std::shuffle(anchors.begin(), anchors.end(), rng);
        for (int k = 0; k < count; ++k) {
            const NodeId off = size();
            std::vector<NodeId> members(shape.size);
            for (int i = 0; i < shape.size; ++i) {
                members[i] = off + i;
                labels.push_back(label_offset + shape.roles[i]);
                motif_of.push_back(motif_count);
            }
            for (const auto& [a, b] : shape.edges) edges.emplace_back(off + a, off + b);
            edges.emplace_back(anchors[k], off + shape.anchor);
            for (NodeId v : members) truth[v] = members;
            ++motif_count;
        }
    }

    // floor(fraction * |E|) extra edges between uniformly drawn node pairs
    // that are not yet adjacent.
    void add_noise_edges(double fraction, Rng& rng) {
        std::set<Edge> present;
        for (auto [a, b] : edges) present.emplace(std::min(a, b), std::max(a, b));
        const auto extra = static_cast<std::size_t>(fraction * static_cast<double>(present.size()));
        std::uniform_int_distribution<NodeId> pick(0, size() - 1);
        std::size_t added = 0;
        while (added < extra) {
            const NodeId a = pick(rng);
            const NodeId c = pick(rng);
            if (a == c || !present.emplace(std::min(a, c), std::max(a, c)).second) continue;
            edges.emplace_back(std::min(a, c), std::max(a, c));
            ++added;
        }
    }
};

int max_role(const MotifShape& s) { return *std::max_element(s.roles.begin(), s.roles.end()); }

constexpr int kBaBase = 300;
constexpr int kBaAttach = 5;
constexpr int kTreeHeight = 8;

constexpr double kNoiseFraction = 0.01;

Builder ba_with_motifs(const MotifShape& shape, int count, Rng& rng) {
    Builder b;
    b.add_base(kBaBase, barabasi_albert(kBaBase, kBaAttach, rng), 0);
    b.plant(shape, count, 0, kBaBase, 0, rng);
    b.add_noise_edges(kNoiseFraction, rng);
    return b;
}

Builder tree_with_motifs(const MotifShape& shape, int count, Rng& rng) {
    Builder b;
    int nodes = 0;
    auto tree = balanced_binary_tree(kTreeHeight, nodes);
    b.add_base(nodes, tree, 0);
    b.plant(shape, count, 0, nodes, 0, rng);
    return b;
}

SplitMasks random_splits(std::size_t n, Rng& rng) {
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
    SplitMasks s;
    s.train.assign(n, false);
    s.val.assign(n, false);
    s.test.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        auto& mask = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
        mask[perm[i]] = true;
    }
    return s;
}

int max_degree(const Graph& g) {
    int m = 0;
    for (std::size_t i = 0; i < g.num_nodes(); ++i) m = std::max(m, g.degree(static_cast<NodeId>(i)));
    return m;
}

}  // namespace

Benchmark parse_benchmark(std::string_view name) {
    for (Benchmark b : all_benchmarks())
        if (benchmark_name(b) == name) return b;
    throw UsageError("unknown dataset '" + std::string(name) +
                     "' (valid: ba-house, ba-community, ba-grids, tree-cycles, tree-grids, "
                     "ba-bottle)");
}

std::string_view benchmark_name(Benchmark b) {
    switch (b) {
        case Benchmark::ba_house: return "ba-house";
        case Benchmark::ba_community: return "ba-community";
        case Benchmark::ba_grids: return "ba-grids";
        case Benchmark::tree_cycles: return "tree-cycles";
        case Benchmark::tree_grids: return "tree-grids";
        case Benchmark::ba_bottle: return "ba-bottle";
    }
    return "?";
}

BenchmarkStats reference_stats(Benchmark b) {
    switch (b) {
        case Benchmark::ba_house: return {700, 4, 4110};
        case Benchmark::ba_community: return {1400, 8, 8920};
        case Benchmark::ba_grids: return {1020, 2, 5080};
        case Benchmark::tree_cycles: return {871, 2, 1950};
        case Benchmark::tree_grids: return {1231, 2, 3410};
        case Benchmark::ba_bottle: return {700, 4, 3948};
    }
    return {0, 0, 0};
}

const std::vector<Benchmark>& all_benchmarks() {
    static const std::vector<Benchmark> all{Benchmark::ba_house,    Benchmark::ba_community,
                                            Benchmark::ba_grids,    Benchmark::tree_cycles,
                                            Benchmark::tree_grids,  Benchmark::ba_bottle};
    return all;
}

Dataset generate(const GenSpec& request) {
    Builder b;
    int num_classes = 0;
    std::vector<int> base_classes{0};
    constexpr int kCommunityFeatures = 10;
    constexpr int kInterCommunityEdges = 350;

    switch (request.benchmark) {
        case Benchmark::ba_house: {
            auto rng = make_stream(request.seed, "gen/base");
            b = ba_with_motifs(house(), 80, rng);
            num_classes = max_role(house()) + 1;
            break;
        }
        case Benchmark::ba_bottle: {
            auto rng = make_stream(request.seed, "gen/base");
            b = ba_with_motifs(bottle(), 80, rng);
            num_classes = max_role(bottle()) + 1;
            break;
        }
        case Benchmark::ba_grids: {
            auto rng = make_stream(request.seed, "gen/base");
            b = ba_with_motifs(grid3(), 80, rng);
            num_classes = 2;
            break;
        }
        case Benchmark::tree_cycles: {
            auto rng = make_stream(request.seed, "gen/base");
            b = tree_with_motifs(cycle6(), 60, rng);
            num_classes = 2;
            break;
        }
        case Benchmark::tree_grids: {
            auto rng = make_stream(request.seed, "gen/base");
            b = tree_with_motifs(grid3(), 80, rng);
            num_classes = 2;
            break;
        }
        case Benchmark::ba_community: {
            // Two BA-House graphs; community c's labels are shifted by 4c.
            const int roles = max_role(house()) + 1;
            for (int c = 0; c < 2; ++c) {
                auto rng = make_stream(request.seed, "gen/base", static_cast<std::uint64_t>(c));
                Builder part = ba_with_motifs(house(), 80, rng);
                const NodeId off = b.size();
                for (const auto& [x, y] : part.edges) b.edges.emplace_back(x + off, y + off);
                for (int y : part.labels) b.labels.push_back(y + c * roles);
                for (int m : part.motif_of) b.motif_of.push_back(m < 0 ? -1 : m + b.motif_count);
                for (const auto& [u, members] : part.truth) {
                    std::vector<NodeId> shifted(members);
                    for (auto& v : shifted) v += off;
                    b.truth[u + off] = std::move(shifted);
                }
                b.motif_count += part.motif_count;
            }
            const NodeId half = b.size() / 2;
            auto rng = make_stream(request.seed, "gen/inter-community");
            std::uniform_int_distribution<NodeId> pick(0, kBaBase - 1);
            std::set<Edge> inter;
            while (static_cast<int>(inter.size()) < kInterCommunityEdges)
                inter.emplace(pick(rng), half + pick(rng));
            b.edges.insert(b.edges.end(), inter.begin(), inter.end());
            num_classes = 2 * roles;
            base_classes = {0, roles};
            break;
        }
    }

    Dataset d;
    d.name = std::string(benchmark_name(request.benchmark));
    const auto n = static_cast<std::size_t>(b.size());
    d.graph = Graph(n, std::move(b.edges));
    d.labels = std::move(b.labels);
    d.num_classes = num_classes;
    d.motif_of = std::move(b.motif_of);
    d.ground_truth = std::move(b.truth);
    d.base_classes = base_classes;
    d.features = one_hot_degree(d.graph, max_degree(d.graph));

    if (request.benchmark == Benchmark::ba_community) {
        // Community-dependent Gaussian block so the two halves are separable.
        auto rng = make_stream(request.seed, "gen/features");
        std::normal_distribution<double> noise(0.0, 0.5);
        FeatureMatrix x(d.features.rows(), d.features.cols() + kCommunityFeatures);
        x.leftCols(d.features.cols()) = d.features;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double mean = i < static_cast<Eigen::Index>(n / 2) ? -1.0 : 1.0;
            for (int c = 0; c < kCommunityFeatures; ++c)
                x(i, d.features.cols() + c) = mean + noise(rng);
        }
        d.features = std::move(x);
    }

    auto split_rng = make_stream(request.seed, "gen/splits");
    d.splits = random_splits(n, split_rng);

    const auto ref = reference_stats(request.benchmark);
    if (n != ref.nodes || d.num_classes != ref.labels)
        throw Error("generator produced " + std::to_string(n) + " nodes / " +
                    std::to_string(d.num_classes) + " labels for " + d.name);
    d.validate();
    return d;
}

}  // namespace dnx
