#include "dnx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "dnx/error.hpp"

namespace dnx {

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n) {
    for (auto& [a, b] : edges) {
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n)
            throw DataError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") has an endpoint outside [0, " + std::to_string(n) + ")");
        if (a == b) throw DataError("self-loop on node " + std::to_string(a));
        if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    std::vector<int> deg(n, 0);
    for (const auto& [a, b] : edges_) {
        ++deg[a];
        ++deg[b];
    }
    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
    adj_.resize(offsets_[n]);
    std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& [a, b] : edges_) {
        adj_[fill[a]++] = b;
        adj_[fill[b]++] = a;
    }
    for (std::size_t i = 0; i < n; ++i)
        std::sort(adj_.begin() + offsets_[i], adj_.begin() + offsets_[i + 1]);
}

std::vector<int> Graph::degrees() const {
    std::vector<int> d(n_);
    for (std::size_t i = 0; i < n_; ++i) d[i] = degree(static_cast<NodeId>(i));
    return d;
}

bool Graph::has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
}

long Graph::edge_index(NodeId u, NodeId v) const {
    const Edge key{std::min(u, v), std::max(u, v)};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
    if (it == edges_.end() || *it != key) return -1;
    return it - edges_.begin();
}

std::vector<NodeId> NormalizedAdjacency::support(NodeId u) const {
    std::vector<NodeId> out;
    for (SparseRows::InnerIterator it(rows, u); it; ++it) out.push_back(it.col());
    return out;
}

std::vector<std::pair<NodeId, double>> NormalizedAdjacency::row(NodeId u) const {
    std::vector<std::pair<NodeId, double>> out;
    for (SparseRows::InnerIterator it(rows, u); it; ++it) out.emplace_back(it.col(), it.value());
    return out;
}

NormalizedAdjacency build_normalized_adjacency(const Graph& g) {
    const auto n = static_cast<int>(g.num_nodes());
    std::vector<double> inv_sqrt(n);
    for (int i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(g.degree(i) + 1.0);

    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(n + 2 * g.num_edges());
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (const auto& [a, b] : g.edges()) {
        const double w = inv_sqrt[a] * inv_sqrt[b];
        trip.emplace_back(a, b, w);
        trip.emplace_back(b, a, w);
    }
    NormalizedAdjacency out;
    out.n = g.num_nodes();
    out.depth = 1;
    out.rows.resize(n, n);
    out.rows.setFromTriplets(trip.begin(), trip.end());
    out.rows.makeCompressed();
    return out;
}

NormalizedAdjacency power(const NormalizedAdjacency& adj, int depth) {
    if (depth < 1) throw UsageError("adjacency power must be >= 1, got " + std::to_string(depth));
    if (adj.depth != 1) throw UsageError("power expects a depth-1 normalized adjacency");
    NormalizedAdjacency out;
    out.n = adj.n;
    out.depth = depth;
    out.rows = adj.rows;
    for (int l = 1; l < depth; ++l) {
        SparseRows next = (out.rows * adj.rows).pruned(0.0);
        out.rows = std::move(next);
    }
    out.rows.makeCompressed();
    return out;
}

NormalizedAdjacency normalized_adjacency_power(const Graph& g, int depth) {
    return power(build_normalized_adjacency(g), depth);
}

std::vector<NodeId> l_hop_neighborhood(const Graph& g, NodeId u, int hops) {
    std::vector<int> dist(g.num_nodes(), -1);
    std::vector<NodeId> out{u};
    std::queue<NodeId> frontier;
    dist[u] = 0;
    frontier.push(u);
    while (!frontier.empty()) {
        const NodeId v = frontier.front();
        frontier.pop();
        if (dist[v] == hops) continue;
        for (NodeId w : g.neighbors(v)) {
            if (dist[w] >= 0) continue;
            dist[w] = dist[v] + 1;
            out.push_back(w);
            frontier.push(w);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dnx
