#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dnx {

using NodeId = int;
using Edge = std::pair<NodeId, NodeId>;

// Dense node-feature matrix, row i holds the features of node i.
using FeatureMatrix = Eigen::MatrixXd;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

/// Immutable undirected, unweighted graph.
///
/// Edges are stored once each as (i, j) with i < j, sorted. Adjacency is kept
/// in CSR form with sorted neighbor lists.
class Graph {
 public:
    Graph() = default;

    /// Builds a graph from an arbitrary edge list. Pairs are normalized to
    /// i < j and deduplicated. Throws DataError on self-loops or endpoints
    /// outside [0, n).
    Graph(std::size_t n, std::vector<Edge> edges);

    std::size_t num_nodes() const { return n_; }
    std::size_t num_edges() const { return edges_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }

    std::span<const NodeId> neighbors(NodeId u) const {
        return {adj_.data() + offsets_[u], adj_.data() + offsets_[u + 1]};
    }
    int degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }
    std::vector<int> degrees() const;
    bool has_edge(NodeId u, NodeId v) const;

    /// Index of edge {u, v} in edges(), or -1.
    long edge_index(NodeId u, NodeId v) const;

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.n_ == b.n_ && a.edges_ == b.edges_;
    }

 private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::vector<int> offsets_{0};
    std::vector<NodeId> adj_;
};

/// Rows of the symmetric normalized adjacency with self-loops, raised to the
/// power `depth`: (D+I)^{-1/2} (A+I) (D+I)^{-1/2}, then ^depth.
struct NormalizedAdjacency {
    std::size_t n = 0;
    int depth = 1;
    SparseRows rows;

    /// Nonzero columns of row u, ascending.
    std::vector<NodeId> support(NodeId u) const;
    /// Entry (u, v); zero when not stored.
    double at(NodeId u, NodeId v) const { return rows.coeff(u, v); }
    /// Row u as (column, value) pairs sorted by column.
    std::vector<std::pair<NodeId, double>> row(NodeId u) const;
};

NormalizedAdjacency build_normalized_adjacency(const Graph& g);

/// depth-th power of a depth-1 normalized adjacency (sparse-sparse products).
NormalizedAdjacency power(const NormalizedAdjacency& adj, int depth);

/// Convenience: build_normalized_adjacency followed by power.
NormalizedAdjacency normalized_adjacency_power(const Graph& g, int depth);

/// Nodes at hop distance <= hops from u, including u, ascending.
std::vector<NodeId> l_hop_neighborhood(const Graph& g, NodeId u, int hops);

}  // namespace dnx
