#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dnx/distill.hpp"

namespace dnx {

enum class Method { dnx, fastdnx, adjbaseline };

/// Throws UsageError naming the valid methods.
Method parse_method(std::string_view name);
std::string_view method_name(Method m);

/// Importance scores for one prediction over the target's L-hop
/// neighborhood. Nodes outside `candidates` implicitly score zero.
struct Explanation {
    NodeId target = 0;
    Method method = Method::fastdnx;
    std::vector<NodeId> candidates;  // ascending
    Eigen::VectorXd scores;
    int iterations = 0;
    double objective = 0.0;
    double millis = 0.0;

    double score_of(NodeId v) const;
    /// Highest-scoring candidates, ties broken by ascending node id. k is
    /// clamped to the number of candidates.
    std::vector<NodeId> top_k(std::size_t k) const;
    /// Scores over all n nodes.
    Eigen::VectorXd dense(std::size_t n) const;
};

/// Per-candidate logit contributions v_j = A^L_{uj} X_j Theta for node u.
/// They sum to Z_u - b.
struct LocalContributions {
    NodeId target = 0;
    std::vector<NodeId> candidates;
    Eigen::VectorXd weights;  // A^L_{uj}
    Eigen::MatrixXd terms;    // k x C, row j = v_j
};

LocalContributions local_contributions(const SgcSurrogate& s, NodeId u);

/// ||A^L_u (diag(E) - I) X Theta||^2 restricted to candidates; writes the
/// gradient w.r.t. E when `grad` is non-null.
double dnx_objective(const LocalContributions& lc, const Eigen::VectorXd& scores,
                     Eigen::VectorXd* grad = nullptr);
double dnx_objective(const SgcSurrogate& s, NodeId u, const Eigen::VectorXd& scores);

struct DnxConfig {
    double learning_rate = 0.1;
    int max_iterations = 500;
    // Early stop when the objective moved less than `tolerance` over `window` iterations.
    double tolerance = 1e-10;
    int window = 25;
    // Softmax logits start at zero (uniform scores) unless random_init is set,
    // in which case they are drawn N(0, 1) from the given seed.
    bool random_init = false;
    std::uint64_t seed = 0;
};

/// Minimizes the objective over the simplex through a softmax
/// reparameterization and Adam. Returns the best iterate.
Explanation dnx_explain(const SgcSurrogate& s, NodeId u, const DnxConfig& config = {});

/// E_j = v_j . (Z_u - b); the scores sum to ||Z_u - b||^2.
Explanation fastdnx_explain(const SgcSurrogate& s, NodeId u);

/// Row u of A^L over its support.
Explanation adjacency_baseline_explain(const NormalizedAdjacency& adj_pow, NodeId u);

/// Explains `nodes` on up to `threads` workers; output is ordered like `nodes`.
std::vector<Explanation> explain_nodes(const SgcSurrogate& s, std::span<const NodeId> nodes,
                                       Method method, const DnxConfig& config = {},
                                       unsigned threads = 1);

/// s_{uv} = s_u + s_v for every edge of g (edge order of g.edges()).
std::vector<double> node_scores_to_edge_scores(const Explanation& e, const Graph& g);
/// s_u = mean of s_{uj} over the neighbors j of u; zero for isolated nodes.
std::vector<double> edge_scores_to_node_scores(std::span<const double> edge_scores,
                                               const Graph& g);

/// f(E) = 1/2 E^T Q E + E^T c + delta, with Q = 2 V V^T, c = -2 V s and
/// delta = ||s||^2 where V stacks the contributions v_j and s = sum_j v_j.
struct QuadraticForm {
    Eigen::MatrixXd q;
    Eigen::VectorXd c;
    double delta = 0.0;
    std::vector<NodeId> candidates;

    double evaluate(const Eigen::VectorXd& scores) const;
};

QuadraticForm build_quadratic_form(const SgcSurrogate& s, NodeId u);

struct ConvexityReport {
    double symmetry_error = 0.0;
    double min_eigenvalue = 0.0;
    double max_value_gap = 0.0;  // |quadratic form - direct objective| on random scores
    bool ok = false;
};

ConvexityReport verify_convexity(const QuadraticForm& q, const SgcSurrogate& s, NodeId u,
                                 int samples = 16, std::uint64_t seed = 0);

/// Tab-separated explanation file, one record per node.
void save_explanations(const std::vector<Explanation>& es, const std::filesystem::path& path,
                       bool with_timing = true);
std::vector<Explanation> load_explanations(const std::filesystem::path& path);

}  // namespace dnx
