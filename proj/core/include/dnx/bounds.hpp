#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dnx/distill.hpp"
#include "dnx/explain.hpp"

namespace dnx {

/// Gaussian feature noise on the L-hop neighborhood of the explained node.
struct PerturbationConfig {
    int num_perturbations = 10;  // |K|
    double variance = 0.01;      // sigma^2
    std::uint64_t seed = 0;
};

/// Largest singular value by power iteration on the smaller Gram matrix.
double spectral_norm(const Eigen::MatrixXd& m, double rel_tol = 1e-13, int max_iter = 100000);

/// CDF of a chi-square variable with `df` degrees of freedom.
double chi_square_cdf(double df, double x);

/// Noise matrices for the rows `nodes` (|nodes| x d each).
struct Perturbations {
    std::vector<NodeId> nodes;
    std::vector<Eigen::MatrixXd> noise;
};

/// Draws |K| noise matrices from the per-node stream (seed, node id), so
/// results do not depend on evaluation order.
Perturbations draw_perturbations(const std::vector<NodeId>& nodes, int d,
                                 const PerturbationConfig& pc, NodeId u, std::uint64_t trial = 0);

/// Probability row of the explained node for a full feature matrix.
using NodeProbe = std::function<Eigen::RowVectorXd(const FeatureMatrix&)>;

NodeProbe surrogate_probe(const SgcSurrogate& s, NodeId u);
NodeProbe model_probe(const BlackBoxModel& m, const Graph& g, NodeId u);

/// Applies the explanation as feature masking: candidate rows scaled by E.
FeatureMatrix apply_explanation(const FeatureMatrix& x, const Explanation& e);

/// X plus noise k of `p` on its rows (k = -1 returns X unchanged).
FeatureMatrix perturbed_features(const FeatureMatrix& x, const Perturbations& p, int k);

/// Mean over the clean input and each perturbation of
/// ||f(X') - f(t(X', E))||_2.
double unfaithfulness(const NodeProbe& f, const FeatureMatrix& x, const Explanation& e,
                      const Perturbations& p);
double unfaithfulness(const NodeProbe& f, const FeatureMatrix& x, const Explanation& e,
                      const PerturbationConfig& pc);

/// ||A^L_u - A^L_u diag(E)||_2 over the candidates.
double delta_row_norm(const NormalizedAdjacency& adj_pow, const Explanation& e);

struct BoundReport {
    NodeId node = 0;
    double lhs_psi = 0.0;
    double lhs_phi = 0.0;
    double theta_norm = 0.0;         // ||Theta^T||_2
    double feature_norm_clean = 0.0; // ||X_u^T||_2 over the neighborhood rows
    double feature_norm_max = 0.0;   // max over clean and perturbed
    double gamma = 0.0;
    double delta_norm = 0.0;
    double rhs_psi = 0.0;
    double alpha = 0.0;
    double rhs_phi = 0.0;
    bool holds_psi = false;
    bool holds_phi = false;
};

/// Deterministic faithfulness bounds for node u. The same perturbation draws
/// feed the left-hand sides and the max-norm constant. alpha is the largest
/// ||Phi_u - Psi_u||_2 over every input the left-hand sides evaluate (clean,
/// perturbed and masked), optionally raised to `alpha_floor`. `phi` may be
/// null, in which case only the surrogate bound is evaluated.
BoundReport verify_bounds(const SgcSurrogate& s, const BlackBoxModel* phi, const Graph& g,
                          const Explanation& e, const PerturbationConfig& pc,
                          double alpha_floor = 0.0, double slack = 1e-9);

struct ProbabilisticBoundReport {
    NodeId node = 0;
    double xi = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double delta_norm = 0.0;
    double sigma = 0.0;
    double degrees_of_freedom = 0.0;
    double alpha = 0.0;
    double numerator = 0.0;
    bool vacuous = false;
    double bound_value = 0.0;
    double empirical_probability = 0.0;
    double standard_error = 0.0;
    int trials = 0;
    bool holds = false;
};

/// Monte-Carlo check of the chi-square probability bound on unfaithfulness.
/// With phi null this checks the surrogate version (alpha = 0); otherwise
/// the black-box version, with alpha measured over every trial input.
ProbabilisticBoundReport verify_probabilistic_bound(const SgcSurrogate& s, const BlackBoxModel* phi,
                                                    const Graph& g, const Explanation& e,
                                                    const PerturbationConfig& pc, double xi,
                                                    int trials);

/// Chi-square argument of the probability bound, for callers choosing xi.
double probabilistic_bound_value(double xi, double gamma1, double gamma2, double delta_norm,
                                 double sigma, int num_perturbations, double df, double alpha);

}  // namespace dnx
