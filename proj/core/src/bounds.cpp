#include "dnx/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "dnx/error.hpp"
#include "dnx/rng.hpp"

namespace dnx {

namespace {

Eigen::MatrixXd gather_rows(const FeatureMatrix& x, const std::vector<NodeId>& nodes) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(nodes.size()), x.cols());
    for (std::size_t i = 0; i < nodes.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(nodes[i]);
    return out;
}

struct Inputs {
    std::vector<FeatureMatrix> clean;   // X, then X + noise_k
    std::vector<FeatureMatrix> masked;  // t(X', E) for each of the above
};

Inputs build_inputs(const FeatureMatrix& x, const Explanation& e, const Perturbations& p) {
    Inputs in;
    for (int k = -1; k < static_cast<int>(p.noise.size()); ++k) {
        in.clean.push_back(perturbed_features(x, p, k));
        in.masked.push_back(apply_explanation(in.clean.back(), e));
    }
    return in;
}

double mean_gap(const NodeProbe& f, const Inputs& in) {
    double sum = 0.0;
    for (std::size_t i = 0; i < in.clean.size(); ++i) sum += (f(in.clean[i]) - f(in.masked[i])).norm();
    return sum / static_cast<double>(in.clean.size());
}

double max_model_gap(const NodeProbe& phi, const NodeProbe& psi, const Inputs& in) {
    double alpha = 0.0;
    for (const auto* set : {&in.clean, &in.masked})
        for (const auto& x : *set) alpha = std::max(alpha, (phi(x) - psi(x)).norm());
    return alpha;
}

}  // namespace

double spectral_norm(const Eigen::MatrixXd& m, double rel_tol, int max_iter) {
    if (m.size() == 0) return 0.0;
    const Eigen::MatrixXd gram =
        m.rows() < m.cols() ? Eigen::MatrixXd(m * m.transpose()) : Eigen::MatrixXd(m.transpose() * m);
    if (gram.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    Eigen::VectorXd v(gram.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = gram * v;
        const double norm = w.norm();
        if (norm == 0.0) break;
        w /= norm;
        const double next = w.dot(gram * w);
        v = std::move(w);
        const bool done = std::abs(next - lambda) <= rel_tol * std::abs(next);
        lambda = next;
        if (done) break;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

double chi_square_cdf(double df, double x) {
    if (!(df > 0.0)) throw UsageError("chi-square needs positive degrees of freedom");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::gamma_p(df / 2.0, x / 2.0);
}

Perturbations draw_perturbations(const std::vector<NodeId>& nodes, int d,
                                 const PerturbationConfig& pc, NodeId u, std::uint64_t trial) {
    if (pc.num_perturbations < 0) throw UsageError("perturbation count must be non-negative");
    if (pc.variance < 0.0) throw UsageError("perturbation variance must be non-negative");
    auto rng = make_stream(pc.seed, "perturb/" + std::to_string(trial), static_cast<std::uint64_t>(u));
    std::normal_distribution<double> normal(0.0, std::sqrt(pc.variance));
    Perturbations p;
    p.nodes = nodes;
    for (int k = 0; k < pc.num_perturbations; ++k) {
        Eigen::MatrixXd noise(static_cast<Eigen::Index>(nodes.size()), d);
        for (Eigen::Index i = 0; i < noise.rows(); ++i)
            for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = normal(rng);
        p.noise.push_back(std::move(noise));
    }
    return p;
}

NodeProbe surrogate_probe(const SgcSurrogate& s, NodeId u) {
    const auto row = s.adj_pow().row(u);
    return [row, theta = s.theta(), bias = s.bias()](const FeatureMatrix& x) {
        Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(x.cols());
        for (const auto& [j, w] : row) h += w * x.row(j);
        return softmax(h * theta + bias);
    };
}

NodeProbe model_probe(const BlackBoxModel& m, const Graph& g, NodeId u) {
    return [&m, &g, u](const FeatureMatrix& x) -> Eigen::RowVectorXd {
        return m.predict(g, x).probs.row(u);
    };
}

FeatureMatrix apply_explanation(const FeatureMatrix& x, const Explanation& e) {
    FeatureMatrix out = x;
    for (std::size_t j = 0; j < e.candidates.size(); ++j) {
        const NodeId v = e.candidates[j];
        if (v < 0 || v >= out.rows()) throw DataError("explanation candidate outside the graph");
        out.row(v) *= e.scores(static_cast<Eigen::Index>(j));
    }
    return out;
}

FeatureMatrix perturbed_features(const FeatureMatrix& x, const Perturbations& p, int k) {
    if (k < 0) return x;
    if (static_cast<std::size_t>(k) >= p.noise.size()) throw UsageError("perturbation index out of range");
    FeatureMatrix out = x;
    const auto& noise = p.noise[static_cast<std::size_t>(k)];
    if (noise.cols() != x.cols()) throw DataError("perturbation width does not match features");
    for (std::size_t i = 0; i < p.nodes.size(); ++i)
        out.row(p.nodes[i]) += noise.row(static_cast<Eigen::Index>(i));
    return out;
}

double unfaithfulness(const NodeProbe& f, const FeatureMatrix& x, const Explanation& e,
                      const Perturbations& p) {
    return mean_gap(f, build_inputs(x, e, p));
}

double unfaithfulness(const NodeProbe& f, const FeatureMatrix& x, const Explanation& e,
                      const PerturbationConfig& pc) {
    return unfaithfulness(f, x, e,
                          draw_perturbations(e.candidates, static_cast<int>(x.cols()), pc, e.target));
}

double delta_row_norm(const NormalizedAdjacency& adj_pow, const Explanation& e) {
    double sq = 0.0;
    for (const auto& [j, w] : adj_pow.row(e.target)) {
        const double d = w * (1.0 - e.score_of(j));
        sq += d * d;
    }
    return std::sqrt(sq);
}

BoundReport verify_bounds(const SgcSurrogate& s, const BlackBoxModel* phi, const Graph& g,
                          const Explanation& e, const PerturbationConfig& pc, double alpha_floor,
                          double slack) {
    const NodeId u = e.target;
    const auto& x = s.features();
    const auto hood = s.adj_pow().support(u);
    const auto p = draw_perturbations(hood, static_cast<int>(x.cols()), pc, u);
    const auto in = build_inputs(x, e, p);
    const auto psi = surrogate_probe(s, u);

    BoundReport r;
    r.node = u;
    r.lhs_psi = mean_gap(psi, in);
    r.theta_norm = spectral_norm(s.theta());
    const Eigen::MatrixXd rows = gather_rows(x, hood);
    r.feature_norm_clean = spectral_norm(rows);
    r.feature_norm_max = r.feature_norm_clean;
    for (const auto& noise : p.noise)
        r.feature_norm_max = std::max(r.feature_norm_max, spectral_norm(rows + noise));
    r.gamma = r.theta_norm * r.feature_norm_max;
    r.delta_norm = delta_row_norm(s.adj_pow(), e);
    r.rhs_psi = r.gamma * r.delta_norm;
    r.holds_psi = r.lhs_psi <= r.rhs_psi + slack;
    if (phi) {
        const auto f = model_probe(*phi, g, u);
        r.lhs_phi = mean_gap(f, in);
        r.alpha = std::max(alpha_floor, max_model_gap(f, psi, in));
        r.rhs_phi = r.rhs_psi + 2.0 * r.alpha;
        r.holds_phi = r.lhs_phi <= r.rhs_phi + slack;
    }
    return r;
}

double probabilistic_bound_value(double xi, double gamma1, double gamma2, double delta_norm,
                                 double sigma, int num_perturbations, double df, double alpha) {
    const double numerator = xi - gamma1 * delta_norm - 2.0 * alpha;
    const double scale = gamma2 * delta_norm * sigma;
    if (scale == 0.0) return numerator >= 0.0 ? 1.0 : 0.0;
    const double arg = numerator / scale - num_perturbations;
    return arg > 0.0 ? chi_square_cdf(df, arg) : 0.0;
}

ProbabilisticBoundReport verify_probabilistic_bound(const SgcSurrogate& s, const BlackBoxModel* phi,
                                                    const Graph& g, const Explanation& e,
                                                    const PerturbationConfig& pc, double xi,
                                                    int trials) {
    if (trials <= 0) throw UsageError("need at least one trial");
    const NodeId u = e.target;
    const auto& x = s.features();
    const auto hood = s.adj_pow().support(u);
    const auto psi = surrogate_probe(s, u);
    const NodeProbe f = phi ? model_probe(*phi, g, u) : psi;

    ProbabilisticBoundReport r;
    r.node = u;
    r.xi = xi;
    r.trials = trials;
    const double theta_norm = spectral_norm(s.theta());
    r.gamma1 = theta_norm * spectral_norm(gather_rows(x, hood));
    r.gamma2 = theta_norm / static_cast<double>(pc.num_perturbations + 1);
    r.delta_norm = delta_row_norm(s.adj_pow(), e);
    r.sigma = std::sqrt(pc.variance);
    r.degrees_of_freedom = static_cast<double>(pc.num_perturbations) *
                           static_cast<double>(hood.size()) * static_cast<double>(x.cols());

    int inside = 0;
    for (int t = 0; t < trials; ++t) {
        const auto p = draw_perturbations(hood, static_cast<int>(x.cols()), pc, u,
                                          static_cast<std::uint64_t>(t));
        const auto in = build_inputs(x, e, p);
        inside += mean_gap(f, in) <= xi;
        if (phi) r.alpha = std::max(r.alpha, max_model_gap(f, psi, in));
    }
    r.numerator = xi - r.gamma1 * r.delta_norm - 2.0 * r.alpha;
    r.bound_value = probabilistic_bound_value(xi, r.gamma1, r.gamma2, r.delta_norm, r.sigma,
                                              pc.num_perturbations, r.degrees_of_freedom, r.alpha);
    r.vacuous = r.bound_value <= 0.0;
    r.empirical_probability = static_cast<double>(inside) / trials;
    r.standard_error = std::sqrt(r.bound_value * (1.0 - r.bound_value) / trials);
    r.holds = r.vacuous || r.empirical_probability >= r.bound_value - 3.0 * r.standard_error;
    return r;
}

}  // namespace dnx
