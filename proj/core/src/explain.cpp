#include "dnx/explain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "dnx/error.hpp"
#include "dnx/io.hpp"
#include "dnx/optim.hpp"
#include "dnx/parallel.hpp"
#include "dnx/rng.hpp"

namespace dnx {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_node(const SgcSurrogate& s, NodeId u) {
    if (u < 0 || static_cast<std::size_t>(u) >= s.num_nodes())
        throw UsageError("node " + std::to_string(u) + " is outside [0, " +
                         std::to_string(s.num_nodes()) + ")");
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw DataError("bad " + what + " value '" + s + "'");
    return v;
}

long parse_long(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw DataError("bad " + what + " value '" + s + "'");
    return v;
}

constexpr const char* kHeader = "target\tmethod\titerations\tobjective\tmillis\tcandidates\tscores";

}  // namespace

Method parse_method(std::string_view name) {
    if (name == "dnx") return Method::dnx;
    if (name == "fastdnx") return Method::fastdnx;
    if (name == "adjbaseline") return Method::adjbaseline;
    throw UsageError("unknown method '" + std::string(name) +
                     "' (valid: dnx, fastdnx, adjbaseline)");
}

std::string_view method_name(Method m) {
    switch (m) {
        case Method::dnx: return "dnx";
        case Method::fastdnx: return "fastdnx";
        case Method::adjbaseline: return "adjbaseline";
    }
    return "unknown";
}

double Explanation::score_of(NodeId v) const {
    const auto it = std::lower_bound(candidates.begin(), candidates.end(), v);
    if (it == candidates.end() || *it != v) return 0.0;
    return scores(it - candidates.begin());
}

std::vector<NodeId> Explanation::top_k(std::size_t k) const {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = scores(static_cast<Eigen::Index>(a));
                          const double sb = scores(static_cast<Eigen::Index>(b));
                          if (sa != sb) return sa > sb;
                          return candidates[a] < candidates[b];
                      });
    std::vector<NodeId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[order[i]]);
    return out;
}

Eigen::VectorXd Explanation::dense(std::size_t n) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (static_cast<std::size_t>(candidates[i]) >= n)
            throw DataError("explanation candidate " + std::to_string(candidates[i]) +
                            " is outside the graph");
        out(candidates[i]) = scores(static_cast<Eigen::Index>(i));
    }
    return out;
}

LocalContributions local_contributions(const SgcSurrogate& s, NodeId u) {
    check_node(s, u);
    LocalContributions lc;
    lc.target = u;
    const auto row = s.adj_pow().row(u);
    const auto k = static_cast<Eigen::Index>(row.size());
    lc.candidates.reserve(row.size());
    lc.weights.resize(k);
    Eigen::MatrixXd x(k, s.num_features());
    for (Eigen::Index j = 0; j < k; ++j) {
        lc.candidates.push_back(row[j].first);
        lc.weights(j) = row[j].second;
        x.row(j) = s.features().row(row[j].first);
    }
    lc.terms = lc.weights.asDiagonal() * (x * s.theta());
    return lc;
}

double dnx_objective(const LocalContributions& lc, const Eigen::VectorXd& scores,
                     Eigen::VectorXd* grad) {
    if (scores.size() != lc.terms.rows()) throw UsageError("score vector length mismatch");
    const Eigen::RowVectorXd r =
        (scores.array() - 1.0).matrix().transpose() * lc.terms;
    if (grad) *grad = 2.0 * lc.terms * r.transpose();
    return r.squaredNorm();
}

double dnx_objective(const SgcSurrogate& s, NodeId u, const Eigen::VectorXd& scores) {
    return dnx_objective(local_contributions(s, u), scores);
}

Explanation dnx_explain(const SgcSurrogate& s, NodeId u, const DnxConfig& config) {
    const auto start = Clock::now();
    const auto lc = local_contributions(s, u);
    const auto k = static_cast<Eigen::Index>(lc.candidates.size());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
    if (config.random_init) {
        auto rng = make_stream(config.seed, "dnx/init", static_cast<std::uint64_t>(u));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index j = 0; j < k; ++j) w(j) = normal(rng);
    }
    Adam adam({.learning_rate = config.learning_rate});
    std::vector<Eigen::Map<Eigen::VectorXd>> params{{w.data(), k}};

    Eigen::VectorXd e = softmax(w.transpose()).transpose();
    Eigen::VectorXd best = e;
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    Eigen::VectorXd g_e;
    int it = 0;
    for (; it < config.max_iterations; ++it) {
        e = softmax(w.transpose()).transpose();
        const double f = dnx_objective(lc, e, &g_e);
        if (!std::isfinite(f))
            throw DivergenceError("DnX objective became non-finite for node " + std::to_string(u));
        if (f < best_f) {
            best_f = f;
            best = e;
        }
        history.push_back(f);
        const auto t = history.size() - 1;
        if (static_cast<int>(t) >= config.window &&
            std::abs(history[t - config.window] - f) < config.tolerance)
            break;
        const Eigen::VectorXd g_w = (e.array() * (g_e.array() - e.dot(g_e))).matrix();
        const std::vector<Eigen::Map<const Eigen::VectorXd>> grads{{g_w.data(), k}};
        adam.step(params, grads);
    }
    if (it == config.max_iterations) {
        e = softmax(w.transpose()).transpose();
        const double f = dnx_objective(lc, e);
        if (f < best_f) {
            best_f = f;
            best = e;
        }
    }
    Explanation out;
    out.target = u;
    out.method = Method::dnx;
    out.candidates = lc.candidates;
    out.scores = best;
    out.iterations = it;
    out.objective = best_f;
    out.millis = elapsed_ms(start);
    return out;
}

Explanation fastdnx_explain(const SgcSurrogate& s, NodeId u) {
    const auto start = Clock::now();
    const auto lc = local_contributions(s, u);
    const Eigen::RowVectorXd total = s.logits(u) - s.bias();
    Explanation out;
    out.target = u;
    out.method = Method::fastdnx;
    out.candidates = lc.candidates;
    out.scores = lc.terms * total.transpose();
    out.millis = elapsed_ms(start);
    out.objective = dnx_objective(lc, out.scores);
    return out;
}

Explanation adjacency_baseline_explain(const NormalizedAdjacency& adj_pow, NodeId u) {
    if (u < 0 || static_cast<std::size_t>(u) >= adj_pow.n)
        throw UsageError("node " + std::to_string(u) + " is outside the graph");
    const auto start = Clock::now();
    const auto row = adj_pow.row(u);
    Explanation out;
    out.target = u;
    out.method = Method::adjbaseline;
    out.scores.resize(static_cast<Eigen::Index>(row.size()));
    for (std::size_t j = 0; j < row.size(); ++j) {
        out.candidates.push_back(row[j].first);
        out.scores(static_cast<Eigen::Index>(j)) = row[j].second;
    }
    out.millis = elapsed_ms(start);
    return out;
}

std::vector<Explanation> explain_nodes(const SgcSurrogate& s, std::span<const NodeId> nodes,
                                       Method method, const DnxConfig& config, unsigned threads) {
    for (NodeId u : nodes) check_node(s, u);
    std::vector<Explanation> out(nodes.size());
    parallel_for(nodes.size(), threads, [&](std::size_t i) {
        switch (method) {
            case Method::dnx: out[i] = dnx_explain(s, nodes[i], config); break;
            case Method::fastdnx: out[i] = fastdnx_explain(s, nodes[i]); break;
            case Method::adjbaseline:
                out[i] = adjacency_baseline_explain(s.adj_pow(), nodes[i]);
                break;
        }
    });
    return out;
}

std::vector<double> node_scores_to_edge_scores(const Explanation& e, const Graph& g) {
    std::vector<double> out;
    out.reserve(g.num_edges());
    for (const auto& [a, b] : g.edges()) out.push_back(e.score_of(a) + e.score_of(b));
    return out;
}

std::vector<double> edge_scores_to_node_scores(std::span<const double> edge_scores,
                                               const Graph& g) {
    if (edge_scores.size() != g.num_edges())
        throw DataError("expected " + std::to_string(g.num_edges()) + " edge scores, got " +
                        std::to_string(edge_scores.size()));
    std::vector<double> sum(g.num_nodes(), 0.0);
    for (std::size_t i = 0; i < edge_scores.size(); ++i) {
        const auto [a, b] = g.edges()[i];
        sum[a] += edge_scores[i];
        sum[b] += edge_scores[i];
    }
    for (std::size_t u = 0; u < sum.size(); ++u) {
        const int deg = g.degree(static_cast<NodeId>(u));
        sum[u] = deg ? sum[u] / deg : 0.0;
    }
    return sum;
}

double QuadraticForm::evaluate(const Eigen::VectorXd& scores) const {
    return 0.5 * scores.dot(q * scores) + scores.dot(c) + delta;
}

QuadraticForm build_quadratic_form(const SgcSurrogate& s, NodeId u) {
    const auto lc = local_contributions(s, u);
    const Eigen::VectorXd total = lc.terms.colwise().sum().transpose();
    QuadraticForm f;
    f.q = 2.0 * lc.terms * lc.terms.transpose();
    f.c = -2.0 * lc.terms * total;
    f.delta = total.squaredNorm();
    f.candidates = lc.candidates;
    return f;
}

ConvexityReport verify_convexity(const QuadraticForm& q, const SgcSurrogate& s, NodeId u,
                                 int samples, std::uint64_t seed) {
    ConvexityReport r;
    const auto lc = local_contributions(s, u);
    if (lc.candidates != q.candidates)
        throw UsageError("quadratic form was built for a different node");
    r.symmetry_error = (q.q - q.q.transpose()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.q, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = eig.eigenvalues().minCoeff();
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());

    auto rng = make_stream(seed, "convexity", static_cast<std::uint64_t>(u));
    std::normal_distribution<double> normal(0.0, 1.0);
    double value_scale = 1.0;
    for (int i = 0; i < samples; ++i) {
        Eigen::VectorXd e(q.q.rows());
        for (Eigen::Index j = 0; j < e.size(); ++j) e(j) = normal(rng);
        const double direct = dnx_objective(lc, e);
        value_scale = std::max(value_scale, std::abs(direct));
        r.max_value_gap = std::max(r.max_value_gap, std::abs(q.evaluate(e) - direct));
    }
    r.ok = r.symmetry_error <= 1e-12 * scale && r.min_eigenvalue >= -1e-9 * scale &&
           r.max_value_gap <= 1e-9 * value_scale;
    return r;
}

void save_explanations(const std::vector<Explanation>& es, const std::filesystem::path& path,
                       bool with_timing) {
    std::ostringstream out;
    out << kHeader << '\n';
    for (const auto& e : es) {
        out << e.target << '\t' << method_name(e.method) << '\t' << e.iterations << '\t'
            << format_double(e.objective) << '\t' << (with_timing ? format_double(e.millis) : "0")
            << '\t';
        for (std::size_t j = 0; j < e.candidates.size(); ++j)
            out << (j ? "," : "") << e.candidates[j];
        out << '\t';
        for (Eigen::Index j = 0; j < e.scores.size(); ++j)
            out << (j ? "," : "") << format_double(e.scores(j));
        out << '\n';
    }
    write_file(path, out.str());
}

std::vector<Explanation> load_explanations(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw DataError("missing explanation header in " + path.string());
    std::vector<Explanation> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        const auto f = split(line, '\t');
        if (f.size() != 7) throw DataError("expected 7 fields at " + where);
        Explanation e;
        e.target = static_cast<NodeId>(parse_long(f[0], "target"));
        try {
            e.method = parse_method(f[1]);
        } catch (const UsageError& err) {
            throw DataError(std::string(err.what()) + " at " + where);
        }
        e.iterations = static_cast<int>(parse_long(f[2], "iterations"));
        e.objective = parse_double(f[3], "objective");
        e.millis = parse_double(f[4], "millis");
        const auto cands = f[5].empty() ? std::vector<std::string>{} : split(f[5], ',');
        const auto vals = f[6].empty() ? std::vector<std::string>{} : split(f[6], ',');
        if (cands.size() != vals.size())
            throw DataError("candidate and score counts differ at " + where);
        e.scores.resize(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t j = 0; j < cands.size(); ++j) {
            e.candidates.push_back(static_cast<NodeId>(parse_long(cands[j], "candidate")));
            e.scores(static_cast<Eigen::Index>(j)) = parse_double(vals[j], "score");
            if (j && e.candidates[j] <= e.candidates[j - 1])
                throw DataError("candidates must be strictly ascending at " + where);
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace dnx
