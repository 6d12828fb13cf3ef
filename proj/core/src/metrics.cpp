#include "dnx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <memory>
#include <set>
#include <sstream>

#include "dnx/error.hpp"
#include "dnx/io.hpp"

namespace dnx {

namespace {

std::size_t hits(const std::vector<NodeId>& picked, std::span<const NodeId> truth) {
    const std::set<NodeId> t(truth.begin(), truth.end());
    return static_cast<std::size_t>(
        std::count_if(picked.begin(), picked.end(), [&](NodeId v) { return t.count(v) != 0; }));
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double explanation_accuracy(const Explanation& e, std::span<const NodeId> truth, std::size_t k) {
    if (truth.empty()) throw DataError("accuracy needs a non-empty ground truth");
    if (k == 0) k = truth.size();
    return static_cast<double>(hits(e.top_k(k), truth)) / static_cast<double>(truth.size());
}

double average_precision_topk(const Explanation& e, std::span<const NodeId> truth, std::size_t k) {
    if (k == 0) throw UsageError("AP needs k >= 1");
    return static_cast<double>(hits(e.top_k(k), truth)) / static_cast<double>(k);
}

std::optional<double> edge_auc(std::span<const double> scores, std::span<const bool> truth) {
    if (scores.size() != truth.size()) throw UsageError("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positives = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (truth[order[t]]) {
                positives += 1.0;
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    const double negatives = static_cast<double>(scores.size()) - positives;
    if (positives == 0.0 || negatives == 0.0) return std::nullopt;
    return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::optional<double> explanation_edge_auc(const Explanation& e, const Graph& g,
                                           std::span<const NodeId> truth) {
    const std::set<NodeId> cand(e.candidates.begin(), e.candidates.end());
    const std::set<NodeId> t(truth.begin(), truth.end());
    const auto all = node_scores_to_edge_scores(e, g);
    std::vector<double> scores;
    std::vector<char> labels;
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
        const auto [a, b] = g.edges()[i];
        if (!cand.count(a) || !cand.count(b)) continue;
        scores.push_back(all[i]);
        labels.push_back(t.count(a) && t.count(b));
    }
    std::unique_ptr<bool[]> flags(new bool[labels.size()]);
    for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i] != 0;
    return edge_auc(scores, std::span<const bool>(flags.get(), labels.size()));
}

FeatureMatrix mask_features(const FeatureMatrix& x, const Explanation& e, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw UsageError("sparsity must lie in [0, 1]");
    const auto keep_count = static_cast<std::size_t>(
        std::lround((1.0 - sparsity) * static_cast<double>(e.candidates.size())));
    const auto kept = e.top_k(keep_count);
    const std::set<NodeId> keep(kept.begin(), kept.end());
    FeatureMatrix out = x;
    for (NodeId v : e.candidates) {
        if (v < 0 || v >= out.rows()) throw DataError("explanation candidate outside the graph");
        if (!keep.count(v)) out.row(v).setZero();
    }
    return out;
}

double fidelity_minus(const BlackBoxModel& model, const Dataset& d,
                      const std::vector<Explanation>& explanations, double sparsity) {
    if (explanations.empty()) return 0.0;
    const auto full = model.predict(d.graph, d.features).argmax();
    double full_hits = 0.0;
    double masked_hits = 0.0;
    for (const auto& e : explanations) {
        const NodeId u = e.target;
        if (u < 0 || static_cast<std::size_t>(u) >= d.num_nodes())
            throw DataError("explained node outside the dataset");
        full_hits += full[u] == d.labels[u];
        const auto masked = model.predict(d.graph, mask_features(d.features, e, sparsity));
        masked_hits += masked.argmax(u) == d.labels[u];
    }
    return (full_hits - masked_hits) / static_cast<double>(explanations.size());
}

DegreeSeparation degree_separation_report(const Dataset& d) {
    std::vector<bool> motif(d.num_nodes(), false);
    if (!d.motif_of.empty()) {
        for (std::size_t u = 0; u < d.num_nodes(); ++u) motif[u] = d.motif_of[u] >= 0;
    } else if (d.has_ground_truth()) {
        for (const auto& [u, members] : d.ground_truth) motif[u] = true;
    } else {
        throw DataError("degree separation needs motif annotations");
    }
    DegreeSeparation r;
    int max_degree = 0;
    for (std::size_t u = 0; u < d.num_nodes(); ++u) {
        const int deg = d.graph.degree(static_cast<NodeId>(u));
        max_degree = std::max(max_degree, deg);
        ++(motif[u] ? r.motif_histogram : r.base_histogram)[deg];
    }
    const double n = static_cast<double>(d.num_nodes());
    r.accuracy = -1.0;
    for (int t = -1; t <= max_degree; ++t) {
        std::size_t below_correct = 0;
        for (std::size_t u = 0; u < d.num_nodes(); ++u) {
            const bool below = d.graph.degree(static_cast<NodeId>(u)) <= t;
            below_correct += below == motif[u];
        }
        const double acc_below = static_cast<double>(below_correct) / n;
        const double acc_above = 1.0 - acc_below;
        if (acc_below > r.accuracy) r = {r.motif_histogram, r.base_histogram, t, true, acc_below};
        if (acc_above > r.accuracy) r = {r.motif_histogram, r.base_histogram, t, false, acc_above};
    }
    return r;
}

void write_degree_histograms(const DegreeSeparation& r, const std::filesystem::path& path) {
    std::set<int> degrees;
    for (const auto& [k, v] : r.motif_histogram) degrees.insert(k);
    for (const auto& [k, v] : r.base_histogram) degrees.insert(k);
    std::ostringstream out;
    out << "degree\tmotif\tbase\n";
    for (int k : degrees) {
        const auto m = r.motif_histogram.find(k);
        const auto b = r.base_histogram.find(k);
        out << k << '\t' << (m == r.motif_histogram.end() ? 0 : m->second) << '\t'
            << (b == r.base_histogram.end() ? 0 : b->second) << '\n';
    }
    out << "# threshold " << r.threshold << (r.motif_below ? " motif<=" : " motif>")
        << " accuracy " << format_double(r.accuracy) << '\n';
    write_file(path, out.str());
}

MethodMetrics evaluate_explanations(const Dataset& d, const std::vector<Explanation>& es,
                                    const BlackBoxModel* model, const EvalOptions& opt) {
    MethodMetrics m;
    m.dataset = d.name;
    m.method = es.empty() ? "" : std::string(method_name(es.front().method));
    std::vector<double> acc;
    std::map<int, std::vector<double>> ap;
    std::vector<double> auc;
    std::vector<double> millis;
    for (const auto& e : es) {
        millis.push_back(e.millis);
        const auto it = d.ground_truth.find(e.target);
        if (it == d.ground_truth.end()) continue;
        acc.push_back(explanation_accuracy(e, it->second));
        for (int k : opt.ap_k)
            ap[k].push_back(average_precision_topk(e, it->second, static_cast<std::size_t>(k)));
        if (const auto a = explanation_edge_auc(e, d.graph, it->second)) auc.push_back(*a);
    }
    m.nodes = acc.size();
    m.accuracy = mean(acc);
    for (const auto& [k, v] : ap) m.average_precision[k] = mean(v);
    if (!auc.empty()) m.edge_auc = mean(auc);
    if (model)
        for (double s : opt.sparsities) m.fidelity[s] = fidelity_minus(*model, d, es, s);
    m.mean_millis = mean(millis);
    return m;
}

double amortized_millis(double extract_millis, double distill_seconds, std::size_t nodes) {
    if (nodes == 0) throw UsageError("amortization needs at least one node");
    return extract_millis + 1000.0 * distill_seconds / static_cast<double>(nodes);
}

void write_metrics_table(const std::vector<MethodMetrics>& rows, std::ostream& out) {
    out << "dataset\tmethod\tmetric\tvalue\n";
    for (const auto& r : rows) {
        const auto line = [&](const std::string& metric, double v) {
            out << r.dataset << '\t' << r.method << '\t' << metric << '\t' << format_double(v)
                << '\n';
        };
        line("nodes", static_cast<double>(r.nodes));
        line("accuracy", r.accuracy);
        for (const auto& [k, v] : r.average_precision) line("ap@" + std::to_string(k), v);
        if (r.edge_auc) line("edge_auc", *r.edge_auc);
        for (const auto& [s, v] : r.fidelity) {
            std::ostringstream name;
            name << "fidelity_minus@" << s;
            line(name.str(), v);
        }
        line("mean_millis", r.mean_millis);
    }
}

}  // namespace dnx
