#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnx/dataset.hpp"
#include "dnx/explain.hpp"
#include "dnx/model.hpp"

namespace dnx {

/// |top-k(e) intersect truth| / |truth|, k defaulting to |truth|.
double explanation_accuracy(const Explanation& e, std::span<const NodeId> truth, std::size_t k = 0);

/// |top-k(e) intersect truth| / k.
double average_precision_topk(const Explanation& e, std::span<const NodeId> truth, std::size_t k);

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Empty when either class is absent.
std::optional<double> edge_auc(std::span<const double> scores, std::span<const bool> truth);

/// Edge-level AUC of one node explanation: node scores are converted to edge
/// scores and ranked over the edges whose endpoints are both candidates; an
/// edge is positive when both endpoints belong to `truth`.
std::optional<double> explanation_edge_auc(const Explanation& e, const Graph& g,
                                           std::span<const NodeId> truth);

/// Features of node u's input with every candidate outside the kept top
/// fraction (1 - sparsity) zeroed.
FeatureMatrix mask_features(const FeatureMatrix& x, const Explanation& e, double sparsity);

/// Fidelity-: accuracy on the full input minus accuracy when each explained
/// node is classified from its explanation-masked input. Positive means the
/// explanation alone loses accuracy.
double fidelity_minus(const BlackBoxModel& model, const Dataset& d,
                      const std::vector<Explanation>& explanations, double sparsity);

struct DegreeSeparation {
    std::map<int, int> motif_histogram;
    std::map<int, int> base_histogram;
    int threshold = 0;          // best split point
    bool motif_below = true;    // motif iff degree <= threshold (else >)
    double accuracy = 0.0;
};

/// Requires motif annotations (motif_of or ground truth).
DegreeSeparation degree_separation_report(const Dataset& d);
void write_degree_histograms(const DegreeSeparation& r, const std::filesystem::path& path);

struct MethodMetrics {
    std::string dataset;
    std::string method;
    std::size_t nodes = 0;
    double accuracy = 0.0;
    std::map<int, double> average_precision;  // k -> AP
    std::optional<double> edge_auc;
    std::map<double, double> fidelity;        // sparsity -> Fidelity-
    double mean_millis = 0.0;
};

struct EvalOptions {
    std::vector<int> ap_k{3, 4, 5};
    std::vector<double> sparsities{0.3, 0.5, 0.7};
};

/// Aggregates every metric over the explanations. Accuracy, AP and AUC are
/// averaged over explained nodes that have ground truth; fidelity is skipped
/// when `model` is null.
MethodMetrics evaluate_explanations(const Dataset& d, const std::vector<Explanation>& es,
                                    const BlackBoxModel* model, const EvalOptions& opt = {});

/// Per-node cost when a one-off distillation is shared by `nodes` explanations.
double amortized_millis(double extract_millis, double distill_seconds, std::size_t nodes);

/// Tab-separated rows: dataset, method, metric, value.
void write_metrics_table(const std::vector<MethodMetrics>& rows, std::ostream& out);

}  // namespace dnx
