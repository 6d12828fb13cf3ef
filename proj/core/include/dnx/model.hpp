#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnx/dataset.hpp"
#include "dnx/graph.hpp"

namespace dnx {

/// n x C matrix of class probabilities; every row sums to one.
struct PredictionMatrix {
    Eigen::MatrixXd probs;
    std::string provenance;

    std::size_t num_nodes() const { return static_cast<std::size_t>(probs.rows()); }
    int num_classes() const { return static_cast<int>(probs.cols()); }
    int argmax(NodeId u) const;
    std::vector<int> argmax() const;
};

/// The model being explained. Only its input -> probability mapping is
/// observable; explainers and the distiller never see gradients or hidden
/// state.
class BlackBoxModel {
 public:
    virtual ~BlackBoxModel() = default;
    virtual PredictionMatrix predict(const Graph& g, const FeatureMatrix& x) const = 0;
    virtual std::string id() const = 0;
};

/// Throws DataError unless rows are non-negative and sum to one within tol.
void check_row_stochastic(const Eigen::MatrixXd& probs, double tol);

/// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);

/// Prediction file: one row per node, C comma-separated probabilities.
/// Rows must sum to one within 1e-6 and are renormalized on load.
PredictionMatrix load_predictions(const std::filesystem::path& path, std::size_t expected_rows = 0);
void save_predictions(const PredictionMatrix& p, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// GCN black box: three graph convolutions with ReLU, then a two-layer MLP head
// and a row-wise softmax.

struct GcnParameters {
    static constexpr int kConvLayers = 3;

    std::array<Eigen::MatrixXd, kConvLayers> conv_weight;  // in x out
    std::array<Eigen::RowVectorXd, kConvLayers> conv_bias;
    Eigen::MatrixXd head_weight1;  // hidden x head_hidden
    Eigen::RowVectorXd head_bias1;
    Eigen::MatrixXd head_weight2;  // head_hidden x C
    Eigen::RowVectorXd head_bias2;

    int num_features() const { return static_cast<int>(conv_weight[0].rows()); }
    int num_classes() const { return static_cast<int>(head_weight2.cols()); }

    /// Zero-filled parameters with the given shapes.
    static GcnParameters zeros(int features, int hidden, int head_hidden, int classes);
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    static GcnParameters random(int features, int hidden, int head_hidden, int classes,
                                std::uint64_t seed);

    /// Throws DataError unless layer dimensions chain from d to C.
    void check() const;

    /// Every tensor as a flat view, in a fixed order (used by the optimizer,
    /// checkpoints and gradient checks).
    std::vector<Eigen::Map<Eigen::VectorXd>> tensors();
    std::vector<Eigen::Map<const Eigen::VectorXd>> tensors() const;
    std::size_t size() const;
};

/// Pre-softmax class scores of the GCN.
Eigen::MatrixXd gcn_logits(const GcnParameters& p, const NormalizedAdjacency& adj,
                           const FeatureMatrix& x);
PredictionMatrix gcn_forward(const GcnParameters& p, const NormalizedAdjacency& adj,
                             const FeatureMatrix& x);

struct LossAndGradient {
    double loss = 0.0;
    GcnParameters gradient;
};

/// Mean cross-entropy over `nodes` and its exact gradient (manual backprop).
LossAndGradient gcn_loss_and_gradient(const GcnParameters& p, const NormalizedAdjacency& adj,
                                      const FeatureMatrix& x, const std::vector<int>& labels,
                                      const std::vector<NodeId>& nodes);

class GcnModel final : public BlackBoxModel {
 public:
    GcnModel() = default;
    explicit GcnModel(GcnParameters params);

    PredictionMatrix predict(const Graph& g, const FeatureMatrix& x) const override;
    PredictionMatrix predict(const NormalizedAdjacency& adj, const FeatureMatrix& x) const;
    std::string id() const override { return "gcn"; }

    const GcnParameters& parameters() const { return params_; }

 private:
    GcnParameters params_;
};

struct TrainConfig {
    int hidden = 20;
    int head_hidden = 60;
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    int max_epochs = 1000;
    int patience = 100;
    std::uint64_t seed = 0;
};

struct TrainReport {
    int epochs_run = 0;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> loss_history;
};

struct TrainResult {
    GcnModel model;
    TrainReport report;
};

/// Full-batch Adam (L2 weight decay added to the gradient), keeping the
/// parameter snapshot with the best validation accuracy. Throws UsageError
/// when the dataset has no splits.
TrainResult train_gcn(const Dataset& d, const TrainConfig& config);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                const std::vector<NodeId>& nodes);

void save_gcn(const GcnModel& m, const std::filesystem::path& path);
GcnModel load_gcn(const std::filesystem::path& path);

}  // namespace dnx
