#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "dnx/model.hpp"

namespace dnx {

/// Linear SGC surrogate softmax(A^L X Theta + b) bound to the graph and
/// features it was fitted on. Immutable; copies share the propagated inputs.
class SgcSurrogate {
 public:
    SgcSurrogate() = default;
    SgcSurrogate(std::shared_ptr<const NormalizedAdjacency> adj_pow, FeatureMatrix features,
                 Eigen::MatrixXd theta, Eigen::RowVectorXd bias);

    int depth() const { return adj_pow_->depth; }
    std::size_t num_nodes() const { return adj_pow_->n; }
    int num_features() const { return static_cast<int>(theta_.rows()); }
    int num_classes() const { return static_cast<int>(theta_.cols()); }

    const NormalizedAdjacency& adj_pow() const { return *adj_pow_; }
    const std::shared_ptr<const NormalizedAdjacency>& adj_pow_ptr() const { return adj_pow_; }
    const FeatureMatrix& features() const { return *features_; }
    const Eigen::MatrixXd& propagated() const { return *propagated_; }
    const Eigen::MatrixXd& theta() const { return theta_; }
    const Eigen::RowVectorXd& bias() const { return bias_; }

    /// Z_u = (A^L X)_u Theta + b.
    Eigen::RowVectorXd logits(NodeId u) const;
    Eigen::MatrixXd logits() const;

    /// Same graph and features, different parameters.
    SgcSurrogate with_parameters(Eigen::MatrixXd theta, Eigen::RowVectorXd bias) const;

 private:
    std::shared_ptr<const NormalizedAdjacency> adj_pow_;
    std::shared_ptr<const FeatureMatrix> features_;
    std::shared_ptr<const Eigen::MatrixXd> propagated_;
    Eigen::MatrixXd theta_;
    Eigen::RowVectorXd bias_;
};

PredictionMatrix surrogate_predict(const SgcSurrogate& s);
PredictionMatrix surrogate_predict(const SgcSurrogate& s, const std::vector<NodeId>& nodes);

/// The surrogate seen as a black box over arbitrary features on its graph.
class SurrogateModel final : public BlackBoxModel {
 public:
    explicit SurrogateModel(SgcSurrogate s) : s_(std::move(s)) {}
    PredictionMatrix predict(const Graph& g, const FeatureMatrix& x) const override;
    std::string id() const override { return "sgc"; }

 private:
    SgcSurrogate s_;
};

struct DistillConfig {
    double learning_rate = 0.1;
    double weight_decay = 5e-6;  // decoupled (AdamW)
    int max_epochs = 10000;
    // Stop once the loss improved by less than `tolerance` over `window` epochs.
    double tolerance = 1e-9;
    int window = 100;
};

struct ConfusionReport {
    Eigen::MatrixXi matrix;  // rows: black-box class, cols: surrogate class
    double agreement = 0.0;
    double binary_accuracy = 0.0;  // base-vs-motif collapse
};

struct DistillReport {
    double kl = 0.0;  // mean over nodes
    double agreement = 0.0;
    Eigen::MatrixXi confusion;
    double seconds = 0.0;
    double alpha_hat = 0.0;  // max_u ||Phi_u - Psi_u||_2
    int epochs = 0;
};

struct DistillResult {
    SgcSurrogate surrogate;
    DistillReport report;
};

/// Mean-over-nodes KL(targets || softmax(P Theta + b)), and its gradient.
struct KlGradient {
    double loss = 0.0;
    Eigen::MatrixXd d_theta;
    Eigen::RowVectorXd d_bias;
};
KlGradient kl_loss_and_gradient(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& propagated,
                                const Eigen::MatrixXd& theta, const Eigen::RowVectorXd& bias);

/// Fits Theta and b by full-batch AdamW from zero init on every node.
/// Throws DivergenceError on a non-finite loss.
DistillResult distill(const PredictionMatrix& targets,
                      std::shared_ptr<const NormalizedAdjacency> adj_pow, const FeatureMatrix& x,
                      const DistillConfig& config = {});

double max_row_gap(const PredictionMatrix& a, const PredictionMatrix& b);

ConfusionReport distillation_confusion(const PredictionMatrix& surrogate,
                                       const PredictionMatrix& targets,
                                       const std::vector<int>& base_classes);

void save_surrogate(const SgcSurrogate& s, const std::filesystem::path& path);
/// Reads Theta, b and L, then binds them to the given graph and features.
SgcSurrogate load_surrogate(const std::filesystem::path& path, const Graph& g,
                            const FeatureMatrix& x);

}  // namespace dnx
