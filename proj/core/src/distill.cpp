#include "dnx/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "dnx/error.hpp"
#include "dnx/io.hpp"
#include "dnx/optim.hpp"

namespace dnx {

namespace {
constexpr const char* kSurrogateFormat = "dnx-surrogate";
}

SgcSurrogate::SgcSurrogate(std::shared_ptr<const NormalizedAdjacency> adj_pow,
                           FeatureMatrix features, Eigen::MatrixXd theta, Eigen::RowVectorXd bias)
    : adj_pow_(std::move(adj_pow)),
      features_(std::make_shared<const FeatureMatrix>(std::move(features))),
      theta_(std::move(theta)),
      bias_(std::move(bias)) {
    if (!adj_pow_) throw UsageError("surrogate needs a propagation matrix");
    if (static_cast<std::size_t>(features_->rows()) != adj_pow_->n)
        throw DataError("surrogate features do not match the graph");
    if (theta_.rows() != features_->cols())
        throw DataError("Theta has " + std::to_string(theta_.rows()) + " rows, features have " +
                        std::to_string(features_->cols()) + " columns");
    if (bias_.cols() != theta_.cols()) throw DataError("bias length does not match class count");
    propagated_ = std::make_shared<const Eigen::MatrixXd>(adj_pow_->rows * (*features_));
}

Eigen::RowVectorXd SgcSurrogate::logits(NodeId u) const {
    return propagated_->row(u) * theta_ + bias_;
}

Eigen::MatrixXd SgcSurrogate::logits() const {
    return ((*propagated_) * theta_).rowwise() + bias_;
}

SgcSurrogate SgcSurrogate::with_parameters(Eigen::MatrixXd theta, Eigen::RowVectorXd bias) const {
    if (theta.rows() != theta_.rows() || theta.cols() != theta_.cols() ||
        bias.cols() != bias_.cols())
        throw DataError("replacement surrogate parameters have the wrong shape");
    SgcSurrogate s = *this;
    s.theta_ = std::move(theta);
    s.bias_ = std::move(bias);
    return s;
}

PredictionMatrix surrogate_predict(const SgcSurrogate& s) {
    return {softmax_rows(s.logits()), "sgc"};
}

PredictionMatrix surrogate_predict(const SgcSurrogate& s, const std::vector<NodeId>& nodes) {
    PredictionMatrix p{Eigen::MatrixXd(static_cast<Eigen::Index>(nodes.size()), s.num_classes()),
                       "sgc"};
    for (std::size_t i = 0; i < nodes.size(); ++i)
        p.probs.row(static_cast<Eigen::Index>(i)) = softmax(s.logits(nodes[i]));
    return p;
}

PredictionMatrix SurrogateModel::predict(const Graph& g, const FeatureMatrix& x) const {
    if (g.num_nodes() != s_.num_nodes())
        throw DataError("surrogate was fitted on a graph with a different node count");
    if (x.cols() != s_.num_features()) throw DataError("feature width mismatch for surrogate");
    const Eigen::MatrixXd z = ((s_.adj_pow().rows * x) * s_.theta()).rowwise() + s_.bias();
    return {softmax_rows(z), "sgc"};
}

KlGradient kl_loss_and_gradient(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& propagated,
                                const Eigen::MatrixXd& theta, const Eigen::RowVectorXd& bias) {
    const Eigen::Index n = targets.rows();
    const double scale = 1.0 / static_cast<double>(n);
    const Eigen::MatrixXd z = (propagated * theta).rowwise() + bias;
    Eigen::MatrixXd d_z(n, z.cols());
    KlGradient out;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = z.row(i).maxCoeff();
        const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            const double t = targets(i, c);
            const double log_q = z(i, c) - lse;
            if (t > 0.0) out.loss += scale * t * (std::log(t) - log_q);
            d_z(i, c) = scale * (std::exp(log_q) - t);
        }
    }
    out.d_theta = propagated.transpose() * d_z;
    out.d_bias = d_z.colwise().sum();
    return out;
}

DistillResult distill(const PredictionMatrix& targets,
                      std::shared_ptr<const NormalizedAdjacency> adj_pow, const FeatureMatrix& x,
                      const DistillConfig& config) {
    check_row_stochastic(targets.probs, 1e-6);
    if (targets.num_nodes() != static_cast<std::size_t>(x.rows()))
        throw DataError("targets have " + std::to_string(targets.num_nodes()) +
                        " rows, features have " + std::to_string(x.rows()));
    const auto start = std::chrono::steady_clock::now();
    const int classes = targets.num_classes();
    SgcSurrogate s(std::move(adj_pow), x, Eigen::MatrixXd::Zero(x.cols(), classes),
                   Eigen::RowVectorXd::Zero(classes));
    Eigen::MatrixXd theta = s.theta();
    Eigen::RowVectorXd bias = s.bias();

    Adam adamw({.learning_rate = config.learning_rate,
                .weight_decay = config.weight_decay,
                .decoupled = true});
    std::vector<Eigen::Map<Eigen::VectorXd>> params{{theta.data(), theta.size()},
                                                    {bias.data(), bias.size()}};
    std::vector<double> history;
    int epoch = 0;
    while (epoch < config.max_epochs) {
        auto g = kl_loss_and_gradient(targets.probs, s.propagated(), theta, bias);
        if (!std::isfinite(g.loss) || !g.d_theta.allFinite())
            throw DivergenceError("distillation diverged at epoch " + std::to_string(epoch) +
                                  " (loss " + format_double(g.loss) + ")");
        history.push_back(g.loss);
        const std::vector<Eigen::Map<const Eigen::VectorXd>> grads{
            {g.d_theta.data(), g.d_theta.size()}, {g.d_bias.data(), g.d_bias.size()}};
        adamw.step(params, grads);
        ++epoch;
        const auto t = history.size() - 1;
        if (static_cast<int>(t) >= config.window &&
            history[t - config.window] - history[t] < config.tolerance)
            break;
    }

    DistillResult out{s.with_parameters(theta, bias), {}};
    const double final_loss =
        kl_loss_and_gradient(targets.probs, s.propagated(), theta, bias).loss;
    if (!std::isfinite(final_loss)) throw DivergenceError("distillation produced a non-finite loss");
    const auto psi = surrogate_predict(out.surrogate);
    const auto conf = distillation_confusion(psi, targets, {});
    out.report.kl = final_loss;
    out.report.agreement = conf.agreement;
    out.report.confusion = conf.matrix;
    out.report.alpha_hat = max_row_gap(psi, targets);
    out.report.epochs = epoch;
    out.report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

double max_row_gap(const PredictionMatrix& a, const PredictionMatrix& b) {
    if (a.probs.rows() != b.probs.rows() || a.probs.cols() != b.probs.cols())
        throw DataError("prediction matrices differ in shape");
    double gap = 0.0;
    for (Eigen::Index i = 0; i < a.probs.rows(); ++i)
        gap = std::max(gap, (a.probs.row(i) - b.probs.row(i)).norm());
    return gap;
}

ConfusionReport distillation_confusion(const PredictionMatrix& surrogate,
                                       const PredictionMatrix& targets,
                                       const std::vector<int>& base_classes) {
    if (surrogate.num_nodes() != targets.num_nodes())
        throw DataError("confusion needs predictions for the same nodes");
    const int c = std::max(surrogate.num_classes(), targets.num_classes());
    ConfusionReport r;
    r.matrix = Eigen::MatrixXi::Zero(c, c);
    const auto is_base = [&](int k) {
        return std::find(base_classes.begin(), base_classes.end(), k) != base_classes.end();
    };
    std::size_t agree = 0;
    std::size_t binary = 0;
    const std::size_t n = targets.num_nodes();
    for (std::size_t i = 0; i < n; ++i) {
        const int t = targets.argmax(static_cast<NodeId>(i));
        const int p = surrogate.argmax(static_cast<NodeId>(i));
        ++r.matrix(t, p);
        agree += t == p;
        binary += is_base(t) == is_base(p);
    }
    if (n) {
        r.agreement = static_cast<double>(agree) / static_cast<double>(n);
        r.binary_accuracy = static_cast<double>(binary) / static_cast<double>(n);
    }
    return r;
}

void save_surrogate(const SgcSurrogate& s, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "{\n  \"format\": \"" << kSurrogateFormat << "\",\n  \"version\": 1,\n";
    out << "  \"depth\": " << s.depth() << ",\n";
    out << "  \"num_features\": " << s.num_features() << ",\n";
    out << "  \"num_classes\": " << s.num_classes() << ",\n";
    out << "  \"theta\": [";
    for (Eigen::Index i = 0; i < s.theta().rows(); ++i) {
        out << (i ? ",\n    [" : "\n    [");
        for (Eigen::Index c = 0; c < s.theta().cols(); ++c)
            out << (c ? "," : "") << format_double(s.theta()(i, c));
        out << ']';
    }
    out << "],\n  \"bias\": [";
    for (Eigen::Index c = 0; c < s.bias().cols(); ++c)
        out << (c ? "," : "") << format_double(s.bias()(c));
    out << "]\n}\n";
    write_file(path, out.str());
}

SgcSurrogate load_surrogate(const std::filesystem::path& path, const Graph& g,
                            const FeatureMatrix& x) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed surrogate checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (j.value("format", std::string{}) != kSurrogateFormat)
            throw DataError("not a surrogate checkpoint: " + path.string());
        const int depth = j.at("depth").get<int>();
        const auto d = j.at("num_features").get<Eigen::Index>();
        const auto c = j.at("num_classes").get<Eigen::Index>();
        const auto rows = j.at("theta").get<std::vector<std::vector<double>>>();
        const auto bias = j.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(rows.size()) != d || static_cast<Eigen::Index>(bias.size()) != c)
            throw DataError("surrogate checkpoint shape mismatch");
        if (x.cols() != d)
            throw DataError("surrogate expects " + std::to_string(d) + " features, dataset has " +
                            std::to_string(x.cols()));
        Eigen::MatrixXd theta(d, c);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (static_cast<Eigen::Index>(rows[i].size()) != c)
                throw DataError("ragged Theta in " + path.string());
            for (Eigen::Index k = 0; k < c; ++k) theta(i, k) = rows[i][k];
        }
        Eigen::RowVectorXd b(c);
        for (Eigen::Index k = 0; k < c; ++k) b(k) = bias[k];
        auto adj = std::make_shared<const NormalizedAdjacency>(normalized_adjacency_power(g, depth));
        return SgcSurrogate(std::move(adj), x, std::move(theta), std::move(b));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid surrogate checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace dnx
