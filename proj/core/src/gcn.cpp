#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dnx/error.hpp"
#include "dnx/io.hpp"
#include "dnx/model.hpp"
#include "dnx/optim.hpp"
#include "dnx/rng.hpp"

namespace dnx {

namespace {

constexpr const char* kGcnFormat = "dnx-gcn";
constexpr std::array<const char*, 10> kTensorNames{
    "conv0.weight", "conv0.bias", "conv1.weight", "conv1.bias", "conv2.weight",
    "conv2.bias",   "head0.weight", "head0.bias", "head1.weight", "head1.bias"};

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& pre) {
    return (pre.array() > 0.0).cast<double>().matrix();
}

template <class Params>
auto collect(Params& p) {
    using Map = std::conditional_t<std::is_const_v<Params>, Eigen::Map<const Eigen::VectorXd>,
                                   Eigen::Map<Eigen::VectorXd>>;
    std::vector<Map> out;
    auto add = [&](auto& m) { out.emplace_back(m.data(), m.size()); };
    for (int l = 0; l < GcnParameters::kConvLayers; ++l) {
        add(p.conv_weight[l]);
        add(p.conv_bias[l]);
    }
    add(p.head_weight1);
    add(p.head_bias1);
    add(p.head_weight2);
    add(p.head_bias2);
    return out;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes(const GcnParameters& p) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> s;
    for (int l = 0; l < GcnParameters::kConvLayers; ++l) {
        s.emplace_back(p.conv_weight[l].rows(), p.conv_weight[l].cols());
        s.emplace_back(1, p.conv_bias[l].cols());
    }
    s.emplace_back(p.head_weight1.rows(), p.head_weight1.cols());
    s.emplace_back(1, p.head_bias1.cols());
    s.emplace_back(p.head_weight2.rows(), p.head_weight2.cols());
    s.emplace_back(1, p.head_bias2.cols());
    return s;
}

// Activations kept for the backward pass.
struct ForwardCache {
    std::array<Eigen::MatrixXd, GcnParameters::kConvLayers> aggregated;  // A H_{l-1}
    std::array<Eigen::MatrixXd, GcnParameters::kConvLayers> pre;
    std::array<Eigen::MatrixXd, GcnParameters::kConvLayers> hidden;
    Eigen::MatrixXd head_pre;
    Eigen::MatrixXd head_hidden;
    Eigen::MatrixXd logits;
};

ForwardCache forward(const GcnParameters& p, const NormalizedAdjacency& adj,
                     const FeatureMatrix& x) {
    p.check();
    if (x.cols() != p.num_features())
        throw DataError("GCN expects " + std::to_string(p.num_features()) + " features, got " +
                        std::to_string(x.cols()));
    if (static_cast<std::size_t>(x.rows()) != adj.n)
        throw DataError("feature rows do not match the adjacency");
    ForwardCache c;
    const Eigen::MatrixXd* h = &x;
    for (int l = 0; l < GcnParameters::kConvLayers; ++l) {
        c.aggregated[l] = adj.rows * (*h);
        c.pre[l] = (c.aggregated[l] * p.conv_weight[l]).rowwise() + p.conv_bias[l];
        c.hidden[l] = relu(c.pre[l]);
        h = &c.hidden[l];
    }
    c.head_pre = (*h * p.head_weight1).rowwise() + p.head_bias1;
    c.head_hidden = relu(c.head_pre);
    c.logits = (c.head_hidden * p.head_weight2).rowwise() + p.head_bias2;
    return c;
}

double uniform_fill(Eigen::MatrixXd& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    return bound;
}

}  // namespace

GcnParameters GcnParameters::zeros(int features, int hidden, int head_hidden, int classes) {
    GcnParameters p;
    int in = features;
    for (int l = 0; l < kConvLayers; ++l) {
        p.conv_weight[l] = Eigen::MatrixXd::Zero(in, hidden);
        p.conv_bias[l] = Eigen::RowVectorXd::Zero(hidden);
        in = hidden;
    }
    p.head_weight1 = Eigen::MatrixXd::Zero(hidden, head_hidden);
    p.head_bias1 = Eigen::RowVectorXd::Zero(head_hidden);
    p.head_weight2 = Eigen::MatrixXd::Zero(head_hidden, classes);
    p.head_bias2 = Eigen::RowVectorXd::Zero(classes);
    return p;
}

GcnParameters GcnParameters::random(int features, int hidden, int head_hidden, int classes,
                                    std::uint64_t seed) {
    auto p = zeros(features, hidden, head_hidden, classes);
    auto rng = make_stream(seed, "train/init");
    for (int l = 0; l < kConvLayers; ++l)
        uniform_fill(p.conv_weight[l], 1.0 / std::sqrt(p.conv_weight[l].rows()), rng);
    uniform_fill(p.head_weight1, 1.0 / std::sqrt(p.head_weight1.rows()), rng);
    uniform_fill(p.head_weight2, 1.0 / std::sqrt(p.head_weight2.rows()), rng);
    return p;
}

void GcnParameters::check() const {
    auto fail = [](const std::string& what) { throw DataError("GCN dimension mismatch: " + what); };
    for (int l = 0; l < kConvLayers; ++l) {
        if (conv_bias[l].cols() != conv_weight[l].cols()) fail("conv bias " + std::to_string(l));
        if (l > 0 && conv_weight[l].rows() != conv_weight[l - 1].cols())
            fail("conv layer " + std::to_string(l));
    }
    if (head_weight1.rows() != conv_weight[kConvLayers - 1].cols()) fail("head input");
    if (head_bias1.cols() != head_weight1.cols()) fail("head bias 0");
    if (head_weight2.rows() != head_weight1.cols()) fail("head layer 1");
    if (head_bias2.cols() != head_weight2.cols()) fail("head bias 1");
    if (num_classes() < 1 || num_features() < 1) fail("empty input or output");
}

std::vector<Eigen::Map<Eigen::VectorXd>> GcnParameters::tensors() { return collect(*this); }
std::vector<Eigen::Map<const Eigen::VectorXd>> GcnParameters::tensors() const {
    return collect(*this);
}

std::size_t GcnParameters::size() const {
    std::size_t s = 0;
    for (const auto& t : tensors()) s += static_cast<std::size_t>(t.size());
    return s;
}

Eigen::MatrixXd gcn_logits(const GcnParameters& p, const NormalizedAdjacency& adj,
                           const FeatureMatrix& x) {
    return forward(p, adj, x).logits;
}

PredictionMatrix gcn_forward(const GcnParameters& p, const NormalizedAdjacency& adj,
                             const FeatureMatrix& x) {
    return {softmax_rows(gcn_logits(p, adj, x)), "gcn"};
}

LossAndGradient gcn_loss_and_gradient(const GcnParameters& p, const NormalizedAdjacency& adj,
                                      const FeatureMatrix& x, const std::vector<int>& labels,
                                      const std::vector<NodeId>& nodes) {
    if (nodes.empty()) throw UsageError("loss needs at least one node");
    const ForwardCache c = forward(p, adj, x);
    const Eigen::Index n = x.rows();
    const double scale = 1.0 / static_cast<double>(nodes.size());

    LossAndGradient out;
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(n, p.num_classes());
    for (NodeId u : nodes) {
        const Eigen::RowVectorXd z = c.logits.row(u);
        const double mx = z.maxCoeff();
        const double lse = mx + std::log((z.array() - mx).exp().sum());
        out.loss -= (z(labels[u]) - lse) * scale;
        d_logits.row(u) = (z.array() - lse).exp().matrix() * scale;
        d_logits(u, labels[u]) -= scale;
    }

    GcnParameters& g = out.gradient;
    g.head_weight2 = c.head_hidden.transpose() * d_logits;
    g.head_bias2 = d_logits.colwise().sum();
    Eigen::MatrixXd d_pre =
        (d_logits * p.head_weight2.transpose()).cwiseProduct(relu_mask(c.head_pre));
    g.head_weight1 = c.hidden.back().transpose() * d_pre;
    g.head_bias1 = d_pre.colwise().sum();
    Eigen::MatrixXd d_hidden = d_pre * p.head_weight1.transpose();
    for (int l = GcnParameters::kConvLayers - 1; l >= 0; --l) {
        d_pre = d_hidden.cwiseProduct(relu_mask(c.pre[l]));
        g.conv_weight[l] = c.aggregated[l].transpose() * d_pre;
        g.conv_bias[l] = d_pre.colwise().sum();
        // The normalized adjacency is symmetric, so A^T = A.
        if (l > 0) d_hidden = adj.rows * (d_pre * p.conv_weight[l].transpose());
    }
    return out;
}

GcnModel::GcnModel(GcnParameters params) : params_(std::move(params)) { params_.check(); }

PredictionMatrix GcnModel::predict(const Graph& g, const FeatureMatrix& x) const {
    return predict(build_normalized_adjacency(g), x);
}

PredictionMatrix GcnModel::predict(const NormalizedAdjacency& adj, const FeatureMatrix& x) const {
    return gcn_forward(params_, adj, x);
}

TrainResult train_gcn(const Dataset& d, const TrainConfig& config) {
    if (d.splits.empty()) throw UsageError("dataset '" + d.name + "' has no train/val/test splits");
    const auto train_nodes = d.splits.nodes(Split::train);
    const auto val_nodes = d.splits.nodes(Split::val);
    const auto test_nodes = d.splits.nodes(Split::test);
    if (train_nodes.empty()) throw UsageError("empty training split");

    const auto adj = build_normalized_adjacency(d.graph);
    GcnParameters params =
        GcnParameters::random(static_cast<int>(d.features.cols()), config.hidden,
                              config.head_hidden, d.num_classes, config.seed);
    Adam adam({.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});

    TrainReport report;
    GcnParameters best = params;
    double best_acc = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int stagnant = 0;
    auto tensors = params.tensors();
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto lg = gcn_loss_and_gradient(params, adj, d.features, d.labels, train_nodes);
        if (!std::isfinite(lg.loss))
            throw DivergenceError("GCN training loss is non-finite at epoch " + std::to_string(epoch));
        report.loss_history.push_back(lg.loss);
        const auto grads = std::as_const(lg.gradient).tensors();
        adam.step(tensors, grads);
        report.epochs_run = epoch;

        const auto logits = gcn_logits(params, adj, d.features);
        const auto pred = PredictionMatrix{softmax_rows(logits), "gcn"};
        const double val_acc = val_nodes.empty() ? 0.0 : accuracy(pred.argmax(), d.labels, val_nodes);
        double val_loss = 0.0;
        for (NodeId u : val_nodes) val_loss -= std::log(std::max(pred.probs(u, d.labels[u]), 1e-300));
        // Stagnation counts epochs without a validation-accuracy gain; the
        // snapshot also moves on ties with a lower validation loss.
        const bool improved = val_acc > best_acc;
        if (improved || (val_acc == best_acc && val_loss < best_val_loss)) {
            best_acc = val_acc;
            best_val_loss = val_loss;
            best = params;
            report.best_epoch = epoch;
        }
        stagnant = improved ? 0 : stagnant + 1;
        if (stagnant >= config.patience) break;
    }
    report.best_val_accuracy = best_acc;
    GcnModel model(std::move(best));
    const auto pred = model.predict(adj, d.features).argmax();
    report.train_accuracy = accuracy(pred, d.labels, train_nodes);
    report.test_accuracy = accuracy(pred, d.labels, test_nodes);
    return {std::move(model), std::move(report)};
}

void save_gcn(const GcnModel& m, const std::filesystem::path& path) {
    const auto& p = m.parameters();
    const auto sh = shapes(p);
    const auto ts = p.tensors();
    std::ostringstream out;
    out << "{\n  \"format\": \"" << kGcnFormat << "\",\n  \"version\": 1,\n  \"tensors\": [";
    for (std::size_t t = 0; t < ts.size(); ++t) {
        out << (t ? ",\n" : "\n") << "    {\"name\": \"" << kTensorNames[t]
            << "\", \"rows\": " << sh[t].first << ", \"cols\": " << sh[t].second
            << ", \"data\": [";
        // Row-major order regardless of Eigen storage.
        bool first = true;
        for (Eigen::Index i = 0; i < sh[t].first; ++i)
            for (Eigen::Index j = 0; j < sh[t].second; ++j) {
                out << (first ? "" : ",") << format_double(ts[t][j * sh[t].first + i]);
                first = false;
            }
        out << "]}";
    }
    out << "\n  ]\n}\n";
    write_file(path, out.str());
}

GcnModel load_gcn(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed model checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (j.value("format", std::string{}) != kGcnFormat)
            throw DataError("not a GCN checkpoint: " + path.string());
        const auto& ts = j.at("tensors");
        if (ts.size() != kTensorNames.size()) throw DataError("GCN checkpoint needs 10 tensors");
        std::vector<Eigen::MatrixXd> mats;
        for (std::size_t t = 0; t < ts.size(); ++t) {
            if (ts[t].at("name").get<std::string>() != kTensorNames[t])
                throw DataError("unexpected tensor " + ts[t].at("name").get<std::string>());
            const auto rows = ts[t].at("rows").get<Eigen::Index>();
            const auto cols = ts[t].at("cols").get<Eigen::Index>();
            const auto data = ts[t].at("data").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(data.size()) != rows * cols)
                throw DataError(std::string("size mismatch in tensor ") + kTensorNames[t]);
            Eigen::MatrixXd m(rows, cols);
            for (Eigen::Index i = 0; i < rows; ++i)
                for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[i * cols + c];
            mats.push_back(std::move(m));
        }
        GcnParameters p;
        for (int l = 0; l < GcnParameters::kConvLayers; ++l) {
            p.conv_weight[l] = mats[2 * l];
            p.conv_bias[l] = mats[2 * l + 1];
        }
        p.head_weight1 = mats[6];
        p.head_bias1 = mats[7];
        p.head_weight2 = mats[8];
        p.head_bias2 = mats[9];
        return GcnModel(std::move(p));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid model checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace dnx
