#include "doctest.h"
#include "oracles.hpp"

#include "dnx/dataset.hpp"
#include "dnx/error.hpp"
#include "dnx/io.hpp"
#include "dnx/model.hpp"
#include "dnx/optim.hpp"

using namespace dnx;

namespace {

Dataset tiny_dataset(std::uint64_t seed) {
    Dataset d;
    d.graph = oracle::random_graph(10, 0.3, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    d.features = FeatureMatrix(10, 4);
    for (Eigen::Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = gauss(rng);
    d.num_classes = 3;
    for (int i = 0; i < 10; ++i) d.labels.push_back(i % 3);
    return d;
}

GcnParameters random_params(int d, int c, std::uint64_t seed) {
    auto p = GcnParameters::random(d, 5, 6, c, seed);
    // Non-zero biases so every gradient block is exercised.
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& b : p.conv_bias)
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
    for (Eigen::Index i = 0; i < p.head_bias1.size(); ++i) p.head_bias1(i) = u(rng);
    for (Eigen::Index i = 0; i < p.head_bias2.size(); ++i) p.head_bias2(i) = u(rng);
    return p;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("zero weights give uniform rows") {
    auto d = tiny_dataset(1);
    auto p = GcnParameters::zeros(4, 20, 60, 2);
    auto out = gcn_forward(p, build_normalized_adjacency(d.graph), d.features);
    CHECK((out.probs.array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("forward pass matches the dense reference") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto d = tiny_dataset(seed);
        auto p = random_params(4, 3, seed);
        auto ours = gcn_forward(p, build_normalized_adjacency(d.graph), d.features);
        Eigen::MatrixXd ref = oracle::gcn_forward(p, oracle::dense_normalized(d.graph), d.features);
        CHECK((ours.probs - ref).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((ours.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
        auto again = gcn_forward(p, build_normalized_adjacency(d.graph), d.features);
        CHECK(again.probs == ours.probs);
    }
}

TEST_CASE("isolated node depends only on its own features") {
    auto d = tiny_dataset(3);
    d.graph = Graph(10, {{1, 2}, {2, 3}, {3, 4}});
    auto p = random_params(4, 3, 3);
    auto adj = build_normalized_adjacency(d.graph);
    auto before = gcn_forward(p, adj, d.features).probs.row(0).eval();
    FeatureMatrix x = d.features;
    x.bottomRows(9).setConstant(7.0);
    auto after = gcn_forward(p, adj, x).probs.row(0).eval();
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dimension mismatches are reported") {
    auto d = tiny_dataset(2);
    auto p = random_params(5, 3, 2);
    CHECK_THROWS_AS(gcn_forward(p, build_normalized_adjacency(d.graph), d.features), DataError);
    auto q = random_params(4, 3, 2);
    q.head_weight1.resize(3, 6);
    CHECK_THROWS_AS(q.check(), DataError);
}

TEST_CASE("cross-entropy gradient matches central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto d = tiny_dataset(10 + seed);
        auto adj = build_normalized_adjacency(d.graph);
        auto p = random_params(4, 3, 20 + seed);
        std::vector<NodeId> nodes{0, 1, 2, 3, 4, 5, 6, 7};
        auto lg = gcn_loss_and_gradient(p, adj, d.features, d.labels, nodes);

        auto loss_at = [&](const GcnParameters& q) {
            auto probs = oracle::gcn_forward(q, oracle::dense_normalized(d.graph), d.features);
            double s = 0.0;
            for (NodeId u : nodes) s -= std::log(probs(u, d.labels[u]));
            return s / static_cast<double>(nodes.size());
        };
        CHECK(std::abs(lg.loss - loss_at(p)) < 1e-12);

        const double h = 1e-6;
        auto grads = std::as_const(lg.gradient).tensors();
        double worst = 0.0;
        for (std::size_t t = 0; t < grads.size(); ++t) {
            for (Eigen::Index i = 0; i < grads[t].size(); ++i) {
                GcnParameters plus = p, minus = p;
                plus.tensors()[t](i) += h;
                minus.tensors()[t](i) -= h;
                const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
                const double err = std::abs(fd - grads[t](i)) / std::max(1e-3, std::abs(fd));
                worst = std::max(worst, err);
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("training reaches the reference accuracy") {
    auto house = generate({Benchmark::ba_house, 7});
    auto r = train_gcn(house, {});
    CHECK(r.report.test_accuracy >= 0.90);
    CHECK(r.report.epochs_run <= 1000);

    // Averaged over 50-epoch blocks the loss does not go up.
    const auto& hist = r.report.loss_history;
    auto block = [&](std::size_t b) {
        double s = 0.0;
        for (std::size_t i = b * 50; i < b * 50 + 50; ++i) s += hist[i];
        return s / 50.0;
    };
    for (std::size_t b = 1; (b + 1) * 50 <= hist.size(); ++b) CHECK(block(b) <= block(b - 1) + 1e-12);

    auto grids = generate({Benchmark::ba_grids, 7});
    CHECK(train_gcn(grids, {}).report.test_accuracy >= 0.95);
}

TEST_CASE("training without splits is a usage error") {
    auto d = tiny_dataset(4);
    CHECK_THROWS_AS(train_gcn(d, {}), UsageError);
}

TEST_CASE("checkpoints round trip") {
    auto dir = testutil::scratch("gcn");
    GcnModel m(random_params(4, 3, 9));
    save_gcn(m, dir / "gcn.json");
    auto back = load_gcn(dir / "gcn.json");
    auto a = m.parameters().tensors();
    auto b = back.parameters().tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == b[t]);
    write_file(dir / "bad.json", "{\"format\": \"dnx-gcn\"}");
    CHECK_THROWS_AS(load_gcn(dir / "bad.json"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("prediction files") {
    auto dir = testutil::scratch("pred");
    write_file(dir / "uniform.csv", "0.5,0.5\n0.5,0.5\n");
    auto u = load_predictions(dir / "uniform.csv", 2);
    CHECK(u.probs == Eigen::MatrixXd::Constant(2, 2, 0.5));
    CHECK(u.provenance == "external");

    write_file(dir / "off.csv", "0.500001,0.5\n0.25,0.75\n");
    auto off = load_predictions(dir / "off.csv");
    CHECK(std::abs(off.probs.row(0).sum() - 1.0) < 1e-15);

    write_file(dir / "neg.csv", "1.1,-0.1\n");
    CHECK_THROWS_AS(load_predictions(dir / "neg.csv"), DataError);
    write_file(dir / "far.csv", "0.6,0.6\n");
    CHECK_THROWS_AS(load_predictions(dir / "far.csv"), DataError);
    CHECK_THROWS_AS(load_predictions(dir / "uniform.csv", 3), DataError);
    write_file(dir / "ragged.csv", "0.5,0.5\n1\n");
    CHECK_THROWS_AS(load_predictions(dir / "ragged.csv"), DataError);

    PredictionMatrix p{oracle::softmax_rows(Eigen::MatrixXd::Random(4, 3)), "gcn"};
    save_predictions(p, dir / "p.csv");
    CHECK((load_predictions(dir / "p.csv").probs - p.probs).cwiseAbs().maxCoeff() < 1e-15);
    std::filesystem::remove_all(dir);
}

TEST_CASE("softmax is stable for large logits") {
    Eigen::RowVectorXd z(3);
    z << 1000.0, 1000.0, -1000.0;
    auto s = softmax(z);
    CHECK(s(0) == doctest::Approx(0.5));
    CHECK(s(2) == 0.0);
}

TEST_CASE("adam first step moves by the learning rate") {
    Adam adam({.learning_rate = 0.1});
    Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 1.0);
    std::vector<Eigen::Map<Eigen::VectorXd>> params{Eigen::Map<Eigen::VectorXd>(x.data(), 3)};
    std::vector<Eigen::VectorXd> grads{Eigen::Vector3d(2.0, -3.0, 0.5)};
    adam.step(params, grads);
    CHECK(x(0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(x(1) == doctest::Approx(1.1).epsilon(1e-6));

    Adam decoupled({.learning_rate = 0.1, .weight_decay = 0.5, .decoupled = true});
    Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 2.0);
    std::vector<Eigen::Map<Eigen::VectorXd>> py{Eigen::Map<Eigen::VectorXd>(y.data(), 1)};
    std::vector<Eigen::VectorXd> zero{Eigen::VectorXd::Zero(1)};
    decoupled.step(py, zero);
    CHECK(y(0) == doctest::Approx(2.0 * 0.95));
}

}
