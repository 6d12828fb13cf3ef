#include <memory>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"

#include "dnx/error.hpp"
#include "dnx/explain.hpp"
#include "dnx/io.hpp"

using namespace dnx;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
}

SgcSurrogate surrogate(const Graph& g, const FeatureMatrix& x, std::uint64_t seed, int depth = 3) {
    auto adj = std::make_shared<const NormalizedAdjacency>(normalized_adjacency_power(g, depth));
    return SgcSurrogate(adj, x, gaussian(x.cols(), 3, seed), gaussian(1, 3, seed + 1));
}

SgcSurrogate random_surrogate(std::size_t n, std::uint64_t seed, int depth = 3) {
    Graph g = oracle::random_graph(n, 2.5 / static_cast<double>(n), seed);
    return surrogate(g, gaussian(static_cast<Eigen::Index>(n), 4, seed + 7), seed + 11, depth);
}

// ||A^L_u (diag(E) - I) X Theta||^2 with dense matrices over all n nodes.
double dense_objective(const SgcSurrogate& s, const Graph& g, NodeId u, const Eigen::VectorXd& full) {
    Eigen::RowVectorXd row = oracle::dense_power(g, s.depth()).row(u);
    Eigen::MatrixXd diag = full.asDiagonal();
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(full.size(), full.size());
    return (row * (diag - id) * s.features() * s.theta()).squaredNorm();
}

Eigen::VectorXd scatter(const Explanation& e, const Eigen::VectorXd& scores, std::size_t n) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < e.candidates.size(); ++j) full(e.candidates[j]) = scores(static_cast<Eigen::Index>(j));
    return full;
}

}  // namespace

TEST_SUITE("explain") {

TEST_CASE("method names") {
    CHECK(parse_method("dnx") == Method::dnx);
    CHECK(parse_method("fastdnx") == Method::fastdnx);
    CHECK(method_name(Method::adjbaseline) == "adjbaseline");
    try {
        parse_method("gnnexplainer");
        FAIL("expected a usage error");
    } catch (const UsageError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dnx") != std::string::npos);
        CHECK(msg.find("fastdnx") != std::string::npos);
        CHECK(msg.find("adjbaseline") != std::string::npos);
    }
}

TEST_CASE("top-k ranks by score then id") {
    Explanation e;
    e.candidates = {2, 4, 6, 8};
    e.scores = Eigen::Vector4d(0.5, 0.9, 0.5, 0.1);
    CHECK(e.top_k(3) == std::vector<NodeId>{4, 2, 6});
    CHECK(e.top_k(10).size() == 4);
    CHECK(e.score_of(6) == 0.5);
    CHECK(e.score_of(5) == 0.0);
    CHECK(e.dense(10)(8) == 0.1);
}

TEST_CASE("objective special values") {
    auto s = random_surrogate(20, 1);
    for (NodeId u : {0, 5, 11}) {
        auto lc = local_contributions(s, u);
        const auto k = static_cast<Eigen::Index>(lc.candidates.size());
        CHECK(dnx_objective(lc, Eigen::VectorXd::Ones(k)) == 0.0);
        Eigen::RowVectorXd full = s.propagated().row(u) * s.theta();
        CHECK(std::abs(dnx_objective(lc, Eigen::VectorXd::Zero(k)) - full.squaredNorm()) <
              1e-12 * std::max(1.0, full.squaredNorm()));
        // Contributions add up to Z_u - b.
        CHECK((lc.terms.colwise().sum() - (s.logits(u) - s.bias())).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("objective and gradient match dense and finite-difference oracles") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Graph g = oracle::random_graph(15, 0.2, 200 + seed);
        auto s = surrogate(g, gaussian(15, 3, 300 + seed), 400 + seed);
        for (NodeId u = 0; u < 15; u += 4) {
            auto lc = local_contributions(s, u);
            const auto k = static_cast<Eigen::Index>(lc.candidates.size());
            Eigen::VectorXd e = (gaussian(k, 1, 500 + seed + u).array().abs()).matrix();
            Eigen::VectorXd grad;
            const double f = dnx_objective(lc, e, &grad);
            Explanation shell;
            shell.candidates = lc.candidates;
            CHECK(std::abs(f - dense_objective(s, g, u, scatter(shell, e, 15))) < 1e-10 * std::max(1.0, f));
            CHECK(std::abs(f - dnx_objective(s, u, e)) < 1e-12 * std::max(1.0, f));
            const double h = 1e-6;
            for (Eigen::Index j = 0; j < k; ++j) {
                Eigen::VectorXd a = e, b = e;
                a(j) += h;
                b(j) -= h;
                const double fd = (dnx_objective(lc, a) - dnx_objective(lc, b)) / (2 * h);
                CHECK(std::abs(fd - grad(j)) <= 1e-6 * std::max(1e-2, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("isolated node gets the whole simplex") {
    Graph g(3, {{1, 2}});
    auto s = surrogate(g, gaussian(3, 2, 1), 2);
    auto e = dnx_explain(s, 0);
    REQUIRE(e.candidates == std::vector<NodeId>{0});
    CHECK(e.scores(0) == 1.0);
}

TEST_CASE("DnX returns simplex scores no worse than uniform") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = random_surrogate(30, 10 + seed);
        for (NodeId u = 0; u < 30; u += 7) {
            auto e = dnx_explain(s, u);
            const auto k = static_cast<Eigen::Index>(e.candidates.size());
            CHECK((e.scores.array() >= 0.0).all());
            CHECK(std::abs(e.scores.sum() - 1.0) < 1e-9);
            CHECK(e.objective == doctest::Approx(dnx_objective(s, u, e.scores)).epsilon(1e-12));
            CHECK(e.objective <= dnx_objective(s, u, Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k))));
            CHECK(e.iterations <= 500);
        }
    }
}

TEST_CASE("DnX agrees with a simplex grid search on small neighborhoods") {
    // Path graphs with depth 1 keep k <= 3 candidates.
    Graph g(4, {{0, 1}, {1, 2}, {2, 3}});
    DnxConfig long_run;
    long_run.max_iterations = 200000;
    long_run.tolerance = 1e-13;
    long_run.window = 200;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        FeatureMatrix x = gaussian(4, 3, 600 + seed);
        auto s = surrogate(g, x, 700 + seed, 1);
        for (NodeId u : {1, 2}) {
            auto e = dnx_explain(s, u, long_run);
            REQUIRE(e.candidates.size() == 3);
            double best = std::numeric_limits<double>::infinity();
            Eigen::Vector3d arg;
            for (int a = 0; a <= 100; ++a)
                for (int b = 0; a + b <= 100; ++b) {
                    Eigen::Vector3d v(a / 100.0, b / 100.0, (100 - a - b) / 100.0);
                    const double f = dnx_objective(s, u, v);
                    if (f < best) {
                        best = f;
                        arg = v;
                    }
                }
            Eigen::Index grid_top = 0, dnx_top = 0;
            arg.maxCoeff(&grid_top);
            e.scores.maxCoeff(&dnx_top);
            CHECK(dnx_top == grid_top);
            CHECK(e.objective <= best + 1e-9);
        }
    }
}

TEST_CASE("DnX from random initializations converges to one objective") {
    DnxConfig cfg{.max_iterations = 200000, .tolerance = 1e-13, .window = 200, .random_init = true};
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = random_surrogate(12, 900 + seed);
        for (NodeId u = 0; u < 12; u += 3) {
            std::vector<double> fs;
            for (std::uint64_t r = 0; r < 5; ++r) {
                cfg.seed = r;
                fs.push_back(dnx_explain(s, u, cfg).objective);
            }
            worst = std::max(worst, *std::max_element(fs.begin(), fs.end()) - *std::min_element(fs.begin(), fs.end()));
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("FastDnX sum identity and determinism") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = random_surrogate(40, 20 + seed);
        for (NodeId u = 0; u < 40; ++u) {
            auto e = fastdnx_explain(s, u);
            const double target = (s.logits(u) - s.bias()).squaredNorm();
            CHECK(std::abs(e.scores.sum() - target) <= 1e-9 * std::max(1.0, target));
            CHECK(fastdnx_explain(s, u).scores == e.scores);
            CHECK(e.candidates == l_hop_neighborhood(oracle::random_graph(40, 2.5 / 40.0, 20 + seed), u, 3));
        }
    }
}

TEST_CASE("zero-feature candidate scores zero") {
    Graph g(4, {{0, 1}, {1, 2}, {2, 3}});
    FeatureMatrix x = gaussian(4, 3, 1);
    x.row(2).setZero();
    auto s = surrogate(g, x, 2);
    auto e = fastdnx_explain(s, 1);
    CHECK(e.score_of(2) == 0.0);
}

TEST_CASE("baseline is the propagation row") {
    auto two = normalized_adjacency_power(Graph(2, {{0, 1}}), 3);
    auto e = adjacency_baseline_explain(two, 0);
    CHECK(e.scores(0) == e.scores(1));

    Graph g = oracle::random_graph(25, 0.12, 3);
    auto a = normalized_adjacency_power(g, 3);
    Eigen::MatrixXd ref = oracle::dense_power(g, 3);
    for (NodeId u = 0; u < 25; ++u) {
        auto b = adjacency_baseline_explain(a, u);
        CHECK(b.candidates == a.support(u));
        for (std::size_t j = 0; j < b.candidates.size(); ++j)
            CHECK(std::abs(b.scores(static_cast<Eigen::Index>(j)) - ref(u, b.candidates[j])) < 1e-12);
    }
    CHECK_THROWS_AS(adjacency_baseline_explain(a, 25), UsageError);
}

TEST_CASE("scores ignore everything outside the neighborhood") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const std::size_t n = 30;
        Graph g = oracle::random_graph(n, 2.0 / static_cast<double>(n), 40 + seed);
        FeatureMatrix x = gaussian(n, 3, 50 + seed);
        auto s = surrogate(g, x, 60 + seed);
        const NodeId u = 0;
        auto hood = l_hop_neighborhood(g, u, 3);
        std::vector<NodeId> outside;
        for (NodeId v = 0; v < static_cast<NodeId>(n); ++v)
            if (!std::binary_search(hood.begin(), hood.end(), v)) outside.push_back(v);
        if (outside.empty()) continue;

        // One extra node hanging off an outside node, plus fresh outside features.
        auto edges = g.edges();
        edges.emplace_back(outside.front(), static_cast<NodeId>(n));
        if (outside.size() > 1) edges.emplace_back(outside[0], outside[1]);
        Graph bigger(n + 1, edges);
        FeatureMatrix y(n + 1, 3);
        y.topRows(n) = x;
        y.row(n) = gaussian(1, 3, 70 + seed);
        for (NodeId v : outside) y.row(v) = gaussian(1, 3, 80 + v);
        auto s2 = surrogate(bigger, y, 60 + seed);

        auto f1 = fastdnx_explain(s, u), f2 = fastdnx_explain(s2, u);
        CHECK(f1.candidates == f2.candidates);
        CHECK((f1.scores - f2.scores).cwiseAbs().maxCoeff() < 1e-12);
        auto d1 = dnx_explain(s, u), d2 = dnx_explain(s2, u);
        CHECK((d1.scores - d2.scores).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("planted dominant candidate ranks first for every method") {
    Graph g = oracle::random_graph(25, 0.12, 5);
    auto adj = std::make_shared<const NormalizedAdjacency>(normalized_adjacency_power(g, 3));
    for (NodeId u = 0; u < 25; u += 6) {
        auto row = adj->row(u);
        auto top = *std::max_element(row.begin(), row.end(),
                                     [](auto a, auto b) { return a.second < b.second; });
        FeatureMatrix x = gaussian(25, 3, 90 + u, 0.01);
        x.row(top.first) = Eigen::RowVector3d(50.0, 0.0, 0.0);
        SgcSurrogate s(adj, x, Eigen::MatrixXd::Identity(3, 3), Eigen::RowVectorXd::Zero(3));
        CHECK(fastdnx_explain(s, u).top_k(1).front() == top.first);
        CHECK(dnx_explain(s, u).top_k(1).front() == top.first);
        CHECK(adjacency_baseline_explain(*adj, u).top_k(1).front() == top.first);
    }
}

TEST_CASE("parallel explanation preserves order") {
    auto s = random_surrogate(50, 7);
    std::vector<NodeId> nodes(50);
    std::iota(nodes.begin(), nodes.end(), 0);
    std::reverse(nodes.begin(), nodes.end());
    for (auto m : {Method::dnx, Method::fastdnx, Method::adjbaseline}) {
        auto one = explain_nodes(s, nodes, m, {}, 1);
        auto four = explain_nodes(s, nodes, m, {}, 4);
        REQUIRE(one.size() == 50);
        for (std::size_t i = 0; i < 50; ++i) {
            CHECK(one[i].target == nodes[i]);
            CHECK(four[i].target == nodes[i]);
            CHECK(one[i].scores == four[i].scores);
        }
    }
}

TEST_CASE("edge and node score conversion") {
    Graph tri(3, {{0, 1}, {0, 2}, {1, 2}});
    Explanation e;
    e.candidates = {0, 1, 2};
    e.scores = Eigen::Vector3d(1.0, 2.0, 3.0);
    auto edge = node_scores_to_edge_scores(e, tri);
    CHECK(edge == std::vector<double>{3.0, 4.0, 5.0});
    auto back = edge_scores_to_node_scores(edge, tri);
    CHECK(back == std::vector<double>{3.5, 4.0, 4.5});

    e.scores = Eigen::Vector3d::Constant(0.25);
    for (double v : node_scores_to_edge_scores(e, tri)) CHECK(v == 0.5);

    Graph star(4, {{0, 1}, {0, 2}, {0, 3}});
    std::vector<double> star_edges{1.0, 2.0, 3.0};
    auto star_nodes = edge_scores_to_node_scores(star_edges, star);
    CHECK(star_nodes[0] == 2.0);
    CHECK(star_nodes[2] == 2.0);

    // Endpoints outside the candidates count as zero; isolated nodes score zero.
    Graph g(5, {{0, 1}, {1, 4}});
    Explanation partial;
    partial.candidates = {0, 1};
    partial.scores = Eigen::Vector2d(1.0, 2.0);
    CHECK(node_scores_to_edge_scores(partial, g) == std::vector<double>{3.0, 2.0});
    CHECK(edge_scores_to_node_scores(std::vector<double>{1.0, 1.0}, g)[3] == 0.0);
}

TEST_CASE("quadratic form is symmetric, PSD and exact") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = random_surrogate(25, 30 + seed);
        for (NodeId u = 0; u < 25; u += 5) {
            auto q = build_quadratic_form(s, u);
            auto r = verify_convexity(q, s, u, 16, seed);
            CHECK(r.ok);
            CHECK(r.symmetry_error <= 1e-10);
            CHECK(r.min_eigenvalue >= -1e-8);
            CHECK(r.max_value_gap <= 1e-8);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.q);
            CHECK(es.eigenvalues().minCoeff() >= -1e-8);
        }
    }
}

TEST_CASE("single-candidate quadratic form") {
    Graph g(2, {});
    FeatureMatrix x = gaussian(2, 3, 4);
    auto s = surrogate(g, x, 5, 1);
    auto q = build_quadratic_form(s, 0);
    REQUIRE(q.q.rows() == 1);
    Eigen::RowVectorXd v = x.row(0) * s.theta();
    CHECK(q.q(0, 0) == doctest::Approx(2.0 * v.squaredNorm()).epsilon(1e-14));
    for (double e : {0.0, 0.3, 1.0, 2.5}) {
        Eigen::VectorXd ev = Eigen::VectorXd::Constant(1, e);
        CHECK(q.evaluate(ev) == doctest::Approx((e - 1.0) * (e - 1.0) * v.squaredNorm()).epsilon(1e-12));
    }
}

TEST_CASE("explanation files round trip") {
    auto dir = testutil::scratch("explain");
    auto s = random_surrogate(20, 3);
    std::vector<NodeId> nodes{0, 4, 9};
    auto es = explain_nodes(s, nodes, Method::dnx);
    save_explanations(es, dir / "e.tsv");
    auto back = load_explanations(dir / "e.tsv");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].target == es[i].target);
        CHECK(back[i].method == Method::dnx);
        CHECK(back[i].candidates == es[i].candidates);
        CHECK(back[i].scores == es[i].scores);
        CHECK(back[i].objective == es[i].objective);
        CHECK(back[i].iterations == es[i].iterations);
    }
    save_explanations(es, dir / "a.tsv", false);
    save_explanations(load_explanations(dir / "a.tsv"), dir / "b.tsv", false);
    CHECK(read_file(dir / "a.tsv") == read_file(dir / "b.tsv"));
    std::filesystem::remove_all(dir);
}

}
