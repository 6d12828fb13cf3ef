#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

#include "dnx/dataset.hpp"
#include "dnx/error.hpp"
#include "dnx/io.hpp"
#include "dnx/metrics.hpp"
#include "dnx/rng.hpp"

using namespace dnx;

namespace {

const std::map<Benchmark, std::size_t> kMotifSize{
    {Benchmark::ba_house, 5},   {Benchmark::ba_community, 5}, {Benchmark::ba_grids, 9},
    {Benchmark::tree_cycles, 6}, {Benchmark::tree_grids, 9},  {Benchmark::ba_bottle, 5}};

const Dataset& cached(Benchmark b) {
    static std::map<Benchmark, Dataset> cache;
    auto it = cache.find(b);
    if (it == cache.end()) it = cache.emplace(b, generate({b, 7})).first;
    return it->second;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("benchmark names round trip") {
    for (auto b : all_benchmarks()) CHECK(parse_benchmark(benchmark_name(b)) == b);
    CHECK_THROWS_AS(parse_benchmark("ba-houses"), UsageError);
}

TEST_CASE("node and label counts match the reference statistics") {
    const std::map<Benchmark, std::pair<std::size_t, int>> table{
        {Benchmark::ba_house, {700, 4}},    {Benchmark::ba_community, {1400, 8}},
        {Benchmark::ba_grids, {1020, 2}},   {Benchmark::tree_cycles, {871, 2}},
        {Benchmark::tree_grids, {1231, 2}}, {Benchmark::ba_bottle, {700, 4}}};
    for (auto b : all_benchmarks()) {
        CAPTURE(benchmark_name(b));
        const auto& d = cached(b);
        CHECK(d.num_nodes() == table.at(b).first);
        CHECK(d.num_classes == table.at(b).second);
        std::set<int> seen(d.labels.begin(), d.labels.end());
        CHECK(static_cast<int>(seen.size()) == d.num_classes);
    }
}

TEST_CASE("tree-cycles is a 511-node tree with 60 six-cycles") {
    const auto& d = cached(Benchmark::tree_cycles);
    std::set<int> motifs;
    int base = 0;
    for (int m : d.motif_of) (m < 0 ? (void)++base : (void)motifs.insert(m));
    CHECK(base == 511);
    CHECK(motifs.size() == 60);
    CHECK(base + 6 * static_cast<int>(motifs.size()) == 871);
}

TEST_CASE("ground truth is exactly the motif of each motif node") {
    for (auto b : all_benchmarks()) {
        CAPTURE(benchmark_name(b));
        const auto& d = cached(b);
        std::map<int, std::vector<NodeId>> by_motif;
        for (std::size_t v = 0; v < d.num_nodes(); ++v)
            if (d.motif_of[v] >= 0) by_motif[d.motif_of[v]].push_back(static_cast<NodeId>(v));
        for (std::size_t v = 0; v < d.num_nodes(); ++v) {
            const bool motif = d.motif_of[v] >= 0;
            CHECK(d.is_motif_node(static_cast<NodeId>(v)) == motif);
            if (!motif) {
                CHECK(std::count(d.base_classes.begin(), d.base_classes.end(), d.labels[v]) == 1);
                continue;
            }
            const auto& truth = d.ground_truth.at(static_cast<NodeId>(v));
            CHECK(truth.size() == kMotifSize.at(b));
            CHECK(truth == by_motif.at(d.motif_of[v]));
            CHECK(std::count(d.base_classes.begin(), d.base_classes.end(), d.labels[v]) == 0);
        }
    }
}

TEST_CASE("motifs are attached to the base and node-disjoint") {
    for (auto b : all_benchmarks()) {
        CAPTURE(benchmark_name(b));
        const auto& d = cached(b);
        std::map<int, int> attachments;
        for (auto [x, y] : d.graph.edges()) {
            const int mx = d.motif_of[x], my = d.motif_of[y];
            if (mx >= 0 && my < 0) ++attachments[mx];
            if (my >= 0 && mx < 0) ++attachments[my];
        }
        std::set<int> motifs;
        for (int m : d.motif_of)
            if (m >= 0) motifs.insert(m);
        for (int m : motifs) CHECK(attachments[m] >= 1);
    }
}

TEST_CASE("generation is deterministic and seed dependent") {
    for (auto b : all_benchmarks()) {
        CAPTURE(benchmark_name(b));
        Dataset again = generate({b, 7});
        CHECK(again == cached(b));
        Dataset other = generate({b, 8});
        CHECK_FALSE(other.graph == again.graph);
    }
}

TEST_CASE("splits are disjoint, cover and follow 80/10/10") {
    for (auto b : all_benchmarks()) {
        const auto& d = cached(b);
        const double n = static_cast<double>(d.num_nodes());
        CHECK(std::abs(static_cast<double>(d.splits.nodes(Split::train).size()) - 0.8 * n) <= 1.0);
        CHECK(std::abs(static_cast<double>(d.splits.nodes(Split::val).size()) - 0.1 * n) <= 1.0);
        CHECK(d.splits.nodes(Split::train).size() + d.splits.nodes(Split::val).size() +
                  d.splits.nodes(Split::test).size() ==
              d.num_nodes());
        CHECK_NOTHROW(d.validate());
    }
}

TEST_CASE("features are one-hot degrees") {
    const auto& d = cached(Benchmark::ba_house);
    const int cap = static_cast<int>(d.features.cols()) - 1;
    for (std::size_t v = 0; v < d.num_nodes(); ++v) {
        const auto row = d.features.row(static_cast<Eigen::Index>(v));
        CHECK(row.sum() == 1.0);
        CHECK(row(std::min(d.graph.degree(static_cast<NodeId>(v)), cap)) == 1.0);
    }
    Graph path(3, {{0, 1}, {1, 2}});
    FeatureMatrix x = one_hot_degree(path, 1);
    CHECK(x(0, 1) == 1.0);
    CHECK(x(1, 1) == 1.0);
}

TEST_CASE("degree threshold separates motif from base on BA graphs") {
    const double house = degree_separation_report(cached(Benchmark::ba_house)).accuracy;
    CHECK(house > 0.90);
    CHECK(degree_separation_report(cached(Benchmark::ba_grids)).accuracy > 0.90);
    CHECK(degree_separation_report(cached(Benchmark::ba_bottle)).accuracy > 0.90);
    CHECK(degree_separation_report(cached(Benchmark::tree_cycles)).accuracy < house);
    CHECK(degree_separation_report(cached(Benchmark::tree_grids)).accuracy < house);
}

TEST_CASE("save then load is the identity") {
    auto dir = testutil::scratch("dataset");
    for (auto b : {Benchmark::ba_house, Benchmark::ba_community, Benchmark::tree_grids}) {
        auto path = dir / (std::string(benchmark_name(b)) + ".json");
        save_dataset(cached(b), path);
        CHECK(load_dataset(path) == cached(b));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("loader validation") {
    auto dir = testutil::scratch("dataset-bad");
    auto write = [&](const std::string& name, const std::string& body) {
        auto p = dir / name;
        write_file(p, body);
        return p;
    };
    const std::string head = R"({"format": "dnx-dataset", "version": 1, "n": 3, )";
    const std::string tail =
        R"("features": [[1],[1],[1]], "labels": [0,0,1], "num_classes": 2})";

    auto ok = write("ok.json", head + R"("edges": [[0,1],[1,2]], )" + tail);
    Dataset d = load_dataset(ok);
    CHECK(d.num_nodes() == 3);
    CHECK_FALSE(d.has_ground_truth());
    CHECK(d.splits.empty());

    CHECK_THROWS_AS(load_dataset(write("range.json", head + R"("edges": [[0,3]], )" + tail)), DataError);
    CHECK_THROWS_AS(load_dataset(write("order.json", head + R"("edges": [[1,0]], )" + tail)), DataError);
    CHECK_THROWS_AS(load_dataset(write("trunc.json", head)), DataError);
    CHECK_THROWS_AS(load_dataset(write("rows.json", head + R"("edges": [], "features": [[1]], "labels": [0,0,1], "num_classes": 2})")),
                    DataError);
    CHECK_THROWS_AS(load_dataset(dir / "missing.json"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("all nodes of equal degree give the class prior") {
    Dataset d;
    std::vector<Edge> ring;
    for (int i = 0; i < 10; ++i) ring.emplace_back(i, (i + 1) % 10);
    d.graph = Graph(10, ring);
    d.features = one_hot_degree(d.graph, 2);
    d.labels.assign(10, 0);
    d.num_classes = 2;
    d.base_classes = {0};
    d.motif_of.assign(10, -1);
    for (int v = 0; v < 3; ++v) {
        d.motif_of[v] = 0;
        d.labels[v] = 1;
        d.ground_truth[v] = {0, 1, 2};
    }
    CHECK(degree_separation_report(d).accuracy == doctest::Approx(0.7));
}

}

TEST_SUITE("rng") {

TEST_CASE("named streams are reproducible and independent") {
    auto a = make_stream(7, "gen/base");
    auto b = make_stream(7, "gen/base");
    auto c = make_stream(7, "gen/splits");
    auto d = make_stream(7, "gen/base", 1);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(x != d());
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("format_double keeps 17 digits") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

}
