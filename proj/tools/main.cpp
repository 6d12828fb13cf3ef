#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dnx/bounds.hpp"
#include "dnx/dataset.hpp"
#include "dnx/distill.hpp"
#include "dnx/error.hpp"
#include "dnx/explain.hpp"
#include "dnx/io.hpp"
#include "dnx/metrics.hpp"
#include "dnx/model.hpp"
#include "dnx/parallel.hpp"
#include "dnx/rng.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using namespace dnx;
using cli::JsonObject;

namespace {

struct Options {
    std::string dataset;
    std::string data;
    std::optional<std::uint64_t> seed;
    std::string model;
    std::string predictions;
    std::string surrogate;
    std::string explanations;
    std::string distill_report;
    std::string method = "fastdnx";
    std::vector<std::string> methods{"fastdnx", "dnx", "adjbaseline"};
    std::string nodes = "motif";
    std::size_t limit = 0;
    int depth = 3;
    int num_perturbations = 10;
    double variance = 0.01;
    double xi = -1.0;
    int trials = 0;
    std::size_t sample = 0;
    unsigned threads = 1;
    bool no_timing = false;
    bool emit_histograms = false;
    std::string out_dir;
    std::string output;
    DnxConfig dnx;
    TrainConfig train;
    DistillConfig distill;
};

fs::path out_dir(const Options& o) {
    if (!o.out_dir.empty()) return o.out_dir;
    if (const char* env = std::getenv("DNX_OUTPUT_DIR"); env && *env) return env;
    return ".";
}

fs::path output_path(const Options& o, const std::string& fallback) {
    return o.output.empty() ? out_dir(o) / fallback : fs::path(o.output);
}

std::uint64_t seed_of(const Options& o) { return o.seed.value_or(0); }

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

Dataset load_data(const Options& o) {
    require(o.data, "--data");
    return load_dataset(o.data);
}

JsonObject input_ref(const fs::path& p) {
    JsonObject j;
    j.add("path", p.string()).add("hash", content_hash(p));
    return j;
}

std::vector<NodeId> select_nodes(const Dataset& d, const Options& o) {
    std::vector<NodeId> nodes;
    if (o.nodes == "motif") {
        nodes = d.motif_nodes();
    } else if (o.nodes == "test") {
        if (d.splits.empty()) throw DataError("dataset has no splits");
        nodes = d.splits.nodes(Split::test);
    } else if (o.nodes == "all") {
        nodes.resize(d.num_nodes());
        std::iota(nodes.begin(), nodes.end(), 0);
    } else {
        std::istringstream in(o.nodes);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            std::size_t used = 0;
            long v = -1;
            try {
                v = std::stol(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != tok.size() || v < 0 ||
                static_cast<std::size_t>(v) >= d.num_nodes())
                throw UsageError("--nodes expects motif, test, all or a list of node ids; got '" +
                                 o.nodes + "'");
            nodes.push_back(static_cast<NodeId>(v));
        }
    }
    if (nodes.empty()) throw DataError("no nodes selected for '" + o.nodes + "'");
    if (o.limit && nodes.size() > o.limit) nodes.resize(o.limit);
    return nodes;
}

PredictionMatrix black_box_predictions(const Options& o, const Dataset& d) {
    if (!o.predictions.empty()) return load_predictions(o.predictions, d.num_nodes());
    require(o.model, "--model or --predictions");
    return load_gcn(o.model).predict(d.graph, d.features);
}

JsonObject matrix_rows(const Eigen::MatrixXi& m) {
    JsonObject j;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::string row;
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row += (c ? " " : "") + std::to_string(m(r, c));
        j.add(std::to_string(r), row);
    }
    return j;
}

int cmd_gen(const Options& o) {
    if (!o.seed) throw UsageError("gen requires --seed");
    require(o.dataset, "--dataset");
    const auto b = parse_benchmark(o.dataset);
    const auto d = generate({b, *o.seed});
    const auto path = output_path(o, std::string(benchmark_name(b)) + ".json");
    save_dataset(d, path);
    const auto ref = reference_stats(b);
    std::cout << "wrote " << path.string() << ": " << d.num_nodes() << " nodes, "
              << d.graph.num_edges() << " edges (reference " << ref.reference_edges / 2 << "), "
              << d.num_classes << " classes\n";
    return 0;
}

int cmd_train(const Options& o) {
    const auto d = load_data(o);
    TrainConfig cfg = o.train;
    cfg.seed = seed_of(o);
    const auto result = train_gcn(d, cfg);
    const auto model_path = output_path(o, "gcn.json");
    save_gcn(result.model, model_path);
    save_predictions(result.model.predict(d.graph, d.features), out_dir(o) / "gcn_predictions.csv");
    const auto& r = result.report;
    JsonObject report;
    report.add("dataset", input_ref(o.data))
        .add("seed", static_cast<std::size_t>(cfg.seed))
        .add("epochs_run", r.epochs_run)
        .add("best_epoch", r.best_epoch)
        .add("best_val_accuracy", r.best_val_accuracy)
        .add("train_accuracy", r.train_accuracy)
        .add("test_accuracy", r.test_accuracy)
        .add("model", input_ref(model_path));
    write_file(out_dir(o) / "train_report.json", report.str() + "\n");
    std::cout << "gcn: train " << r.train_accuracy << " val " << r.best_val_accuracy << " test "
              << r.test_accuracy << " (" << r.epochs_run << " epochs)\n";
    return 0;
}

int cmd_distill(const Options& o) {
    const auto d = load_data(o);
    const auto targets = black_box_predictions(o, d);
    auto adj = std::make_shared<const NormalizedAdjacency>(normalized_adjacency_power(d.graph, o.depth));
    const auto result = distill(targets, adj, d.features, o.distill);
    const auto path = output_path(o, "surrogate.json");
    save_surrogate(result.surrogate, path);
    const auto& r = result.report;
    const auto conf = distillation_confusion(surrogate_predict(result.surrogate), targets, d.base_classes);
    JsonObject report;
    report.add("dataset", input_ref(o.data))
        .add("black_box", input_ref(o.predictions.empty() ? o.model : o.predictions))
        .add("depth", o.depth)
        .add("epochs", r.epochs)
        .add("kl", r.kl)
        .add("agreement", r.agreement)
        .add("binary_accuracy", conf.binary_accuracy)
        .add("alpha_hat", r.alpha_hat)
        .add("seconds", o.no_timing ? 0.0 : r.seconds)
        .add("confusion", matrix_rows(r.confusion))
        .add("surrogate", input_ref(path));
    write_file(out_dir(o) / "distill_report.json", report.str() + "\n");
    std::cout << "distill: agreement " << r.agreement << " kl " << r.kl << " in " << r.seconds
              << " s\n";
    return 0;
}

std::vector<Explanation> run_explainer(const Options& o, const SgcSurrogate& s, Method m,
                                       const std::vector<NodeId>& nodes) {
    DnxConfig cfg = o.dnx;
    cfg.seed = seed_of(o);
    return explain_nodes(s, nodes, m, cfg, o.threads);
}

int cmd_explain(const Options& o) {
    const auto d = load_data(o);
    require(o.surrogate, "--surrogate");
    const Method m = parse_method(o.method);
    const auto s = load_surrogate(o.surrogate, d.graph, d.features);
    const auto nodes = select_nodes(d, o);
    const auto es = run_explainer(o, s, m, nodes);
    const auto path = output_path(o, "explanations_" + std::string(method_name(m)) + ".tsv");
    save_explanations(es, path, !o.no_timing);
    std::cout << "explained " << es.size() << " nodes with " << method_name(m) << " -> "
              << path.string() << "\n";
    return 0;
}

int cmd_eval(const Options& o) {
    const auto d = load_data(o);
    require(o.explanations, "--explanations");
    std::optional<GcnModel> model;
    if (!o.model.empty()) model = load_gcn(o.model);
    std::vector<MethodMetrics> rows;
    std::istringstream paths(o.explanations);
    std::string p;
    while (std::getline(paths, p, ',')) {
        const auto es = load_explanations(p);
        rows.push_back(evaluate_explanations(d, es, model ? &*model : nullptr));
        if (o.no_timing) rows.back().mean_millis = 0.0;
    }
    std::ostringstream table;
    write_metrics_table(rows, table);
    const auto path = output_path(o, "metrics.tsv");
    write_file(path, "# dataset " + content_hash(o.data) + "\n" + table.str());
    std::cout << table.str();
    if (o.emit_histograms) {
        const auto sep = degree_separation_report(d);
        write_degree_histograms(sep, out_dir(o) / "degree_histograms.csv");
        std::cout << "degree threshold accuracy " << sep.accuracy << "\n";
    }
    return 0;
}

int cmd_verify_bounds(const Options& o) {
    const auto d = load_data(o);
    require(o.surrogate, "--surrogate");
    require(o.explanations, "--explanations");
    const auto s = load_surrogate(o.surrogate, d.graph, d.features);
    auto es = load_explanations(o.explanations);
    if (o.sample && es.size() > o.sample) {
        auto rng = make_stream(seed_of(o), "bounds/sample");
        std::shuffle(es.begin(), es.end(), rng);
        es.resize(o.sample);
        std::sort(es.begin(), es.end(),
                  [](const Explanation& a, const Explanation& b) { return a.target < b.target; });
    }
    std::optional<GcnModel> model;
    if (!o.model.empty()) model = load_gcn(o.model);
    const PerturbationConfig pc{o.num_perturbations, o.variance, seed_of(o)};

    std::vector<BoundReport> det(es.size());
    std::vector<ProbabilisticBoundReport> prob(o.trials > 0 ? es.size() : 0);
    parallel_for(es.size(), o.threads, [&](std::size_t i) {
        det[i] = verify_bounds(s, model ? &*model : nullptr, d.graph, es[i], pc);
        if (o.trials > 0) {
            const double xi = o.xi > 0.0 ? o.xi : 2.0 * (model ? det[i].rhs_phi : det[i].rhs_psi);
            prob[i] = verify_probabilistic_bound(s, model ? &*model : nullptr, d.graph, es[i], pc,
                                                 xi, o.trials);
        }
    });

    std::size_t psi_violations = 0;
    std::size_t phi_violations = 0;
    std::size_t prob_failures = 0;
    std::vector<JsonObject> rows;
    for (std::size_t i = 0; i < es.size(); ++i) {
        const auto& r = det[i];
        psi_violations += !r.holds_psi;
        JsonObject j;
        j.add("node", r.node)
            .add("lhs_psi", r.lhs_psi)
            .add("rhs_psi", r.rhs_psi)
            .add("theta_norm", r.theta_norm)
            .add("feature_norm", r.feature_norm_max)
            .add("delta_norm", r.delta_norm);
        if (model) {
            phi_violations += !r.holds_phi;
            j.add("lhs_phi", r.lhs_phi).add("alpha", r.alpha).add("rhs_phi", r.rhs_phi);
        }
        if (o.trials > 0) {
            const auto& p = prob[i];
            prob_failures += !p.holds;
            j.add("xi", p.xi)
                .add("bound_value", p.bound_value)
                .add("empirical_probability", p.empirical_probability)
                .add("standard_error", p.standard_error);
        }
        rows.push_back(std::move(j));
    }
    JsonObject summary;
    summary.add("nodes", es.size())
        .add("perturbations", pc.num_perturbations)
        .add("variance", pc.variance)
        .add("surrogate_violations", psi_violations);
    if (model) summary.add("black_box_violations", phi_violations);
    if (o.trials > 0) summary.add("trials", o.trials).add("probabilistic_failures", prob_failures);
    JsonObject report;
    report.add("dataset", input_ref(o.data))
        .add("surrogate", input_ref(o.surrogate))
        .add("explanations", input_ref(o.explanations));
    if (model) report.add("model", input_ref(o.model));
    report.add("summary", summary).add("nodes", rows);
    const auto path = output_path(o, "bounds_report.json");
    write_file(path, report.str() + "\n");
    std::cout << summary.str() << "\n";
    return 0;
}

int cmd_bench(const Options& o) {
    const auto d = load_data(o);
    require(o.surrogate, "--surrogate");
    const auto s = load_surrogate(o.surrogate, d.graph, d.features);
    double distill_seconds = 0.0;
    if (!o.distill_report.empty()) {
        try {
            distill_seconds = nlohmann::json::parse(read_file(o.distill_report)).at("seconds").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad distillation report " + o.distill_report + ": " + e.what());
        }
    }
    const auto nodes = select_nodes(d, o);
    std::ostringstream table;
    table << "dataset\tmethod\tnodes\textract_ms_per_node\tamortized_ms_per_node\n";
    for (const auto& name : o.methods) {
        const Method m = parse_method(name);
        Options single = o;
        single.threads = 1;
        const auto es = run_explainer(single, s, m, nodes);
        double total = 0.0;
        for (const auto& e : es) total += e.millis;
        const double per_node = total / static_cast<double>(es.size());
        const double charged = m == Method::adjbaseline ? 0.0 : distill_seconds;
        table << d.name << '\t' << name << '\t' << es.size() << '\t' << format_double(per_node) << '\t'
              << format_double(amortized_millis(per_node, charged, es.size())) << '\n';
    }
    write_file(output_path(o, "bench.tsv"), table.str());
    std::cout << table.str();
    return 0;
}

int cmd_pipeline(Options o) {
    if (!o.seed) throw UsageError("pipeline requires --seed");
    require(o.dataset, "--dataset");
    const fs::path dir = out_dir(o);
    o.output.clear();
    o.data = (dir / (std::string(benchmark_name(parse_benchmark(o.dataset))) + ".json")).string();
    cmd_gen(o);
    cmd_train(o);
    o.model = (dir / "gcn.json").string();
    cmd_distill(o);
    o.surrogate = (dir / "surrogate.json").string();
    std::string files;
    for (const auto& name : o.methods) {
        o.method = name;
        cmd_explain(o);
        files += (files.empty() ? "" : ",") + (dir / ("explanations_" + name + ".tsv")).string();
    }
    o.explanations = files;
    return cmd_eval(o);
}

void add_common(CLI::App* c, Options& o) {
    c->add_option("--out-dir", o.out_dir, "Output directory (default $DNX_OUTPUT_DIR or .)");
    c->add_option("-o,--output", o.output, "Primary output file");
    c->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--no-timing", o.no_timing, "Write zero timings for byte-stable output");
}

void add_nodes(CLI::App* c, Options& o) {
    c->add_option("--nodes", o.nodes, "motif, test, all or comma-separated node ids");
    c->add_option("--limit", o.limit, "Keep at most this many nodes");
}

void add_dnx(CLI::App* c, Options& o) {
    c->add_option("--dnx-lr", o.dnx.learning_rate, "DnX learning rate");
    c->add_option("--dnx-iterations", o.dnx.max_iterations, "DnX iteration cap");
    c->add_flag("--dnx-random-init", o.dnx.random_init, "Random DnX initialization");
}

void add_train(CLI::App* c, Options& o) {
    c->add_option("--epochs", o.train.max_epochs, "GCN epoch cap");
    c->add_option("--lr", o.train.learning_rate, "GCN learning rate");
    c->add_option("--patience", o.train.patience, "Early-stopping patience");
}

int run(int argc, char** argv) {
    Options o;
    CLI::App app{"Distill-and-explain pipeline for GNN node predictions"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    auto* gen = app.add_subcommand("gen", "Generate a synthetic benchmark");
    gen->add_option("--dataset", o.dataset, "Benchmark name")->required();
    gen->add_option("--seed", o.seed, "Random seed")->required();
    add_common(gen, o);

    auto* train = app.add_subcommand("train", "Train the GCN black box");
    train->add_option("--data", o.data, "Dataset file")->required();
    train->add_option("--seed", o.seed, "Random seed");
    add_train(train, o);
    add_common(train, o);

    auto* dist = app.add_subcommand("distill", "Fit the SGC surrogate to black-box predictions");
    dist->add_option("--data", o.data, "Dataset file")->required();
    dist->add_option("--model", o.model, "GCN checkpoint");
    dist->add_option("--predictions", o.predictions, "External prediction CSV");
    dist->add_option("--depth", o.depth, "Propagation depth L")->check(CLI::PositiveNumber);
    dist->add_option("--max-epochs", o.distill.max_epochs, "Epoch cap");
    add_common(dist, o);

    auto* expl = app.add_subcommand("explain", "Explain node predictions");
    expl->add_option("--data", o.data, "Dataset file")->required();
    expl->add_option("--surrogate", o.surrogate, "Surrogate checkpoint")->required();
    expl->add_option("--method", o.method, "dnx, fastdnx or adjbaseline");
    expl->add_option("--seed", o.seed, "Random seed");
    add_nodes(expl, o);
    add_dnx(expl, o);
    add_common(expl, o);

    auto* eval = app.add_subcommand("eval", "Score explanations against ground truth");
    eval->add_option("--data", o.data, "Dataset file")->required();
    eval->add_option("--explanations", o.explanations, "Explanation files, comma-separated")
        ->required();
    eval->add_option("--model", o.model, "GCN checkpoint for fidelity");
    eval->add_flag("--emit-histograms", o.emit_histograms, "Write degree histograms");
    add_common(eval, o);

    auto* bounds = app.add_subcommand("verify-bounds", "Check faithfulness bounds");
    bounds->add_option("--data", o.data, "Dataset file")->required();
    bounds->add_option("--surrogate", o.surrogate, "Surrogate checkpoint")->required();
    bounds->add_option("--explanations", o.explanations, "Explanation file")->required();
    bounds->add_option("--model", o.model, "GCN checkpoint");
    bounds->add_option("--seed", o.seed, "Random seed");
    bounds->add_option("-K,--perturbations", o.num_perturbations, "Perturbations per node");
    bounds->add_option("--variance", o.variance, "Noise variance");
    bounds->add_option("--sample", o.sample, "Random subset size");
    bounds->add_option("--trials", o.trials, "Monte-Carlo trials for the probability bound");
    bounds->add_option("--xi", o.xi, "Threshold for the probability bound");
    add_common(bounds, o);

    auto* bench = app.add_subcommand("bench", "Per-node explanation timings");
    bench->add_option("--data", o.data, "Dataset file")->required();
    bench->add_option("--surrogate", o.surrogate, "Surrogate checkpoint")->required();
    bench->add_option("--distill-report", o.distill_report, "Distillation report for amortization");
    bench->add_option("--methods", o.methods, "Methods to time")->delimiter(',');
    bench->add_option("--seed", o.seed, "Random seed");
    add_nodes(bench, o);
    add_dnx(bench, o);
    add_common(bench, o);

    auto* pipe = app.add_subcommand("pipeline", "gen, train, distill, explain and eval in one go");
    pipe->add_option("--dataset", o.dataset, "Benchmark name")->required();
    pipe->add_option("--seed", o.seed, "Random seed")->required();
    pipe->add_option("--methods", o.methods, "Explainers to run")->delimiter(',');
    pipe->add_option("--depth", o.depth, "Propagation depth L")->check(CLI::PositiveNumber);
    add_nodes(pipe, o);
    add_dnx(pipe, o);
    add_train(pipe, o);
    add_common(pipe, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }
    for (const auto& m : o.methods) parse_method(m);

    if (gen->parsed()) return cmd_gen(o);
    if (train->parsed()) return cmd_train(o);
    if (dist->parsed()) return cmd_distill(o);
    if (expl->parsed()) return cmd_explain(o);
    if (eval->parsed()) return cmd_eval(o);
    if (bounds->parsed()) return cmd_verify_bounds(o);
    if (bench->parsed()) return cmd_bench(o);
    return cmd_pipeline(o);
}

std::string one_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return msg;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error\tusage\t" << one_line(e.what()) << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "error\tdivergence\t" << one_line(e.what()) << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error\tdata\t" << one_line(e.what()) << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error\tdata\t" << one_line(e.what()) << "\n";
        return 2;
    }
}
