#include "dnx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dnx/error.hpp"
#include "dnx/io.hpp"

namespace dnx {

namespace {

constexpr const char* kDatasetFormat = "dnx-dataset";

template <class T>
void write_int_array(std::ostream& out, const std::vector<T>& v) {
    out << '[';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    out << ']';
}

std::vector<NodeId> mask_to_ids(const std::vector<bool>& mask) {
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) ids.push_back(static_cast<NodeId>(i));
    return ids;
}

}  // namespace

std::vector<NodeId> SplitMasks::nodes(Split s) const {
    switch (s) {
        case Split::train: return mask_to_ids(train);
        case Split::val: return mask_to_ids(val);
        case Split::test: return mask_to_ids(test);
    }
    return {};
}

std::vector<NodeId> Dataset::motif_nodes() const {
    std::vector<NodeId> out;
    out.reserve(ground_truth.size());
    for (const auto& [u, _] : ground_truth) out.push_back(u);
    return out;
}

void Dataset::validate() const {
    const std::size_t n = graph.num_nodes();
    if (static_cast<std::size_t>(features.rows()) != n)
        throw DataError("features have " + std::to_string(features.rows()) + " rows, expected " +
                        std::to_string(n));
    if (n > 0 && features.cols() < 1) throw DataError("features need at least one column");
    if (!features.allFinite()) throw DataError("features contain non-finite values");
    if (labels.size() != n) throw DataError("labels size does not match node count");
    if (num_classes < 1) throw DataError("num_classes must be positive");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw DataError("label out of range: " + std::to_string(y));
    if (!motif_of.empty() && motif_of.size() != n)
        throw DataError("motif_of size does not match node count");
    for (const auto& [u, members] : ground_truth) {
        if (u < 0 || static_cast<std::size_t>(u) >= n)
            throw DataError("ground truth for unknown node " + std::to_string(u));
        if (members.empty()) throw DataError("empty ground truth for node " + std::to_string(u));
        for (NodeId v : members)
            if (v < 0 || static_cast<std::size_t>(v) >= n)
                throw DataError("ground truth member out of range: " + std::to_string(v));
    }
    if (!splits.empty()) {
        if (splits.train.size() != n || splits.val.size() != n || splits.test.size() != n)
            throw DataError("split masks must cover every node");
        for (std::size_t i = 0; i < n; ++i) {
            const int c = splits.train[i] + splits.val[i] + splits.test[i];
            if (c != 1)
                throw DataError("node " + std::to_string(i) + " is in " + std::to_string(c) +
                                " splits");
        }
    }
    for (int b : base_classes)
        if (b < 0 || b >= num_classes) throw DataError("base class out of range");
}

FeatureMatrix one_hot_degree(const Graph& g, int cap) {
    FeatureMatrix x = FeatureMatrix::Zero(static_cast<Eigen::Index>(g.num_nodes()), cap + 1);
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        x(static_cast<Eigen::Index>(i), std::min(g.degree(static_cast<NodeId>(i)), cap)) = 1.0;
    return x;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    d.validate();
    std::ostringstream out;
    out << "{\n";
    out << "  \"format\": \"" << kDatasetFormat << "\",\n";
    out << "  \"version\": 1,\n";
    out << "  \"name\": " << nlohmann::json(d.name).dump() << ",\n";
    out << "  \"n\": " << d.num_nodes() << ",\n";
    out << "  \"num_features\": " << d.features.cols() << ",\n";
    out << "  \"num_classes\": " << d.num_classes << ",\n";
    out << "  \"edges\": [";
    for (std::size_t i = 0; i < d.graph.edges().size(); ++i) {
        const auto& [a, b] = d.graph.edges()[i];
        out << (i ? "," : "") << '[' << a << ',' << b << ']';
    }
    out << "],\n";
    out << "  \"features\": [";
    for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
        out << (i ? ",\n    [" : "\n    [");
        for (Eigen::Index j = 0; j < d.features.cols(); ++j)
            out << (j ? "," : "") << format_double(d.features(i, j));
        out << ']';
    }
    out << "],\n";
    out << "  \"labels\": ";
    write_int_array(out, d.labels);
    out << ",\n  \"base_classes\": ";
    write_int_array(out, d.base_classes);
    if (!d.ground_truth.empty()) {
        out << ",\n  \"ground_truth\": {";
        bool first = true;
        for (const auto& [u, members] : d.ground_truth) {
            out << (first ? "" : ",") << "\n    \"" << u << "\": ";
            write_int_array(out, members);
            first = false;
        }
        out << "\n  }";
    }
    if (!d.motif_of.empty()) {
        out << ",\n  \"motif_of\": ";
        write_int_array(out, d.motif_of);
    }
    if (!d.splits.empty()) {
        out << ",\n  \"splits\": {\"train\": ";
        write_int_array(out, d.splits.nodes(Split::train));
        out << ", \"val\": ";
        write_int_array(out, d.splits.nodes(Split::val));
        out << ", \"test\": ";
        write_int_array(out, d.splits.nodes(Split::test));
        out << '}';
    }
    out << "\n}\n";
    write_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed dataset file " + path.string() + ": " + e.what());
    }
    try {
        if (j.value("format", std::string{}) != kDatasetFormat)
            throw DataError("not a dataset file: " + path.string());
        Dataset d;
        d.name = j.value("name", std::string{});
        const auto n = j.at("n").get<std::size_t>();

        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw DataError("edge entries must be pairs");
            const NodeId a = e[0].get<NodeId>();
            const NodeId b = e[1].get<NodeId>();
            if (a >= b)
                throw DataError("edge [" + std::to_string(a) + "," + std::to_string(b) +
                                "] must be listed once with i < j");
            edges.emplace_back(a, b);
        }
        if (!std::is_sorted(edges.begin(), edges.end()) ||
            std::adjacent_find(edges.begin(), edges.end()) != edges.end())
            throw DataError("edges must be sorted and unique");
        d.graph = Graph(n, std::move(edges));

        const auto& feats = j.at("features");
        if (feats.size() != n) throw DataError("features must have n rows");
        const auto dim = n ? feats[0].size() : j.value("num_features", std::size_t{1});
        if (j.contains("num_features") && j["num_features"].get<std::size_t>() != dim)
            throw DataError("num_features disagrees with feature rows");
        d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < n; ++i) {
            if (feats[i].size() != dim) throw DataError("ragged feature matrix");
            for (std::size_t c = 0; c < dim; ++c)
                d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                    feats[i][c].get<double>();
        }
        d.labels = j.at("labels").get<std::vector<int>>();
        d.num_classes = j.at("num_classes").get<int>();
        d.base_classes = j.value("base_classes", std::vector<int>{});
        if (j.contains("ground_truth")) {
            for (const auto& [key, members] : j["ground_truth"].items()) {
                std::size_t pos = 0;
                const NodeId u = std::stoi(key, &pos);
                if (pos != key.size()) throw DataError("bad ground truth key " + key);
                d.ground_truth[u] = members.get<std::vector<NodeId>>();
            }
        }
        if (j.contains("motif_of")) d.motif_of = j["motif_of"].get<std::vector<int>>();
        if (j.contains("splits")) {
            d.splits.train.assign(n, false);
            d.splits.val.assign(n, false);
            d.splits.test.assign(n, false);
            auto fill = [&](const char* key, std::vector<bool>& mask) {
                for (NodeId u : j["splits"].at(key).get<std::vector<NodeId>>()) {
                    if (u < 0 || static_cast<std::size_t>(u) >= n)
                        throw DataError(std::string("split node out of range in ") + key);
                    mask[u] = true;
                }
            };
            fill("train", d.splits.train);
            fill("val", d.splits.val);
            fill("test", d.splits.test);
        }
        d.validate();
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid dataset file " + path.string() + ": " + e.what());
    } catch (const std::invalid_argument&) {
        throw DataError("invalid ground truth key in " + path.string());
    }
}

}  // namespace dnx
