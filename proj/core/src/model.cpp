#include "dnx/model.hpp"

#include <cmath>
#include <sstream>

#include "dnx/error.hpp"
#include "dnx/io.hpp"

namespace dnx {

int PredictionMatrix::argmax(NodeId u) const {
    Eigen::Index c = 0;
    probs.row(u).maxCoeff(&c);
    return static_cast<int>(c);
}

std::vector<int> PredictionMatrix::argmax() const {
    std::vector<int> out(num_nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(static_cast<NodeId>(i));
    return out;
}

void check_row_stochastic(const Eigen::MatrixXd& probs, double tol) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if ((probs.row(i).array() < 0.0).any())
            throw DataError("negative probability in row " + std::to_string(i));
        if (!probs.row(i).allFinite())
            throw DataError("non-finite probability in row " + std::to_string(i));
        const double s = probs.row(i).sum();
        if (std::abs(s - 1.0) > tol + 1e-12)
            throw DataError("row " + std::to_string(i) + " sums to " + format_double(s));
    }
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
    Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = softmax(logits.row(i));
    return out;
}

PredictionMatrix load_predictions(const std::filesystem::path& path, std::size_t expected_rows) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw DataError("bad number '" + tok + "' in " + path.string());
            }
            if (pos != tok.size()) throw DataError("bad number '" + tok + "' in " + path.string());
            row.push_back(v);
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("empty prediction file " + path.string());
    const std::size_t cols = rows[0].size();
    if (expected_rows && rows.size() != expected_rows)
        throw DataError("prediction file has " + std::to_string(rows.size()) + " rows, expected " +
                        std::to_string(expected_rows));
    PredictionMatrix p;
    p.provenance = "external";
    p.probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw DataError("ragged prediction file " + path.string());
        for (std::size_t c = 0; c < cols; ++c)
            p.probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    check_row_stochastic(p.probs, 1e-6);
    for (Eigen::Index i = 0; i < p.probs.rows(); ++i) p.probs.row(i) /= p.probs.row(i).sum();
    return p;
}

void save_predictions(const PredictionMatrix& p, const std::filesystem::path& path) {
    std::string out;
    for (Eigen::Index i = 0; i < p.probs.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.probs.cols(); ++c) {
            if (c) out += ',';
            out += format_double(p.probs(i, c));
        }
        out += '\n';
    }
    write_file(path, out);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                const std::vector<NodeId>& nodes) {
    if (nodes.empty()) return 0.0;
    std::size_t hit = 0;
    for (NodeId u : nodes) hit += predicted[u] == labels[u];
    return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

}  // namespace dnx
