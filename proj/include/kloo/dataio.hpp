#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kloo/errors.hpp"
#include "kloo/rng.hpp"

namespace kloo {

// Input/target pair (X, Y). Classification datasets carry one-hot target rows;
// regression datasets may carry arbitrary real rows.
struct Dataset {
    Eigen::MatrixXd inputs;   // n x d
    Eigen::MatrixXd targets;  // n x C
    int n = 0;
    int d = 0;
    int classes = 0;
};

struct NoiseSpec {
    double p = 0.0;  // noise level in [0, 1]
    std::uint64_t seed = 0;
};

enum class CsvLayout { LabelFirst, LabelLast };

inline bool is_one_hot_row(const Eigen::MatrixXd& Y, int i) {
    int ones = 0;
    for (int k = 0; k < Y.cols(); ++k) {
        double v = Y(i, k);
        if (v == 1.0)
            ++ones;
        else if (v != 0.0)
            return false;
    }
    return ones == 1;
}

inline bool has_one_hot_targets(const Dataset& ds) {
    for (int i = 0; i < ds.n; ++i)
        if (!is_one_hot_row(ds.targets, i)) return false;
    return true;
}

namespace detail {

inline std::vector<double> parse_csv_row(const std::string& line, int line_no) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t pos = 0;
            double v = std::stod(cell, &pos);
            while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
            if (pos != cell.size()) throw std::invalid_argument(cell);
            out.push_back(v);
        } catch (const std::exception&) {
            throw IoError("malformed CSV value '" + cell + "' at line " + std::to_string(line_no));
        }
    }
    return out;
}

}  // namespace detail

// Loads a labeled CSV: each row is d features plus one integer label in [0, C-1].
inline Dataset load_csv(const std::string& path, int class_count, CsvLayout layout,
                        bool skip_header = false) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && skip_header) continue;
        if (line.empty()) continue;
        rows.push_back(detail::parse_csv_row(line, line_no));
    }
    if (rows.empty()) throw IoError("no rows in file: " + path);
    const int cols = static_cast<int>(rows.front().size());
    if (cols < 2) throw IoError("rows need at least one feature and a label: " + path);
    const int d = cols - 1;
    const int n = static_cast<int>(rows.size());

    Dataset ds;
    ds.inputs.resize(n, d);
    ds.targets = Eigen::MatrixXd::Zero(n, class_count);
    ds.n = n;
    ds.d = d;
    ds.classes = class_count;
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != cols)
            throw IoError("inconsistent column count at line " + std::to_string(i + 1));
        const int label_col = layout == CsvLayout::LabelFirst ? 0 : cols - 1;
        double raw = rows[i][label_col];
        int label = static_cast<int>(std::llround(raw));
        if (static_cast<double>(label) != raw || label < 0 || label >= class_count)
            throw ConfigError("label " + std::to_string(raw) + " out of range [0, " +
                              std::to_string(class_count - 1) + "] at line " + std::to_string(i + 1));
        int fj = 0;
        for (int j = 0; j < cols; ++j) {
            if (j == label_col) continue;
            ds.inputs(i, fj++) = rows[i][j];
        }
        ds.targets(i, label) = 1.0;
    }
    return ds;
}

// C Gaussian clusters with unit per-coordinate variance. Cluster centers are
// spaced along the first axis at multiples of `separation`, so mutual center
// distance >= separation for any d. Classes are interleaved round-robin so any
// prefix of the rows stays balanced up to rounding.
inline Dataset synth_blobs(int n, int d, int C, double separation, std::uint64_t seed) {
    if (n < C) throw ConfigError("synth_blobs requires n >= C");
    if (d < 1 || C < 1) throw ConfigError("synth_blobs requires d >= 1 and C >= 1");
    Dataset ds;
    ds.inputs.resize(n, d);
    ds.targets = Eigen::MatrixXd::Zero(n, C);
    ds.n = n;
    ds.d = d;
    ds.classes = C;
    auto rng = make_rng(sub_seed(seed, "synth_blobs"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const int c = i % C;
        for (int j = 0; j < d; ++j) ds.inputs(i, j) = gauss(rng);
        ds.inputs(i, 0) += separation * static_cast<double>(c);
        ds.targets(i, c) = 1.0;
    }
    return ds;
}

// Resamples round(p*n) one-hot rows, chosen uniformly without replacement, with
// a label drawn uniformly over all C classes (the redraw may equal the original
// label). Returns (noisy, clean); inputs are shared unchanged.
inline std::pair<Dataset, Dataset> randomize_labels(const Dataset& ds, const NoiseSpec& spec) {
    if (spec.p < 0.0 || spec.p > 1.0) throw ConfigError("noise level p must lie in [0, 1]");
    if (!has_one_hot_targets(ds)) throw ConfigError("randomize_labels requires one-hot targets");
    Dataset noisy = ds;
    const int k = static_cast<int>(std::llround(spec.p * ds.n));
    auto rng = make_rng(sub_seed(spec.seed, "randomize_labels"));
    std::vector<int> idx(ds.n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first k entries are a uniform sample without
    // replacement.
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, ds.n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::uniform_int_distribution<int> cls(0, ds.classes - 1);
    for (int i = 0; i < k; ++i) {
        const int row = idx[i];
        noisy.targets.row(row).setZero();
        noisy.targets(row, cls(rng)) = 1.0;
    }
    return {noisy, ds};
}

// Ingests an externally exported feature matrix (n x d CSV) plus a labels file
// (one integer per line). A linear kernel over the result implements top-layer
// retraining on those features.
inline Dataset load_feature_matrix(const std::string& path, const std::string& labels_path,
                                   int class_count, bool skip_header = false) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && skip_header) continue;
        if (line.empty()) continue;
        rows.push_back(detail::parse_csv_row(line, line_no));
    }
    if (rows.empty()) throw IoError("no rows in file: " + path);

    std::ifstream lin(labels_path);
    if (!lin) throw IoError("cannot open file: " + labels_path);
    std::vector<int> labels;
    line_no = 0;
    while (std::getline(lin, line)) {
        ++line_no;
        if (line.empty()) continue;
        double raw;
        try {
            raw = std::stod(line);
        } catch (const std::exception&) {
            throw IoError("malformed label at line " + std::to_string(line_no));
        }
        int label = static_cast<int>(std::llround(raw));
        if (static_cast<double>(label) != raw || label < 0 || label >= class_count)
            throw ConfigError("label out of range at line " + std::to_string(line_no));
        labels.push_back(label);
    }
    if (labels.size() != rows.size())
        throw ConfigError("row-count mismatch: " + std::to_string(rows.size()) + " feature rows vs " +
                          std::to_string(labels.size()) + " labels");

    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows.front().size());
    Dataset ds;
    ds.inputs.resize(n, d);
    ds.targets = Eigen::MatrixXd::Zero(n, class_count);
    ds.n = n;
    ds.d = d;
    ds.classes = class_count;
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != d)
            throw IoError("inconsistent column count at line " + std::to_string(i + 1));
        for (int j = 0; j < d; ++j) ds.inputs(i, j) = rows[i][j];
        ds.targets(i, labels[i]) = 1.0;
    }
    return ds;
}

// Per-feature zero mean / unit variance, statistics taken from `ref` (the
// training set). Features with zero variance are left centered only.
inline void standardize(Dataset& ds, const Dataset& ref) {
    Eigen::RowVectorXd mean = ref.inputs.colwise().mean();
    Eigen::RowVectorXd sd =
        ((ref.inputs.rowwise() - mean).array().square().colwise().sum() / ref.n).sqrt();
    for (int j = 0; j < ds.d; ++j) {
        ds.inputs.col(j).array() -= mean(j);
        if (sd(j) > 0.0) ds.inputs.col(j) /= sd(j);
    }
}

inline void standardize(Dataset& ds) { standardize(ds, ds); }

}  // namespace kloo
