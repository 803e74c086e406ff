#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kloo/errors.hpp"
#include "kloo/experiments.hpp"
#include "kloo/loo.hpp"
#include "kloo/stats.hpp"

namespace kloo {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// --- matrix CSV (row-major, full matrix) ------------------------------------

inline void save_matrix_csv(const Eigen::MatrixXd& M, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            if (j) out << ',';
            out << format_double(M(i, j));
        }
        out << '\n';
    }
}

inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        rows.push_back(detail::parse_csv_row(line, line_no));
    }
    if (rows.empty()) throw IoError("no rows in file: " + path);
    Eigen::MatrixXd M(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size())
            throw IoError("inconsistent column count at line " + std::to_string(i + 1));
        for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
    }
    return M;
}

// --- report serialization ----------------------------------------------------

inline json loo_report_json(const LooReport& report, double lambda) {
    json j;
    j["loss"] = report.loss;
    j["accuracy"] = report.accuracy;
    j["n"] = report.residuals.rows();
    j["lambda"] = lambda;
    j["flagged_points"] = report.flagged;
    return j;
}

inline json verify_report_json(const VerifyReport& rep) {
    json j;
    j["lemma"] = rep.lemma;
    j["n"] = rep.n;
    j["trials"] = rep.trials;
    j["statistic"] = rep.statistic;
    j["threshold"] = rep.threshold;
    j["pass"] = rep.pass;
    if (!rep.details.empty()) j["details"] = rep.details;
    return j;
}

// --- sweep config ------------------------------------------------------------

inline SweepFamily parse_family(const std::string& name) {
    if (name == "sample-size") return SweepFamily::SampleSize;
    if (name == "noise") return SweepFamily::Noise;
    if (name == "width") return SweepFamily::Width;
    if (name == "rank") return SweepFamily::Rank;
    if (name == "depth") return SweepFamily::Depth;
    if (name == "transfer") return SweepFamily::Transfer;
    throw ConfigError("unknown sweep family: " + name);
}

inline DatasetSource parse_dataset(const json& j) {
    DatasetSource src;
    if (!j.contains("type")) throw ConfigError("dataset: missing field 'type'");
    const std::string type = j.at("type");
    if (type == "blobs") {
        src.kind = DatasetKind::Blobs;
        if (!j.contains("n") || !j.contains("d") || !j.contains("classes"))
            throw ConfigError("dataset blobs: requires fields n, d, classes");
        src.n = j.at("n");
        src.d = j.at("d");
        src.classes = j.at("classes");
        src.separation = j.value("separation", 5.0);
    } else if (type == "csv") {
        src.kind = DatasetKind::Csv;
        src.path = j.at("path");
        src.classes = j.at("classes");
        src.layout = j.value("layout", std::string("label-first")) == "label-last"
                         ? CsvLayout::LabelLast
                         : CsvLayout::LabelFirst;
        src.header = j.value("header", false);
    } else if (type == "features") {
        src.kind = DatasetKind::Features;
        src.path = j.at("path");
        src.labels_path = j.at("labels");
        src.classes = j.at("classes");
        src.header = j.value("header", false);
    } else {
        throw ConfigError("dataset: unknown type '" + type + "'");
    }
    src.standardize = j.value("standardize", false);
    return src;
}

inline SweepConfig parse_sweep_config(const json& j) {
    SweepConfig cfg;
    try {
        if (!j.contains("family")) throw ConfigError("config: missing field 'family'");
        cfg.family = parse_family(j.at("family"));
        if (!j.contains("grid")) throw ConfigError("config: missing field 'grid'");
        cfg.grid = j.at("grid").get<std::vector<double>>();
        if (j.contains("kernel")) {
            const json& k = j.at("kernel");
            cfg.kernel.family = parse_kernel_family(k.value("family", std::string("linear")));
            cfg.kernel.depth = k.value("depth", 1);
            if (k.contains("widths")) cfg.kernel.widths = k.at("widths").get<std::vector<int>>();
            cfg.kernel.seed = k.value("seed", 0);
        }
        cfg.lambda = j.value("lambda", 0.0);
        cfg.repeats = j.value("repeats", 5);
        cfg.seed = j.value("seed", 0);
        cfg.test_fraction = j.value("test_fraction", 0.2);
        cfg.noise = j.value("noise", 0.0);
        if (j.contains("rank_variant")) {
            const std::string v = j.at("rank_variant");
            if (v == "depth1") cfg.rank_variant = RankVariant::Depth1;
            else if (v == "depth2-m1") cfg.rank_variant = RankVariant::Depth2M1;
            else if (v == "depth2-m2") cfg.rank_variant = RankVariant::Depth2M2;
            else if (v == "linearize") cfg.rank_variant = RankVariant::Linearize;
            else throw ConfigError("config: unknown rank_variant '" + v + "'");
        }
        cfg.fixed_width = j.value("fixed_width", 120);
        if (!j.contains("dataset")) throw ConfigError("config: missing field 'dataset'");
        cfg.dataset = parse_dataset(j.at("dataset"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

inline SweepConfig load_sweep_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_sweep_config(j);
}

// --- sweep outputs -----------------------------------------------------------

inline const char* kSweepCsvHeader =
    "knob,repeat,seed,loo_loss,loo_acc,test_loss,test_acc,train_loss,kernel_rank,flagged_points";

// Writes one record per row. Test and train losses are multiplied by 2 here so
// they share the unhalved LOO loss convention on a common axis; raw values are
// kept in the JSON summary.
inline void write_sweep_csv(const std::vector<SweepRecord>& records, std::ostream& out) {
    out << kSweepCsvHeader << '\n';
    for (const auto& r : records) {
        out << format_double(r.knob) << ',' << r.repeat_index << ',' << r.seed << ','
            << format_double(r.loo_loss) << ',' << format_double(r.loo_acc) << ','
            << format_double(2.0 * r.test_loss) << ',' << format_double(r.test_acc) << ','
            << format_double(2.0 * r.train_loss) << ',' << r.kernel_rank << ','
            << r.flagged_points << '\n';
    }
}

inline void write_sweep_csv(const std::vector<SweepRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    write_sweep_csv(records, out);
}

inline json sweep_summary_json(const std::vector<SweepRecord>& records) {
    std::map<double, std::vector<const SweepRecord*>> by_knob;
    for (const auto& r : records) by_knob[r.knob].push_back(&r);
    json out = json::array();
    for (const auto& [knob, rs] : by_knob) {
        auto stat = [&](auto getter) {
            double mean = 0.0;
            for (const auto* r : rs) mean += getter(*r);
            mean /= rs.size();
            double var = 0.0;
            for (const auto* r : rs) var += (getter(*r) - mean) * (getter(*r) - mean);
            const double sd = rs.size() > 1 ? std::sqrt(var / (rs.size() - 1)) : 0.0;
            return json{{"mean", mean}, {"std", sd}};
        };
        json entry;
        entry["knob"] = knob;
        entry["repeats"] = rs.size();
        entry["loo_loss"] = stat([](const SweepRecord& r) { return r.loo_loss; });
        entry["loo_acc"] = stat([](const SweepRecord& r) { return r.loo_acc; });
        entry["test_loss_raw"] = stat([](const SweepRecord& r) { return r.test_loss; });
        entry["test_loss_rescaled"] = stat([](const SweepRecord& r) { return 2.0 * r.test_loss; });
        entry["test_acc"] = stat([](const SweepRecord& r) { return r.test_acc; });
        entry["train_loss_raw"] = stat([](const SweepRecord& r) { return r.train_loss; });
        entry["kernel_rank"] = stat([](const SweepRecord& r) { return double(r.kernel_rank); });
        out.push_back(entry);
    }
    return out;
}

// FNV-1a over the raw config bytes, hex encoded.
inline std::string hash_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace kloo
