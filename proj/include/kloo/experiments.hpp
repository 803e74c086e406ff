#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "kloo/dataio.hpp"
#include "kloo/errors.hpp"
#include "kloo/kernels.hpp"
#include "kloo/loo.hpp"
#include "kloo/regression.hpp"
#include "kloo/rng.hpp"

namespace kloo {

enum class SweepFamily { SampleSize, Noise, Width, Rank, Depth, Transfer };
enum class RankVariant { Depth1, Depth2M1, Depth2M2, Linearize };

enum class DatasetKind { Blobs, Csv, Features };

struct DatasetSource {
    DatasetKind kind = DatasetKind::Blobs;
    // blobs
    int n = 0;
    int d = 0;
    int classes = 2;
    double separation = 5.0;
    // csv / features
    std::string path;
    std::string labels_path;
    CsvLayout layout = CsvLayout::LabelFirst;
    bool header = false;
    bool standardize = false;
};

struct SweepConfig {
    SweepFamily family = SweepFamily::Width;
    std::vector<double> grid;   // knob values, strictly increasing
    KernelSpec kernel;
    double lambda = 0.0;
    int repeats = 5;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    double noise = 0.0;         // width sweep random-label mode
    RankVariant rank_variant = RankVariant::Depth1;
    int fixed_width = 120;      // depth-2 rank sweeps: the width held constant
    DatasetSource dataset;
};

// One row of a sweep. test_loss and train_loss hold the raw halved (per-row
// half-squared-error) losses; the CSV writer applies the x2 reconciliation so LOO and test
// losses share an axis.
struct SweepRecord {
    double knob = 0.0;
    int repeat_index = 0;
    std::uint64_t seed = 0;
    double loo_loss = 0.0;
    double loo_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
    double train_loss = 0.0;
    int kernel_rank = 0;
    int flagged_points = 0;
    bool degenerate_protocol = false;  // not serialized to CSV
};

inline void validate(const SweepConfig& cfg) {
    if (cfg.grid.empty()) throw ConfigError("sweep grid must be nonempty");
    for (std::size_t i = 1; i < cfg.grid.size(); ++i)
        if (cfg.grid[i] <= cfg.grid[i - 1])
            throw ConfigError("sweep grid must be strictly increasing");
    if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0)
        throw ConfigError("test_fraction must lie in [0, 1)");
}

inline Dataset materialize(const DatasetSource& src, std::uint64_t seed) {
    Dataset ds;
    switch (src.kind) {
        case DatasetKind::Blobs:
            ds = synth_blobs(src.n, src.d, src.classes, src.separation, seed);
            break;
        case DatasetKind::Csv:
            ds = load_csv(src.path, src.classes, src.layout, src.header);
            break;
        case DatasetKind::Features:
            ds = load_feature_matrix(src.path, src.labels_path, src.classes, src.header);
            break;
    }
    if (src.standardize) standardize(ds);
    return ds;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<int>& rows) {
    Dataset out;
    out.n = static_cast<int>(rows.size());
    out.d = ds.d;
    out.classes = ds.classes;
    out.inputs.resize(out.n, ds.d);
    out.targets.resize(out.n, ds.classes);
    for (int i = 0; i < out.n; ++i) {
        out.inputs.row(i) = ds.inputs.row(rows[i]);
        out.targets.row(i) = ds.targets.row(rows[i]);
    }
    return out;
}

// Seeded shuffle-split; the held-out block is fixed before any per-knob
// subsampling.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
    std::vector<int> idx(ds.n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(sub_seed(seed, "test_split"));
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n_test = static_cast<int>(std::llround(test_fraction * ds.n));
    std::vector<int> test_rows(idx.begin(), idx.begin() + n_test);
    std::vector<int> train_rows(idx.begin() + n_test, idx.end());
    return {take_rows(ds, train_rows), take_rows(ds, test_rows)};
}

namespace detail {

// Shared per-record evaluation: kernel, LOO, train/test metrics.
inline SweepRecord evaluate_instance(const Dataset& train, const Dataset& test,
                                     const KernelSpec& spec, double lambda) {
    KernelMatrix km = build_kernel(spec, train.inputs, test.n > 0 ? &test.inputs : nullptr);
    EigenDecomposition eig = eigendecompose(km.values);
    SweepRecord rec;
    rec.kernel_rank = eig.rank;
    LooReport loo = lambda > 0.0 ? loo_regularized(eig, train.targets, lambda)
                                 : loo_zero_reg(eig, train.targets);
    rec.loo_loss = loo.loss;
    rec.loo_acc = loo.accuracy;
    rec.flagged_points = static_cast<int>(loo.flagged.size());
    RidgeModel model = fit(eig, train.targets, lambda);
    Metrics train_m = eval_metrics(km.values * model.alpha, train.targets);
    rec.train_loss = train_m.loss;
    if (test.n > 0) {
        Metrics test_m = eval_metrics(*km.cross * model.alpha, test.targets);
        rec.test_loss = test_m.loss;
        rec.test_acc = test_m.accuracy;
    }
    return rec;
}

inline void parallel_run(int njobs, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || njobs <= 1) {
        for (int j = 0; j < njobs; ++j) fn(j);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, njobs);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int j = next.fetch_add(1); j < njobs; j = next.fetch_add(1)) fn(j);
        });
    }
    for (auto& t : pool) t.join();
}

inline void sort_canonical(std::vector<SweepRecord>& records) {
    std::sort(records.begin(), records.end(), [](const SweepRecord& a, const SweepRecord& b) {
        if (a.knob != b.knob) return a.knob < b.knob;
        return a.repeat_index < b.repeat_index;
    });
}

}  // namespace detail

// Sample-size sweep: per grid value n, subsample n training points (fresh
// subsample per repeat) and compute LOO plus held-out test metrics.
inline std::vector<SweepRecord> run_sample_size_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate(cfg);
    Dataset full = materialize(cfg.dataset, sub_seed(cfg.seed, "dataset"));
    auto [pool, test] = train_test_split(full, cfg.test_fraction, cfg.seed);
    for (double knob : cfg.grid)
        if (static_cast<int>(knob) > pool.n)
            throw ConfigError("grid value " + std::to_string(static_cast<int>(knob)) +
                              " exceeds available training data (" + std::to_string(pool.n) + ")");
    const int ng = static_cast<int>(cfg.grid.size());
    std::vector<SweepRecord> records(static_cast<std::size_t>(ng) * cfg.repeats);
    detail::parallel_run(ng * cfg.repeats, jobs, [&](int job) {
        const int gi = job / cfg.repeats;
        const int rep = job % cfg.repeats;
        const int n = static_cast<int>(cfg.grid[gi]);
        const std::uint64_t rec_seed =
            sub_seed(cfg.seed, static_cast<std::uint64_t>(gi) * 100003 + rep);
        std::vector<int> idx(pool.n);
        std::iota(idx.begin(), idx.end(), 0);
        auto rng = make_rng(rec_seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n);
        Dataset train = take_rows(pool, idx);
        SweepRecord rec = detail::evaluate_instance(train, test, cfg.kernel, cfg.lambda);
        rec.knob = cfg.grid[gi];
        rec.repeat_index = rep;
        rec.seed = rec_seed;
        records[job] = rec;
    });
    detail::sort_canonical(records);
    return records;
}

// Noise sweep: fixed train/test split and kernel, grid over the noise level p.
// LOO uses the clean-evaluation noisy-label formula; test metrics score the
// noisily-trained model against clean test labels.
inline std::vector<SweepRecord> run_noise_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate(cfg);
    for (double p : cfg.grid)
        if (p < 0.0 || p > 1.0) throw ConfigError("noise grid values must lie in [0, 1]");
    Dataset full = materialize(cfg.dataset, sub_seed(cfg.seed, "dataset"));
    auto [train, test] = train_test_split(full, cfg.test_fraction, cfg.seed);
    KernelMatrix km = build_kernel(cfg.kernel, train.inputs, test.n > 0 ? &test.inputs : nullptr);
    EigenDecomposition eig = eigendecompose(km.values);
    if (eig.rank < train.n)
        throw NumericalError(
            "noise sweep requires a full-rank kernel at lambda = 0 (clean-evaluation formula); "
            "rank " + std::to_string(eig.rank) + " < n = " + std::to_string(train.n));
    const Eigen::MatrixXd M = loo_operator(eig);  // shared across all records
    const int ng = static_cast<int>(cfg.grid.size());
    std::vector<SweepRecord> records(static_cast<std::size_t>(ng) * cfg.repeats);
    detail::parallel_run(ng * cfg.repeats, jobs, [&](int job) {
        const int gi = job / cfg.repeats;
        const int rep = job % cfg.repeats;
        const std::uint64_t rec_seed =
            sub_seed(cfg.seed, static_cast<std::uint64_t>(gi) * 100003 + rep);
        auto [noisy, clean] = randomize_labels(train, NoiseSpec{cfg.grid[gi], rec_seed});
        SweepRecord rec;
        rec.knob = cfg.grid[gi];
        rec.repeat_index = rep;
        rec.seed = rec_seed;
        rec.kernel_rank = eig.rank;
        LooReport loo = loo_noisy(eig, noisy.targets, clean.targets, M);
        rec.loo_loss = loo.loss;
        rec.loo_acc = loo.accuracy;
        rec.flagged_points = static_cast<int>(loo.flagged.size());
        RidgeModel model = fit(eig, noisy.targets, cfg.lambda);
        rec.train_loss = eval_metrics(km.values * model.alpha, noisy.targets).loss;
        if (test.n > 0) {
            Metrics m = eval_metrics(*km.cross * model.alpha, test.targets);
            rec.test_loss = m.loss;
            rec.test_acc = m.accuracy;
        }
        records[job] = rec;
    });
    detail::sort_canonical(records);
    return records;
}

// Width sweep over random-feature models: Gram phi phi^T / m, rank, LOO via
// the appropriate zero-reg branch, train/test metrics. cfg.noise > 0 enables
// the random-label variant (labels noised, test scored against clean labels).
inline std::vector<SweepRecord> run_width_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate(cfg);
    if (cfg.kernel.family != KernelFamily::RandomFeature)
        throw ConfigError("width sweep requires a random-feature kernel");
    Dataset full = materialize(cfg.dataset, sub_seed(cfg.seed, "dataset"));
    auto [train, test] = train_test_split(full, cfg.test_fraction, cfg.seed);
    const int ng = static_cast<int>(cfg.grid.size());
    std::vector<SweepRecord> records(static_cast<std::size_t>(ng) * cfg.repeats);
    detail::parallel_run(ng * cfg.repeats, jobs, [&](int job) {
        const int gi = job / cfg.repeats;
        const int rep = job % cfg.repeats;
        const std::uint64_t rec_seed =
            sub_seed(cfg.seed, static_cast<std::uint64_t>(gi) * 100003 + rep);
        KernelSpec spec = cfg.kernel;
        spec.widths = {static_cast<int>(cfg.grid[gi])};
        spec.seed = rec_seed;
        Dataset labels_train = train;
        if (cfg.noise > 0.0)
            labels_train = randomize_labels(train, NoiseSpec{cfg.noise, rec_seed}).first;
        KernelMatrix km = build_kernel(spec, train.inputs, test.n > 0 ? &test.inputs : nullptr);
        EigenDecomposition eig = eigendecompose(km.values);
        SweepRecord rec;
        rec.knob = cfg.grid[gi];
        rec.repeat_index = rep;
        rec.seed = rec_seed;
        rec.kernel_rank = eig.rank;
        LooReport loo = cfg.lambda > 0.0 ? loo_regularized(eig, labels_train.targets, cfg.lambda)
                                         : loo_zero_reg(eig, labels_train.targets);
        rec.loo_loss = loo.loss;
        rec.loo_acc = loo.accuracy;
        rec.flagged_points = static_cast<int>(loo.flagged.size());
        RidgeModel model = fit(eig, labels_train.targets, cfg.lambda);
        rec.train_loss = eval_metrics(km.values * model.alpha, labels_train.targets).loss;
        if (test.n > 0) {
            Metrics m = eval_metrics(*km.cross * model.alpha, test.targets);
            rec.test_loss = m.loss;
            rec.test_acc = m.accuracy;
        }
        records[job] = rec;
    });
    detail::sort_canonical(records);
    return records;
}

namespace detail {

// Small finite ReLU network f(x) = w^T relu(U relu(V x)) whose per-parameter
// forward-difference gradient supplies the linearization feature map.
struct FiniteNet {
    Eigen::MatrixXd V;  // m1 x d
    Eigen::MatrixXd U;  // m2 x m1
    Eigen::VectorXd w;  // m2

    static FiniteNet init(int d, int m1, int m2, std::uint64_t seed) {
        FiniteNet net;
        auto rng = make_rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        net.V.resize(m1, d);
        net.U.resize(m2, m1);
        net.w.resize(m2);
        for (int i = 0; i < m1; ++i)
            for (int j = 0; j < d; ++j) net.V(i, j) = gauss(rng) / std::sqrt(double(d));
        for (int i = 0; i < m2; ++i)
            for (int j = 0; j < m1; ++j) net.U(i, j) = gauss(rng) / std::sqrt(double(m1));
        for (int i = 0; i < m2; ++i) net.w(i) = gauss(rng) / std::sqrt(double(m2));
        return net;
    }

    int param_count() const {
        return static_cast<int>(V.size() + U.size() + w.size());
    }

    double* param(int j) {
        if (j < V.size()) return V.data() + j;
        j -= static_cast<int>(V.size());
        if (j < U.size()) return U.data() + j;
        j -= static_cast<int>(U.size());
        return w.data() + j;
    }

    double forward(const Eigen::VectorXd& x) const {
        Eigen::VectorXd h1 = (V * x).cwiseMax(0.0);
        Eigen::VectorXd h2 = (U * h1).cwiseMax(0.0);
        return w.dot(h2);
    }
};

inline Eigen::MatrixXd linearization_features(const Eigen::MatrixXd& X, int m1, int m2,
                                              std::uint64_t seed) {
    FiniteNet net = FiniteNet::init(static_cast<int>(X.cols()), m1, m2, seed);
    const int p = net.param_count();
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd phi(n, p);
    Eigen::VectorXd base(n);
    for (int i = 0; i < n; ++i) base(i) = net.forward(X.row(i).transpose());
    for (int j = 0; j < p; ++j) {
        double* pj = net.param(j);
        const double orig = *pj;
        const double h = 1e-4 * std::max(1.0, std::fabs(orig));
        *pj = orig + h;
        for (int i = 0; i < n; ++i)
            phi(i, j) = (net.forward(X.row(i).transpose()) - base(i)) / h;
        *pj = orig;
    }
    return phi;
}

}  // namespace detail

// Rank-dynamics sweep: rank(K) as a function of the knob for each architecture
// variant. Only the rank column is meaningful in the returned records.
inline std::vector<SweepRecord> run_rank_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate(cfg);
    Dataset full = materialize(cfg.dataset, sub_seed(cfg.seed, "dataset"));
    const int ng = static_cast<int>(cfg.grid.size());
    std::vector<SweepRecord> records(static_cast<std::size_t>(ng) * cfg.repeats);
    detail::parallel_run(ng * cfg.repeats, jobs, [&](int job) {
        const int gi = job / cfg.repeats;
        const int rep = job % cfg.repeats;
        const int m = static_cast<int>(cfg.grid[gi]);
        const std::uint64_t rec_seed =
            sub_seed(cfg.seed, static_cast<std::uint64_t>(gi) * 100003 + rep);
        Eigen::MatrixXd phi;
        switch (cfg.rank_variant) {
            case RankVariant::Depth1:
                phi = random_feature_map(full.inputs, {m}, rec_seed);
                break;
            case RankVariant::Depth2M1:
                phi = random_feature_map(full.inputs, {m, cfg.fixed_width}, rec_seed);
                break;
            case RankVariant::Depth2M2:
                phi = random_feature_map(full.inputs, {cfg.fixed_width, m}, rec_seed);
                break;
            case RankVariant::Linearize:
                phi = detail::linearization_features(full.inputs, m, cfg.fixed_width, rec_seed);
                break;
        }
        Eigen::MatrixXd K = random_feature_gram(phi, phi);
        SweepRecord rec;
        rec.knob = cfg.grid[gi];
        rec.repeat_index = rep;
        rec.seed = rec_seed;
        rec.kernel_rank = rank_of(K);
        records[job] = rec;
    });
    detail::sort_canonical(records);
    return records;
}

// Depth sweep over NTK models.
inline std::vector<SweepRecord> run_depth_sweep(const SweepConfig& cfg, int jobs = 1) {
    validate(cfg);
    if (cfg.kernel.family != KernelFamily::Ntk)
        throw ConfigError("depth sweep requires an ntk kernel");
    Dataset full = materialize(cfg.dataset, sub_seed(cfg.seed, "dataset"));
    auto [train, test] = train_test_split(full, cfg.test_fraction, cfg.seed);
    const int ng = static_cast<int>(cfg.grid.size());
    std::vector<SweepRecord> records(static_cast<std::size_t>(ng) * cfg.repeats);
    detail::parallel_run(ng * cfg.repeats, jobs, [&](int job) {
        const int gi = job / cfg.repeats;
        const int rep = job % cfg.repeats;
        KernelSpec spec = cfg.kernel;
        spec.depth = static_cast<int>(cfg.grid[gi]);
        SweepRecord rec = detail::evaluate_instance(train, test, spec, cfg.lambda);
        rec.knob = cfg.grid[gi];
        rec.repeat_index = rep;
        rec.seed = sub_seed(cfg.seed, static_cast<std::uint64_t>(gi) * 100003 + rep);
        records[job] = rec;
    });
    detail::sort_canonical(records);
    return records;
}

// Feature-transfer evaluation: linear kernel on ingested feature matrices,
// LOO on the train block, test metrics on the held-out block.
inline SweepRecord run_transfer_eval(const Dataset& features_train, const Dataset& features_test,
                                     double lambda) {
    if (features_train.d != features_test.d || features_train.classes != features_test.classes)
        throw ConfigError("run_transfer_eval: train/test feature shapes do not match");
    KernelSpec spec;
    spec.family = KernelFamily::Linear;
    SweepRecord rec = detail::evaluate_instance(features_train, features_test, spec, lambda);
    rec.knob = features_train.n;
    if (features_train.n == features_test.n && features_train.inputs == features_test.inputs)
        rec.degenerate_protocol = true;  // LOO compared against metrics on seen data
    return rec;
}

inline std::vector<SweepRecord> run_sweep(const SweepConfig& cfg, int jobs = 1) {
    switch (cfg.family) {
        case SweepFamily::SampleSize: return run_sample_size_sweep(cfg, jobs);
        case SweepFamily::Noise: return run_noise_sweep(cfg, jobs);
        case SweepFamily::Width: return run_width_sweep(cfg, jobs);
        case SweepFamily::Rank: return run_rank_sweep(cfg, jobs);
        case SweepFamily::Depth: return run_depth_sweep(cfg, jobs);
        case SweepFamily::Transfer: break;
    }
    throw ConfigError("transfer runs use run_transfer_eval with explicit feature datasets");
}

}  // namespace kloo
