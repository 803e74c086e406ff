#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "kloo/errors.hpp"
#include "kloo/regression.hpp"
#include "kloo/rng.hpp"
#include "kloo/special.hpp"

namespace kloo {

// Uniform sample from the unit sphere S^{n-1}: normalized standard Gaussian.
inline Eigen::VectorXd sample_haar_vector(int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("sample_haar_vector: n must be >= 1");
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd w(n);
    do {
        for (int i = 0; i < n; ++i) w(i) = gauss(rng);
    } while (w.norm() == 0.0);
    return w / w.norm();
}

// Haar sample from O(n): QR of a Gaussian matrix with the R-diagonal sign
// correction. Plain QR is not Haar.
inline Eigen::MatrixXd sample_haar_matrix(int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("sample_haar_matrix: n must be >= 1");
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    return Q;
}

// Random PSD matrix Q diag(w) Q^T with Haar Q and eigenvalues uniform in
// [wmin, wmax]. Used by the oracle suite and Monte-Carlo instruments.
inline Eigen::MatrixXd random_psd_matrix(int n, std::uint64_t seed, double wmin = 0.1,
                                         double wmax = 2.0) {
    Eigen::MatrixXd Q = sample_haar_matrix(n, sub_seed(seed, "psd_q"));
    auto rng = make_rng(sub_seed(seed, "psd_w"));
    std::uniform_real_distribution<double> uni(wmin, wmax);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = uni(rng);
    Eigen::MatrixXd K = Q * w.asDiagonal() * Q.transpose();
    return (K + K.transpose()) / 2.0;
}

struct GTerm {
    double value = 0.0;
    int singular_index = -1;  // set when a denominator vanished and value is +inf
};

// Dominating term of the LOO loss near interpolation:
// g(r, lambda) = sum_i 1 / (sum_{l>r} V_il^2 + sum_{l<=r} lambda/(lambda+omega_l) V_il^2).
inline GTerm g_term(const Eigen::MatrixXd& V, const Eigen::VectorXd& omega, int r, double lambda) {
    const int n = static_cast<int>(V.rows());
    if (r < 0 || r > n) throw ConfigError("g_term: rank out of range");
    GTerm g;
    for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        for (int l = r; l < n; ++l) denom += V(i, l) * V(i, l);
        for (int l = 0; l < r; ++l) denom += lambda / (lambda + omega(l)) * V(i, l) * V(i, l);
        if (denom == 0.0) {
            g.value = std::numeric_limits<double>::infinity();
            g.singular_index = i;
            return g;
        }
        g.value += 1.0 / denom;
    }
    return g;
}

inline GTerm g_term(const EigenDecomposition& eig, double lambda) {
    return g_term(eig.V, eig.omega, eig.rank, lambda);
}

// Proven lower bound on the LOO loss at the interpolation threshold:
// n * (sum_i y_i v_i)^2 for unit v.
inline double spike_lower_bound(const Eigen::VectorXd& y, const Eigen::VectorXd& v) {
    if (y.size() != v.size()) throw ConfigError("spike_lower_bound: size mismatch");
    const double proj = y.dot(v);
    return static_cast<double>(y.size()) * proj * proj;
}

struct VerifyReport {
    std::string lemma;
    int n = 0;
    int trials = 0;
    double statistic = 0.0;  // the quantity compared against threshold
    double threshold = 0.0;
    bool pass = false;
    std::vector<double> details;  // per-n or per-moment values, lemma dependent
};

// sum_i 1/v_i^2 >= n^2 for every unit vector; checked on Haar samples.
// statistic = min over trials of (sum 1/v_i^2) / n^2, threshold 1.
inline VerifyReport verify_lemma_b1(int trials, int n, std::uint64_t seed) {
    VerifyReport rep;
    rep.lemma = "b1";
    rep.n = n;
    rep.trials = trials;
    rep.threshold = 1.0;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd v = sample_haar_vector(n, sub_seed(seed, static_cast<std::uint64_t>(t)));
        const double s = v.array().square().inverse().sum();
        min_ratio = std::min(min_ratio, s / (static_cast<double>(n) * n));
    }
    rep.statistic = min_ratio;
    rep.pass = min_ratio >= 1.0;
    return rep;
}

// (1/n)(sum y_i v_i)^2 ~ Beta(1/2, (n-1)/2) for Haar v and any fixed +-1 y.
// statistic = KS p-value, threshold 0.01.
inline VerifyReport verify_lemma_b5(int trials, int n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("verify_lemma_b5 requires n >= 2");
    VerifyReport rep;
    rep.lemma = "b5";
    rep.n = n;
    rep.trials = trials;
    rep.threshold = 0.01;
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = (i % 2 == 0) ? 1.0 : -1.0;
    std::vector<double> sample(trials);
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd v = sample_haar_vector(n, sub_seed(seed, static_cast<std::uint64_t>(t)));
        const double s = y.dot(v);
        sample[t] = s * s / n;
    }
    const double a = 0.5;
    const double b = (n - 1) / 2.0;
    KsResult ks = ks_test(sample, [a, b](double x) { return beta_cdf(a, b, x); });
    rep.statistic = ks.p_value;
    rep.details = {ks.statistic};
    rep.pass = ks.p_value > 0.01;
    return rep;
}

// n X_n -> Gamma(1/2, 1) for X_n ~ Beta(1/2, n). Checks the first two moments
// at the largest n (4 sigma) and that the KS distance to the Gamma CDF shrinks
// from the smallest to the largest n. (Consecutive distances are not required
// to decrease: past moderate n the residual bias sits below the Monte-Carlo
// noise floor ~1/sqrt(trials).) statistic = max moment deviation in sigmas.
inline VerifyReport verify_lemma_b6(const std::vector<int>& n_list, int trials,
                                    std::uint64_t seed) {
    if (n_list.empty()) throw ConfigError("verify_lemma_b6: empty n list");
    VerifyReport rep;
    rep.lemma = "b6";
    rep.n = n_list.back();
    rep.trials = trials;
    rep.threshold = 4.0;
    std::vector<double> ks_dist;
    double worst_sigmas = 0.0;
    for (std::size_t idx = 0; idx < n_list.size(); ++idx) {
        const int n = n_list[idx];
        auto rng = make_rng(sub_seed(seed, static_cast<std::uint64_t>(idx)));
        std::gamma_distribution<double> ga(0.5, 1.0);
        std::gamma_distribution<double> gb(static_cast<double>(n), 1.0);
        std::vector<double> sample(trials);
        double mean = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double x = ga(rng);
            const double ybar = gb(rng);
            sample[t] = n * x / (x + ybar);  // n * Beta(1/2, n)
            mean += sample[t];
        }
        mean /= trials;
        double var = 0.0;
        for (double s : sample) var += (s - mean) * (s - mean);
        var /= trials - 1;
        KsResult ks = ks_test(sample, [](double x) { return gamma_cdf(0.5, x); });
        ks_dist.push_back(ks.statistic);
        if (idx + 1 == n_list.size()) {
            // Gamma(1/2,1): mean 1/2, variance 1/2, fourth central moment 15/4.
            const double se_mean = std::sqrt(0.5 / trials);
            const double se_var = std::sqrt((15.0 / 4.0 - 0.25) / trials);
            worst_sigmas = std::max(std::fabs(mean - 0.5) / se_mean,
                                    std::fabs(var - 0.5) / se_var);
            rep.details.push_back(mean);
            rep.details.push_back(var);
        }
    }
    const bool shrinking = ks_dist.back() < ks_dist.front();
    rep.details.insert(rep.details.end(), ks_dist.begin(), ks_dist.end());
    rep.statistic = worst_sigmas;
    rep.pass = worst_sigmas <= 4.0 && (ks_dist.size() < 2 || shrinking);
    return rep;
}

// Exact LOO loss at the interpolation threshold (Haar instance, r = n-1):
// (1/n)(sum y_i v_i)^2 * sum 1/v_i^2. Reports the per-n medians; passes when
// the median at the largest n is at least twice the median at the smallest.
inline VerifyReport verify_spike_growth(const std::vector<int>& n_list, int trials,
                                        std::uint64_t seed) {
    if (n_list.size() < 2) throw ConfigError("verify_spike_growth needs at least two n values");
    VerifyReport rep;
    rep.lemma = "spike";
    rep.n = n_list.back();
    rep.trials = trials;
    rep.threshold = 2.0;
    std::vector<double> medians;
    for (std::size_t idx = 0; idx < n_list.size(); ++idx) {
        const int n = n_list[idx];
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = (i % 2 == 0) ? 1.0 : -1.0;
        std::vector<double> losses(trials);
        for (int t = 0; t < trials; ++t) {
            Eigen::VectorXd v = sample_haar_vector(
                n, sub_seed(seed, static_cast<std::uint64_t>(idx * 1000003 + t)));
            const double proj = y.dot(v);
            const double inv_sum = v.array().square().inverse().sum();
            losses[t] = proj * proj * inv_sum / n;
        }
        std::nth_element(losses.begin(), losses.begin() + trials / 2, losses.end());
        medians.push_back(losses[trials / 2]);
    }
    rep.details = medians;
    rep.statistic = medians.back() / medians.front();
    rep.pass = rep.statistic >= 2.0;
    return rep;
}

}  // namespace kloo
