#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kloo/errors.hpp"
#include "kloo/rng.hpp"

namespace kloo {

enum class KernelFamily { Linear, Nngp, Ntk, RandomFeature };

struct KernelSpec {
    KernelFamily family = KernelFamily::Linear;
    int depth = 1;  // number of weight matrices
    std::vector<int> widths;  // random-feature only: hidden widths m_1..m_k
    std::uint64_t seed = 0;   // random-feature only
};

struct KernelMatrix {
    Eigen::MatrixXd values;                    // n x n, symmetric PSD
    std::optional<Eigen::MatrixXd> cross;      // n_test x n block, when requested
};

constexpr double kRankRelTol = 1e-10;

// Number of singular values above rel_tol * sigma_max; 0 for the zero matrix.
inline int rank_of(const Eigen::MatrixXd& M, double rel_tol = kRankRelTol) {
    if (rel_tol <= 0.0) throw ConfigError("rank_of requires rel_tol > 0");
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    const double cut = rel_tol * sv(0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) ++r;
    return r;
}

// Base kernel: K_ij = <a_i, b_j> / sqrt(d).
inline Eigen::MatrixXd linear_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) throw ConfigError("linear_kernel: input dimension mismatch");
    return A * B.transpose() / std::sqrt(static_cast<double>(A.cols()));
}

namespace detail {

// Arc-cosine step for ReLU: given variances a, b and covariance c at level l,
// returns the level l+1 covariance and, optionally, the derivative expectation.
struct ArcCosStep {
    double sigma;       // E[relu(z1) relu(z2)]
    double sigma_dot;   // E[relu'(z1) relu'(z2)]
};

inline ArcCosStep arccos_step(double a, double b, double c) {
    const double norm = std::sqrt(a * b);
    // |c| can exceed sqrt(ab) by machine epsilon.
    double cosang = std::clamp(c / norm, -1.0, 1.0);
    const double theta = std::acos(cosang);
    const double pi = std::numbers::pi;
    ArcCosStep s;
    s.sigma = norm / (2.0 * pi) * (std::sin(theta) + (pi - theta) * cosang);
    s.sigma_dot = (pi - theta) / (2.0 * pi);
    return s;
}

inline void check_nonzero_rows(const Eigen::MatrixXd& X, const char* what) {
    for (int i = 0; i < X.rows(); ++i)
        if (X.row(i).squaredNorm() == 0.0)
            throw ConfigError(std::string(what) + ": zero-norm input row " + std::to_string(i) +
                              " (angle undefined)");
}

// Shared NNGP/NTK recursion over a cross block A x B. Diagonal variances are
// tracked separately since the recursion needs Sigma(x,x) per point.
inline Eigen::MatrixXd deep_kernel_block(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                         int depth, bool ntk) {
    if (depth < 1) throw ConfigError("kernel depth must be >= 1");
    check_nonzero_rows(A, "nngp/ntk kernel");
    check_nonzero_rows(B, "nngp/ntk kernel");
    Eigen::MatrixXd sigma = linear_kernel(A, B);
    const double invsqrtd = 1.0 / std::sqrt(static_cast<double>(A.cols()));
    Eigen::VectorXd da = A.rowwise().squaredNorm() * invsqrtd;
    Eigen::VectorXd db = B.rowwise().squaredNorm() * invsqrtd;
    Eigen::MatrixXd theta = sigma;
    for (int level = 2; level <= depth; ++level) {
        for (int i = 0; i < sigma.rows(); ++i) {
            for (int j = 0; j < sigma.cols(); ++j) {
                ArcCosStep s = arccos_step(da(i), db(j), sigma(i, j));
                if (ntk) theta(i, j) = theta(i, j) * s.sigma_dot + s.sigma;
                sigma(i, j) = s.sigma;
            }
        }
        da *= 0.5;  // arccos_step at theta = 0 halves the variance
        db *= 0.5;
    }
    return ntk ? theta : sigma;
}

}  // namespace detail

inline Eigen::MatrixXd nngp_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int depth) {
    return detail::deep_kernel_block(A, B, depth, /*ntk=*/false);
}

inline Eigen::MatrixXd ntk_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int depth) {
    return detail::deep_kernel_block(A, B, depth, /*ntk=*/true);
}

// Frozen random ReLU layers. The first layer uses weight variance 1/sqrt(d) so
// that the induced Gram phi phi^T / m_last converges to the depth-matched NNGP
// with base <x, x'> / sqrt(d); deeper layers use 1/fan_in. No bias terms.
inline Eigen::MatrixXd random_feature_map(const Eigen::MatrixXd& X, const std::vector<int>& widths,
                                          std::uint64_t seed) {
    if (widths.empty()) throw ConfigError("random_feature_map: widths must be nonempty");
    Eigen::MatrixXd cur = X;
    int fan_in = static_cast<int>(X.cols());
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const int m = widths[l];
        if (m < 1) throw ConfigError("random_feature_map: widths must be positive");
        auto rng = make_rng(sub_seed(seed, static_cast<std::uint64_t>(l)));
        const double var = l == 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                  : 1.0 / static_cast<double>(fan_in);
        std::normal_distribution<double> gauss(0.0, std::sqrt(var));
        Eigen::MatrixXd W(m, fan_in);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < fan_in; ++j) W(i, j) = gauss(rng);
        cur = (cur * W.transpose()).cwiseMax(0.0);
        fan_in = m;
    }
    return cur;
}

inline Eigen::MatrixXd random_feature_gram(const Eigen::MatrixXd& phi_a,
                                           const Eigen::MatrixXd& phi_b) {
    return phi_a * phi_b.transpose() / static_cast<double>(phi_a.cols());
}

// Dispatch on the spec; returns the training Gram plus the optional
// test-vs-train block computed from the same kernel (same weights for RF).
inline KernelMatrix build_kernel(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd* X_test = nullptr) {
    KernelMatrix km;
    switch (spec.family) {
        case KernelFamily::Linear:
            km.values = linear_kernel(X, X);
            if (X_test) km.cross = linear_kernel(*X_test, X);
            break;
        case KernelFamily::Nngp:
            km.values = nngp_kernel(X, X, spec.depth);
            if (X_test) km.cross = nngp_kernel(*X_test, X, spec.depth);
            break;
        case KernelFamily::Ntk:
            km.values = ntk_kernel(X, X, spec.depth);
            if (X_test) km.cross = ntk_kernel(*X_test, X, spec.depth);
            break;
        case KernelFamily::RandomFeature: {
            Eigen::MatrixXd phi = random_feature_map(X, spec.widths, spec.seed);
            km.values = random_feature_gram(phi, phi);
            if (X_test) {
                Eigen::MatrixXd phi_t = random_feature_map(*X_test, spec.widths, spec.seed);
                km.cross = random_feature_gram(phi_t, phi);
            }
            break;
        }
    }
    // Symmetrize away roundoff from the matrix products.
    km.values = ((km.values + km.values.transpose()) / 2.0).eval();
    return km;
}

inline KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "linear") return KernelFamily::Linear;
    if (name == "nngp") return KernelFamily::Nngp;
    if (name == "ntk") return KernelFamily::Ntk;
    if (name == "random-feature" || name == "rf") return KernelFamily::RandomFeature;
    throw ConfigError("unknown kernel family: " + name);
}

inline std::string kernel_family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::Linear: return "linear";
        case KernelFamily::Nngp: return "nngp";
        case KernelFamily::Ntk: return "ntk";
        case KernelFamily::RandomFeature: return "random-feature";
    }
    return "?";
}

}  // namespace kloo
