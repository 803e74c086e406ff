#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "kloo/errors.hpp"
#include "kloo/regression.hpp"

namespace kloo {

// Closed-form leave-one-out result. `residuals` holds the per-point,
// per-class residual Delta (for the noisy-label variant, the residual against
// the clean label); loss is the unhalved convention (1/n) sum_ik Delta_ik^2.
struct LooReport {
    Eigen::MatrixXd residuals;   // n x C
    double loss = 0.0;
    double accuracy = 0.0;
    Eigen::VectorXd diag_A;      // A_ii per point
    std::vector<int> flagged;    // points with near-singular denominators
};

constexpr double kDenomFlagTol = 1e-10;
constexpr double kDenomSingularTol = 1e-14;

namespace detail {

inline double loo_loss(const Eigen::MatrixXd& residuals) {
    return residuals.array().square().sum() / residuals.rows();
}

// Closed-form LOO accuracy indicator: argmax(train_row - Delta_row) must
// equal argmax(eval_row). Ties break to the lowest index.
inline double loo_accuracy(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& Y_train,
                           const Eigen::MatrixXd& Y_eval) {
    const int n = static_cast<int>(delta.rows());
    int correct = 0;
    Eigen::MatrixXd pred = Y_train - delta;
    for (int i = 0; i < n; ++i)
        if (argmax_row(pred, i) == argmax_row(Y_eval, i)) ++correct;
    return static_cast<double>(correct) / n;
}

}  // namespace detail

// Regularized closed form: Delta_ik = (Y - AY)_ik / (1 - A_ii) with
// A = K (K + lambda I)^{-1}. Routed through the eigendecomposition so that
// 1 - A_ii = sum_j lambda/(lambda+omega_j) V_ij^2 is computed without
// cancellation even for tiny lambda.
inline LooReport loo_regularized(const EigenDecomposition& eig, const Eigen::MatrixXd& Y,
                                 double lambda) {
    if (lambda <= 0.0) throw ConfigError("loo_regularized requires lambda > 0");
    const int n = static_cast<int>(eig.V.rows());
    if (Y.rows() != n) throw ConfigError("loo_regularized: Y row count mismatch");
    Eigen::VectorXd w(n);
    for (int j = 0; j < n; ++j) {
        const double denom = lambda + eig.omega(j);
        if (denom <= 0.0)
            throw NumericalError("loo_regularized: lambda + omega_" + std::to_string(j) +
                                 " is not positive");
        w(j) = lambda / denom;
    }
    Eigen::MatrixXd W = eig.V * w.asDiagonal() * eig.V.transpose();  // I - A
    LooReport report;
    report.residuals.resize(n, Y.cols());
    report.diag_A.resize(n);
    for (int i = 0; i < n; ++i) {
        const double one_minus_aii = W(i, i);
        if (one_minus_aii <= 0.0)
            throw NumericalError("loo_regularized: 1 - A_ii <= 0 at point " + std::to_string(i));
        if (one_minus_aii < kDenomFlagTol) report.flagged.push_back(i);
        report.diag_A(i) = 1.0 - one_minus_aii;
        report.residuals.row(i) = (W.row(i) * Y) / one_minus_aii;
    }
    report.loss = detail::loo_loss(report.residuals);
    report.accuracy = detail::loo_accuracy(report.residuals, Y, Y);
    return report;
}

inline LooReport loo_regularized(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y,
                                 double lambda) {
    return loo_regularized(eigendecompose(K), Y, lambda);
}

// Operator behind the zero-regularization closed form: the projector onto the
// trailing eigenvectors when rank < n, the kernel inverse otherwise. Exposed
// so sweeps with a fixed kernel can compute it once and reuse it per label set.
inline Eigen::MatrixXd loo_operator(const EigenDecomposition& eig) {
    const int n = static_cast<int>(eig.V.rows());
    const int r = eig.rank;
    if (r < n) {
        Eigen::MatrixXd P = eig.V.rightCols(n - r);
        return P * P.transpose();
    }
    Eigen::VectorXd inv(n);
    for (int j = 0; j < n; ++j) inv(j) = 1.0 / eig.omega(j);
    return eig.V * inv.asDiagonal() * eig.V.transpose();
}

// Zero-regularization limit with both rank branches. The rank-deficient branch
// projects onto the trailing eigenvectors; the full-rank branch weights by
// 1/omega_j. `M` must come from loo_operator(eig).
inline LooReport loo_zero_reg(const EigenDecomposition& eig, const Eigen::MatrixXd& Y,
                              const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(eig.V.rows());
    if (Y.rows() != n) throw ConfigError("loo_zero_reg: Y row count mismatch");
    const int r = eig.rank;
    LooReport report;
    report.residuals.resize(n, Y.cols());
    report.diag_A.resize(n);
    for (int i = 0; i < n; ++i) {
        const double denom = M(i, i);
        if (r < n && denom < kDenomSingularTol)
            throw NumericalError("loo_zero_reg: degenerate leave-one-out problem at point " +
                                 std::to_string(i));
        if (denom < kDenomFlagTol) report.flagged.push_back(i);
        report.diag_A(i) = r < n ? 1.0 - denom : 1.0;
        report.residuals.row(i) = (M.row(i) * Y) / denom;
    }
    report.loss = detail::loo_loss(report.residuals);
    report.accuracy = detail::loo_accuracy(report.residuals, Y, Y);
    return report;
}

inline LooReport loo_zero_reg(const EigenDecomposition& eig, const Eigen::MatrixXd& Y) {
    return loo_zero_reg(eig, Y, loo_operator(eig));
}

// Noisy-label variant: trained on Y_noisy, evaluated against Y_clean. Requires
// a full-rank kernel. `M` must come from loo_operator(eig).
inline LooReport loo_noisy(const EigenDecomposition& eig, const Eigen::MatrixXd& Y_noisy,
                           const Eigen::MatrixXd& Y_clean, const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(eig.V.rows());
    if (eig.rank < n)
        throw ConfigError("loo_noisy requires a full-rank kernel (rank " + std::to_string(eig.rank) +
                          " < n = " + std::to_string(n) + ")");
    if (Y_noisy.rows() != n || Y_clean.rows() != n || Y_noisy.cols() != Y_clean.cols())
        throw ConfigError("loo_noisy: shape mismatch");
    LooReport base = loo_zero_reg(eig, Y_noisy, M);
    LooReport report;
    report.diag_A = base.diag_A;
    report.flagged = base.flagged;
    report.residuals = base.residuals + (Y_clean - Y_noisy);
    report.loss = detail::loo_loss(report.residuals);
    report.accuracy = detail::loo_accuracy(base.residuals, Y_noisy, Y_clean);
    return report;
}

inline LooReport loo_noisy(const EigenDecomposition& eig, const Eigen::MatrixXd& Y_noisy,
                           const Eigen::MatrixXd& Y_clean) {
    return loo_noisy(eig, Y_noisy, Y_clean, loo_operator(eig));
}

// Binary classification with +-1 labels: loss over the scalar residuals and
// accuracy via the y_i * Delta_i < 1 criterion.
inline LooReport loo_binary(const EigenDecomposition& eig, const Eigen::VectorXd& y,
                            double lambda) {
    for (int i = 0; i < y.size(); ++i)
        if (y(i) != 1.0 && y(i) != -1.0)
            throw ConfigError("loo_binary: labels must be +-1");
    Eigen::MatrixXd Y = y;
    LooReport report = lambda > 0.0 ? loo_regularized(eig, Y, lambda) : loo_zero_reg(eig, Y);
    const int n = static_cast<int>(y.size());
    int correct = 0;
    for (int i = 0; i < n; ++i)
        if (y(i) * report.residuals(i, 0) < 1.0) ++correct;
    report.accuracy = static_cast<double>(correct) / n;
    return report;
}

inline LooReport loo_binary(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double lambda) {
    return loo_binary(eigendecompose(K), y, lambda);
}

// Brute-force retraining oracle (Definition-style LOO): for each point i, fits
// on the principal submatrix without row/column i, predicts point i and scores
// it against evaluate_against. This is the oracle the closed forms are tested
// against; it never touches the closed-form code path.
inline LooReport brute_force_loo(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y, double lambda,
                                 const Eigen::MatrixXd& evaluate_against,
                                 bool binary_sign_rule = false) {
    const int n = static_cast<int>(K.rows());
    if (n < 2) throw ConfigError("brute_force_loo requires n >= 2");
    if (Y.rows() != n || evaluate_against.rows() != n)
        throw ConfigError("brute_force_loo: shape mismatch");
    const int C = static_cast<int>(Y.cols());
    LooReport report;
    report.residuals.resize(n, C);
    report.diag_A = Eigen::VectorXd::Zero(n);
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd K_sub(n - 1, n - 1);
        Eigen::MatrixXd Y_sub(n - 1, C);
        Eigen::RowVectorXd k_i(n - 1);
        for (int a = 0, ar = 0; a < n; ++a) {
            if (a == i) continue;
            Y_sub.row(ar) = Y.row(a);
            k_i(ar) = K(i, a);
            for (int b = 0, bc = 0; b < n; ++b) {
                if (b == i) continue;
                K_sub(ar, bc++) = K(a, b);
            }
            ++ar;
        }
        RidgeModel model = fit(K_sub, Y_sub, lambda);  // pseudo-inverse at lambda = 0
        Eigen::RowVectorXd pred = k_i * model.alpha;
        report.residuals.row(i) = evaluate_against.row(i) - pred;
        if (binary_sign_rule) {
            if (evaluate_against(i, 0) * pred(0) > 0.0) ++correct;
        } else {
            Eigen::MatrixXd pr = pred;
            Eigen::MatrixXd ev = evaluate_against.row(i);
            if (argmax_row(pr, 0) == argmax_row(ev, 0)) ++correct;
        }
    }
    report.loss = detail::loo_loss(report.residuals);
    report.accuracy = static_cast<double>(correct) / n;
    return report;
}

inline LooReport brute_force_loo(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y,
                                 double lambda) {
    return brute_force_loo(K, Y, lambda, Y);
}

}  // namespace kloo
