#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "kloo/errors.hpp"
#include "kloo/kernels.hpp"

namespace kloo {

// Eigendecomposition K = V diag(omega) V^T with eigenvalues sorted descending
// and the numerical rank at rel_tol.
struct EigenDecomposition {
    Eigen::MatrixXd V;       // eigenvectors as columns
    Eigen::VectorXd omega;   // descending
    int rank = 0;
    double rel_tol = kRankRelTol;
};

inline EigenDecomposition eigendecompose(const Eigen::MatrixXd& K, double rel_tol = kRankRelTol) {
    if (K.rows() != K.cols()) throw ConfigError("eigendecompose: matrix must be square");
    const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ConfigError("eigendecompose: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    const int n = static_cast<int>(K.rows());
    EigenDecomposition eig;
    eig.rel_tol = rel_tol;
    eig.V.resize(n, n);
    eig.omega.resize(n);
    // Eigen returns ascending order; flip to descending.
    for (int j = 0; j < n; ++j) {
        eig.omega(j) = es.eigenvalues()(n - 1 - j);
        eig.V.col(j) = es.eigenvectors().col(n - 1 - j);
    }
    const double w1 = eig.omega.size() ? eig.omega(0) : 0.0;
    eig.rank = 0;
    if (w1 > 0.0)
        for (int j = 0; j < n; ++j)
            if (eig.omega(j) > rel_tol * w1) ++eig.rank;
    return eig;
}

struct RidgeModel {
    Eigen::MatrixXd alpha;  // n x C dual coefficients
    double lambda = 0.0;
};

// lambda > 0: alpha = (K + lambda I)^{-1} Y via symmetric factorization.
// lambda = 0: alpha = K^dagger Y, inverting only eigenvalues above rel_tol.
inline RidgeModel fit(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y, double lambda,
                      double rel_tol = kRankRelTol) {
    if (K.rows() != K.cols() || K.rows() != Y.rows())
        throw ConfigError("fit: shape mismatch between K and Y");
    if (lambda < 0.0) throw ConfigError("fit: lambda must be >= 0");
    RidgeModel model;
    model.lambda = lambda;
    const int n = static_cast<int>(K.rows());
    const double w1_est = K.cwiseAbs().maxCoeff();
    if (lambda > 1e-12 * std::max(1.0, w1_est)) {
        Eigen::MatrixXd reg = K + lambda * Eigen::MatrixXd::Identity(n, n);
        model.alpha = reg.ldlt().solve(Y);
    } else {
        EigenDecomposition eig = eigendecompose(K, rel_tol);
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < eig.rank; ++j) inv(j) = 1.0 / (eig.omega(j) + lambda);
        model.alpha = eig.V * inv.asDiagonal() * (eig.V.transpose() * Y);
    }
    return model;
}

inline RidgeModel fit(const EigenDecomposition& eig, const Eigen::MatrixXd& Y, double lambda) {
    if (eig.V.rows() != Y.rows()) throw ConfigError("fit: shape mismatch between K and Y");
    const int n = static_cast<int>(eig.V.rows());
    RidgeModel model;
    model.lambda = lambda;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    if (lambda > 0.0) {
        for (int j = 0; j < n; ++j) inv(j) = 1.0 / (std::max(eig.omega(j), 0.0) + lambda);
    } else {
        for (int j = 0; j < eig.rank; ++j) inv(j) = 1.0 / eig.omega(j);
    }
    model.alpha = eig.V * inv.asDiagonal() * (eig.V.transpose() * Y);
    return model;
}

inline Eigen::MatrixXd predict(const RidgeModel& model, const Eigen::MatrixXd& K_cross) {
    if (K_cross.cols() != model.alpha.rows())
        throw ConfigError("predict: cross-kernel column count must equal training size");
    return K_cross * model.alpha;
}

inline int argmax_row(const Eigen::MatrixXd& M, int i) {
    // Lowest index wins on ties, everywhere.
    int best = 0;
    for (int k = 1; k < M.cols(); ++k)
        if (M(i, k) > M(i, best)) best = k;
    return best;
}

struct Metrics {
    double loss = 0.0;      // mean over rows of 1/2 * squared row error
    double accuracy = 0.0;  // argmax agreement, lowest-index tie-break
};

inline Metrics eval_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& Y) {
    if (pred.rows() != Y.rows() || pred.cols() != Y.cols())
        throw ConfigError("eval_metrics: shape mismatch");
    Metrics m;
    const int n = static_cast<int>(pred.rows());
    if (n == 0) return m;
    m.loss = 0.5 * (pred - Y).array().square().rowwise().sum().mean();
    int correct = 0;
    for (int i = 0; i < n; ++i)
        if (argmax_row(pred, i) == argmax_row(Y, i)) ++correct;
    m.accuracy = static_cast<double>(correct) / n;
    return m;
}

}  // namespace kloo
