#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <vector>

#include "abilitygp/panel.hpp"

namespace abilitygp {

// Squared exponential kernel with one length scale per input dimension.
// Large length scales switch the corresponding input off.
struct SeArdKernel {
    Eigen::VectorXd lengthscales;  // P positive entries
    double signal_sd = 1.0;

    SeArdKernel() = default;
    SeArdKernel(Eigen::VectorXd lengthscales, double signal_sd = 1.0);
};

double se_ard(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j, const SeArdKernel& kernel);

// Gram matrix of one kernel: n_a x n_b.
Eigen::MatrixXd gram(const Eigen::MatrixXd& Z_a, const Eigen::MatrixXd& Z_b,
                     const SeArdKernel& kernel);

// Covariance structure of K correlated outputs built from K independent
// latent processes mixed by C: cov(f_k(z), f_l(z')) = sum_s C(s,k) C(s,l) g_s(z, z').
struct CrossCovSpec {
    std::vector<SeArdKernel> kernels;  // one per latent process
    Eigen::MatrixXd mixing;            // K x K matrix C

    CrossCovSpec(std::vector<SeArdKernel> kernels, Eigen::MatrixXd mixing);

    Eigen::Index K() const { return mixing.cols(); }
};

// Cross-covariance of the stacked outputs at Z_a against Z_b. Layout is
// expert-major: row index k * n_a + i corresponds to expert k at Z_a row i,
// matching column-stacking of an n x K response matrix.
Eigen::MatrixXd cross_cov(const Eigen::MatrixXd& Z_a, const Eigen::MatrixXd& Z_b,
                          const CrossCovSpec& spec);

// cross_cov(Z, Z, spec) + Sigma (x) I_n under the same expert-major layout.
Eigen::MatrixXd marginal_cov(const Eigen::MatrixXd& Z, const CrossCovSpec& spec,
                             const Eigen::MatrixXd& Sigma);

struct CholFactor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;  // amount actually added to the diagonal
    double log_det = 0.0;

    template <typename Derived>
    auto solve(const Eigen::MatrixBase<Derived>& b) const {
        return llt.solve(b);
    }
};

// Relative jitter always added before factorization, and the fallback level
// retried once if the first factorization fails.
inline constexpr double kJitterRel = 1e-8;
inline constexpr double kJitterRelRetry = 1e-6;

// Cholesky of a symmetric PD matrix with diagonal jitter scaled by the mean
// diagonal. Throws NumericalError with condition diagnostics if the retry
// also fails.
CholFactor chol_with_jitter(const Eigen::MatrixXd& A);

}  // namespace abilitygp
