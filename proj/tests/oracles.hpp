// Test-only reference implementations, kept independent of the library paths
// they check.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

namespace oracles {

// Central finite differences of a scalar function.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& u, double h = 1e-5) {
    Eigen::VectorXd g(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        Eigen::VectorXd up = u;
        Eigen::VectorXd um = u;
        up(i) += h;
        um(i) -= h;
        g(i) = (f(up) - f(um)) / (2.0 * h);
    }
    return g;
}

inline double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& lengthscales) {
    double q = 0.0;
    for (Eigen::Index p = 0; p < a.size(); ++p) {
        const double d = (a(p) - b(p)) / lengthscales(p);
        q += d * d;
    }
    return std::exp(-0.5 * q);
}

// Scalar GP log marginal likelihood via direct dense assembly. jitter_abs is
// added to the diagonal so callers can reproduce the covariance actually
// factorized by a joint computation.
inline double scalar_gp_lml(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& lengthscales, double tau, double sigma,
                            double mean, double jitter_abs) {
    const Eigen::Index n = Z.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            K(i, j) = tau * tau * se_kernel(Z.row(i), Z.row(j), lengthscales);
        }
    }
    K.diagonal().array() += sigma * sigma + jitter_abs;
    const Eigen::VectorXd r = y - Eigen::VectorXd::Constant(n, mean);
    const Eigen::LLT<Eigen::MatrixXd> llt(K);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * r.dot(llt.solve(r)) - 0.5 * log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

// Joint Gaussian log density assembled entry by entry from the covariance
// definition cov(f_k(z_i), f_l(z_j)) = sum_s C(s,k) C(s,l) g_s(z_i, z_j),
// plus noise Sigma between experts at equal observations.
struct DenseJoint {
    Eigen::MatrixXd cov;   // Kn x Kn, expert-major, no jitter
    Eigen::VectorXd mean;  // Kn
};

inline DenseJoint dense_joint(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& lengthscales,
                              const Eigen::MatrixXd& C, const Eigen::MatrixXd& Sigma,
                              const Eigen::VectorXd& means) {
    const Eigen::Index n = Z.rows();
    const Eigen::Index K = C.cols();
    DenseJoint out;
    out.cov.resize(K * n, K * n);
    out.mean.resize(K * n);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            out.mean(k * n + i) = means(k);
            for (Eigen::Index l = 0; l < K; ++l) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    double v = 0.0;
                    for (Eigen::Index s = 0; s < K; ++s) {
                        v += C(s, k) * C(s, l) * se_kernel(Z.row(i), Z.row(j), lengthscales.col(s));
                    }
                    if (i == j) v += Sigma(k, l);
                    out.cov(k * n + i, l * n + j) = v;
                }
            }
        }
    }
    return out;
}

inline double dense_gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                    const Eigen::MatrixXd& cov) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::VectorXd d = x - mean;
    return -0.5 * d.dot(llt.solve(d)) - 0.5 * log_det -
           0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI);
}

inline double sample_sd(const Eigen::VectorXd& x) {
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

// Monte Carlo standard error of the mean.
inline double mcse(const Eigen::VectorXd& x) {
    return sample_sd(x) / std::sqrt(static_cast<double>(x.size()));
}

}  // namespace oracles
