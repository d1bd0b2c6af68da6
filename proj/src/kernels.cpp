#include "abilitygp/kernels.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace abilitygp {

SeArdKernel::SeArdKernel(Eigen::VectorXd ls, double sd) : lengthscales(std::move(ls)), signal_sd(sd) {
    if (lengthscales.size() < 1 || !(lengthscales.array() > 0.0).all() ||
        !lengthscales.allFinite()) {
        throw ValidationError("se_ard kernel: length scales must be positive and finite");
    }
    if (!(signal_sd > 0.0) || !std::isfinite(signal_sd)) {
        throw ValidationError("se_ard kernel: signal sd must be positive and finite");
    }
}

double se_ard(const Eigen::VectorXd& z_i, const Eigen::VectorXd& z_j, const SeArdKernel& kernel) {
    if (z_i.size() != kernel.lengthscales.size() || z_j.size() != kernel.lengthscales.size()) {
        throw ValidationError("se_ard: input dimension does not match the kernel's length scales");
    }
    const double q = ((z_i - z_j).array() / kernel.lengthscales.array()).square().sum();
    return kernel.signal_sd * kernel.signal_sd * std::exp(-0.5 * q);
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& Z_a, const Eigen::MatrixXd& Z_b,
                     const SeArdKernel& kernel) {
    const Eigen::Index P = kernel.lengthscales.size();
    if (Z_a.cols() != P || Z_b.cols() != P) {
        throw ValidationError("gram: covariate dimension does not match the kernel's length scales");
    }
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(Z_a.rows(), Z_b.rows());
    for (Eigen::Index p = 0; p < P; ++p) {
        const double inv_l = 1.0 / kernel.lengthscales(p);
        const Eigen::VectorXd a = Z_a.col(p) * inv_l;
        const Eigen::VectorXd b = Z_b.col(p) * inv_l;
        q += a.array().square().matrix() * Eigen::RowVectorXd::Ones(b.size());
        q += Eigen::VectorXd::Ones(a.size()) * b.array().square().matrix().transpose();
        q.noalias() -= 2.0 * a * b.transpose();
    }
    const double s2 = kernel.signal_sd * kernel.signal_sd;
    return s2 * (-0.5 * q.array().max(0.0)).exp().matrix();
}

CrossCovSpec::CrossCovSpec(std::vector<SeArdKernel> kernels_, Eigen::MatrixXd mixing_)
    : kernels(std::move(kernels_)), mixing(std::move(mixing_)) {
    const Eigen::Index K = mixing.cols();
    if (mixing.rows() != K || K < 1) {
        throw ValidationError("cross-cov spec: mixing matrix must be square");
    }
    if (static_cast<Eigen::Index>(kernels.size()) != K) {
        throw ValidationError("cross-cov spec: need one kernel per latent process");
    }
    const Eigen::Index P = kernels.front().lengthscales.size();
    for (const auto& k : kernels) {
        if (k.lengthscales.size() != P) {
            throw ValidationError("cross-cov spec: kernels must share the covariate dimension");
        }
    }
    const auto sv = mixing.jacobiSvd().singularValues();
    if (sv(sv.size() - 1) <= 1e-10) {
        throw ValidationError("cross-cov spec: mixing matrix is rank deficient (smallest singular value " +
                              std::to_string(sv(sv.size() - 1)) + ")");
    }
}

Eigen::MatrixXd cross_cov(const Eigen::MatrixXd& Z_a, const Eigen::MatrixXd& Z_b,
                          const CrossCovSpec& spec) {
    const Eigen::Index K = spec.K();
    const Eigen::Index na = Z_a.rows();
    const Eigen::Index nb = Z_b.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(K * na, K * nb);
    for (Eigen::Index s = 0; s < K; ++s) {
        const Eigen::MatrixXd Gs = gram(Z_a, Z_b, spec.kernels[static_cast<std::size_t>(s)]);
        for (Eigen::Index k = 0; k < K; ++k) {
            if (spec.mixing(s, k) == 0.0) continue;
            for (Eigen::Index l = 0; l < K; ++l) {
                const double w = spec.mixing(s, k) * spec.mixing(s, l);
                if (w == 0.0) continue;
                out.block(k * na, l * nb, na, nb) += w * Gs;
            }
        }
    }
    return out;
}

Eigen::MatrixXd marginal_cov(const Eigen::MatrixXd& Z, const CrossCovSpec& spec,
                             const Eigen::MatrixXd& Sigma) {
    const Eigen::Index K = spec.K();
    const Eigen::Index n = Z.rows();
    if (Sigma.rows() != K || Sigma.cols() != K) {
        throw ValidationError("marginal_cov: noise covariance must be K x K");
    }
    if (!Sigma.isApprox(Sigma.transpose(), 1e-12)) {
        throw ValidationError("marginal_cov: noise covariance must be symmetric");
    }
    Eigen::MatrixXd out = cross_cov(Z, Z, spec);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index l = 0; l < K; ++l) {
            out.block(k * n, l * n, n, n).diagonal().array() += Sigma(k, l);
        }
    }
    return out;
}

CholFactor chol_with_jitter(const Eigen::MatrixXd& A) {
    const double mean_diag = A.diagonal().mean();
    CholFactor out;
    for (double rel : {kJitterRel, kJitterRelRetry}) {
        const double jitter = rel * mean_diag;
        Eigen::MatrixXd M = A;
        M.diagonal().array() += jitter;
        out.llt.compute(M);
        if (out.llt.info() == Eigen::Success) {
            out.jitter = jitter;
            out.log_det = 2.0 * out.llt.matrixLLT().diagonal().array().log().sum();
            return out;
        }
    }
    std::ostringstream msg;
    msg << "cholesky failed after jitter retries (size " << A.rows() << ", mean diagonal "
        << mean_diag << ", min diagonal " << A.diagonal().minCoeff() << ", max off-diagonal "
        << (A - Eigen::MatrixXd(A.diagonal().asDiagonal())).cwiseAbs().maxCoeff() << ")";
    throw NumericalError(msg.str());
}

}  // namespace abilitygp
