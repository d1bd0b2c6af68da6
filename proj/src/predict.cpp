#include "abilitygp/predict.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "abilitygp/kernels.hpp"
#include "abilitygp/stats.hpp"

namespace abilitygp {

namespace {

Eigen::VectorXd stack_response(const TransformedPanel& panel) {
    const Eigen::Index n = panel.n();
    const Eigen::Index K = panel.K();
    Eigen::VectorXd y(K * n);
    for (Eigen::Index k = 0; k < K; ++k) y.segment(k * n, n) = panel.Lpp.col(k);
    return y;
}

// Cross covariance between the K outputs at z_star (rows) and the expert-major
// training stack (columns).
Eigen::MatrixXd query_cross_cov(const Eigen::VectorXd& z_star, const Eigen::MatrixXd& Z,
                                const CrossCovSpec& spec) {
    return cross_cov(z_star.transpose(), Z, spec);
}

}  // namespace

LatentPosterior latent_posterior_at(const Eigen::VectorXd& z_star, const TransformedPanel& panel,
                                    const HyperParams& h) {
    const Eigen::Index n = panel.n();
    const Eigen::Index K = panel.K();
    if (z_star.size() != panel.P()) {
        throw ValidationError("latent_posterior_at: query point dimension does not match the panel");
    }
    if (h.K() != K || h.P() != panel.P()) {
        throw ValidationError("latent_posterior_at: hyperparameters do not match the panel");
    }

    const CrossCovSpec spec = h.cross_cov_spec();
    const Eigen::MatrixXd Sigma = h.noise_cov();
    const CholFactor factor = chol_with_jitter(marginal_cov(panel.Z, spec, Sigma));

    Eigen::VectorXd mu(K * n);
    for (Eigen::Index k = 0; k < K; ++k) mu.segment(k * n, n).setConstant(h.mean(k));
    const Eigen::VectorXd r = stack_response(panel) - mu;

    const Eigen::MatrixXd Gq = query_cross_cov(z_star, panel.Z, spec);  // K x Kn
    const Eigen::MatrixXd prior = cross_cov(z_star.transpose(), z_star.transpose(), spec);

    LatentPosterior out;
    out.mean = h.mean + Gq * factor.solve(r);
    Eigen::MatrixXd cov = prior - Gq * factor.solve(Gq.transpose());
    cov = 0.5 * (cov + cov.transpose());

    // Clip negative dust from the subtraction.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double floor = -1e-8 * std::max(0.0, cov.trace()) / static_cast<double>(K);
    if (eig.eigenvalues().minCoeff() < 0.0) {
        if (eig.eigenvalues().minCoeff() < floor) {
            throw NumericalError("latent_posterior_at: conditional covariance is not PSD "
                                 "(min eigenvalue " +
                                 std::to_string(eig.eigenvalues().minCoeff()) + ")");
        }
        out.clipped = true;
        const Eigen::VectorXd fixed = eig.eigenvalues().cwiseMax(0.0);
        cov = eig.eigenvectors() * fixed.asDiagonal() * eig.eigenvectors().transpose();
    }
    out.cov = cov;
    return out;
}

AbilityDraws sample_ability(const Eigen::VectorXd& z_star, const Eigen::VectorXd& a_star,
                            const TransformedPanel& panel, const std::vector<HyperParams>& draws,
                            std::uint64_t seed) {
    if (draws.empty()) throw ValidationError("sample_ability: no hyperparameter draws");
    const Eigen::Index K = panel.K();
    if (a_star.size() != K) {
        throw ValidationError("sample_ability: a_star must have one entry per expert");
    }
    AbilityDraws out;
    out.z_star = z_star;
    out.a_star = a_star;
    out.eta.resize(static_cast<Eigen::Index>(draws.size()), K);
    for (std::size_t j = 0; j < draws.size(); ++j) {
        const HyperParams& h = draws[j];
        const LatentPosterior post = latent_posterior_at(z_star, panel, h);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.cov);
        const Eigen::MatrixXd root =
            eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        Rng rng(seed, j);
        Eigen::VectorXd white(K);
        for (Eigen::Index k = 0; k < K; ++k) white(k) = rng.normal();
        const Eigen::VectorXd f = post.mean + root * white;
        const Eigen::MatrixXd Sigma = h.noise_cov();
        for (Eigen::Index k = 0; k < K; ++k) {
            out.eta(static_cast<Eigen::Index>(j), k) = elpd_from_latent(a_star(k), f(k), Sigma(k, k));
        }
    }
    return out;
}

Eigen::VectorXd psi(const Eigen::MatrixXd& eta) {
    const Eigen::Index M = eta.rows();
    const Eigen::Index K = eta.cols();
    if (M < 1) throw ValidationError("psi: need at least one draw");
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(K);
    for (Eigen::Index j = 0; j < M; ++j) {
        const double best = eta.row(j).maxCoeff();
        Eigen::Index n_tied = 0;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (eta(j, k) == best) ++n_tied;
        }
        const double share = 1.0 / static_cast<double>(n_tied);
        for (Eigen::Index k = 0; k < K; ++k) {
            if (eta(j, k) == best) counts(k) += share;
        }
    }
    return counts / static_cast<double>(M);
}

double prob_second_best_gaussian(double mu1, double mu2, double sd1, double sd2, double rho) {
    if (!(sd1 > 0.0) || !(sd2 > 0.0)) {
        throw std::domain_error("prob_second_best_gaussian: standard deviations must be positive");
    }
    if (!(std::abs(rho) < 1.0)) {
        throw std::domain_error("prob_second_best_gaussian: |rho| must be below 1");
    }
    const double var_diff = sd1 * sd1 + sd2 * sd2 - 2.0 * rho * sd1 * sd2;
    if (var_diff <= 0.0) {
        if (mu2 > mu1) return 1.0;
        if (mu2 < mu1) return 0.0;
        return 0.5;
    }
    return normal_cdf((mu2 - mu1) / std::sqrt(var_diff));
}

}  // namespace abilitygp
