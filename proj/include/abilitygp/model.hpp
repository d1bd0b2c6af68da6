#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "abilitygp/kernels.hpp"
#include "abilitygp/panel.hpp"
#include "abilitygp/target.hpp"

namespace abilitygp {

struct PriorConfig {
    double lengthscale_upper = 100.0;        // open upper bound for all length scales
    double lengthscale_cauchy_scale = 5.0;   // Cauchy(0, scale) truncated to (0, upper)
    double lkj_eta = 3.0;                    // shared by signal and noise correlations
    double scale_prior_sd = 1.0;             // half-normal sd for tau and sigma_eps
    double mean_prior_sd = 10.0;             // normal sd for the per-expert means
    bool diagonal_noise = false;             // restrict Sigma to a diagonal matrix
};

// One posterior state of every model hyperparameter in constrained space.
struct HyperParams {
    Eigen::MatrixXd lengthscales;  // P x K, column k holds expert k's length scales
    Eigen::VectorXd mean;          // K constant means on the transformed-score scale
    Eigen::VectorXd tau;           // K signal scales
    Eigen::MatrixXd omega_sig;     // K x K signal correlation
    Eigen::VectorXd sigma_eps;     // K noise scales
    Eigen::MatrixXd omega_noise;   // K x K noise correlation

    Eigen::Index K() const { return mean.size(); }
    Eigen::Index P() const { return lengthscales.rows(); }

    // Upper-triangular C with C^T C = diag(tau) omega_sig diag(tau).
    Eigen::MatrixXd mixing() const;
    // Sigma = diag(sigma_eps) omega_noise diag(sigma_eps).
    Eigen::MatrixXd noise_cov() const;
    // Unit-signal kernels (one per latent process) mixed by C.
    CrossCovSpec cross_cov_spec() const;
};

// Fixed index map between the flat unconstrained vector and the constrained
// parameter blocks.
struct ParamLayout {
    Eigen::Index K = 0;
    Eigen::Index P = 0;
    bool diagonal_noise = false;

    Eigen::Index n_corr() const { return K * (K - 1) / 2; }
    Eigen::Index dim() const {
        return K * P + 3 * K + n_corr() + (diagonal_noise ? 0 : n_corr());
    }

    Eigen::Index lengthscale(Eigen::Index p, Eigen::Index k) const { return k * P + p; }
    Eigen::Index mean(Eigen::Index k) const { return K * P + k; }
    Eigen::Index log_tau(Eigen::Index k) const { return K * P + K + k; }
    // Canonical partial correlation coordinate for pair (i, j), i < j,
    // stored column-major over the strict upper triangle.
    Eigen::Index z_sig(Eigen::Index i, Eigen::Index j) const {
        return K * P + 2 * K + j * (j - 1) / 2 + i;
    }
    Eigen::Index log_sigma(Eigen::Index k) const { return K * P + 2 * K + n_corr() + k; }
    Eigen::Index z_noise(Eigen::Index i, Eigen::Index j) const {
        return K * P + 3 * K + n_corr() + j * (j - 1) / 2 + i;
    }

    // Constrained parameter names, one per draws.csv column.
    std::vector<std::string> constrained_names(const std::vector<std::string>& experts) const;
    // Names of the unconstrained coordinates, used in diagnostics.
    std::vector<std::string> coordinate_names(const std::vector<std::string>& experts) const;
};

// Result of mapping an unconstrained vector into constrained space. The
// Cholesky factors and partial correlations are kept for gradient chains.
struct Constrained {
    HyperParams params;
    double log_jacobian = 0.0;
    Eigen::MatrixXd chol_sig;    // lower triangular, omega_sig = L L^T
    Eigen::MatrixXd chol_noise;  // lower triangular, omega_noise = L L^T
    Eigen::VectorXd z_sig;       // canonical partial correlations, layout order
    Eigen::VectorXd z_noise;
};

Constrained constrain(const Eigen::VectorXd& u, const ParamLayout& layout,
                      const PriorConfig& prior);
Eigen::VectorXd unconstrain(const HyperParams& h, const ParamLayout& layout,
                            const PriorConfig& prior);

// Lower-triangular factor L with unit-norm rows built from canonical partial
// correlations z (strict upper triangle, column-major); L L^T is a
// correlation matrix. Inverse of corr_to_cpc.
Eigen::MatrixXd cpc_to_corr_chol(const Eigen::VectorXd& z, Eigen::Index K);
Eigen::VectorXd corr_to_cpc(const Eigen::MatrixXd& omega);

// log c_K(eta) such that the LKJ density is exp(log c + (eta-1) log det omega).
double lkj_log_normalizer(Eigen::Index K, double eta);
double lkj_log_pdf(const Eigen::MatrixXd& omega, double eta);

// Joint log prior density of all hyperparameters, normalizing constants
// included; -inf outside the support.
double log_prior(const HyperParams& h, const PriorConfig& prior);

// Log posterior of the hyperparameters with the latent surfaces integrated
// out: Gaussian log marginal likelihood of the stacked transformed scores
// plus log_prior.
double log_marginal_posterior(const TransformedPanel& panel, const HyperParams& h,
                              const PriorConfig& prior);

// Marginal posterior density over the unconstrained space, including the
// transform's log Jacobian; this is the HMC target.
class LogPosterior {
  public:
    LogPosterior(TransformedPanel panel, PriorConfig prior);

    Eigen::Index dim() const { return layout_.dim(); }
    const ParamLayout& layout() const { return layout_; }
    const PriorConfig& prior() const { return prior_; }
    const TransformedPanel& panel() const { return panel_; }

    double value(const Eigen::VectorXd& u) const;
    TargetEval value_grad(const Eigen::VectorXd& u) const;

    // Likelihood + prior at a constrained point (no Jacobian term).
    double log_marginal_posterior(const HyperParams& h) const;

  private:
    double likelihood(const HyperParams& h, const Constrained* chain, Eigen::VectorXd* grad) const;

    TransformedPanel panel_;
    PriorConfig prior_;
    ParamLayout layout_;
    Eigen::VectorXd y_;                      // expert-major stack of Lpp
    std::vector<Eigen::MatrixXd> sq_dist_;   // per covariate squared distances
};

// Gradient of log_marginal_posterior(constrain(u)) plus the Jacobian
// gradient, with respect to the unconstrained coordinates.
Eigen::VectorXd grad_log_marginal_posterior(const TransformedPanel& panel, const Eigen::VectorXd& u,
                                            const PriorConfig& prior);

}  // namespace abilitygp
