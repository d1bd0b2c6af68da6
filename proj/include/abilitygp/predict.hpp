#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "abilitygp/model.hpp"
#include "abilitygp/panel.hpp"

namespace abilitygp {

// Gaussian posterior of the K latent ability values at one query point.
struct LatentPosterior {
    Eigen::VectorXd mean;  // K
    Eigen::MatrixXd cov;   // K x K, PSD after cleanup
    bool clipped = false;  // negative eigenvalue dust was clipped to zero
};

LatentPosterior latent_posterior_at(const Eigen::VectorXd& z_star, const TransformedPanel& panel,
                                    const HyperParams& h);

// Joint draws of local expected log predictive density at one query point.
struct AbilityDraws {
    Eigen::MatrixXd eta;     // M x K
    Eigen::VectorXd z_star;  // P
    Eigen::VectorXd a_star;  // K
};

// One latent draw per hyperparameter draw, pushed through the third-moment
// identity eta_k = a*_k - f_k^3 - 3 f_k Sigma_kk. Draw j uses the random
// stream (seed, j), so draws can be generated concurrently.
AbilityDraws sample_ability(const Eigen::VectorXd& z_star, const Eigen::VectorXd& a_star,
                            const TransformedPanel& panel, const std::vector<HyperParams>& draws,
                            std::uint64_t seed);

// Posterior probability that each expert has the strictly highest ability;
// exact ties split their mass equally among the tied maxima.
Eigen::VectorXd psi(const Eigen::MatrixXd& eta);
inline Eigen::VectorXd psi(const AbilityDraws& ability) { return psi(ability.eta); }

// Closed-form P(eta_2 > eta_1) for a bivariate Gaussian with means mu1, mu2,
// standard deviations sd1, sd2 and correlation rho.
double prob_second_best_gaussian(double mu1, double mu2, double sd1, double sd2, double rho);

}  // namespace abilitygp
