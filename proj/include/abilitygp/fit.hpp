#pragma once

#include <vector>

#include "abilitygp/model.hpp"
#include "abilitygp/sampler.hpp"

namespace abilitygp {

// Posterior sample of the hyperparameters: unconstrained states, the
// materialized constrained parameters per draw, and sampler diagnostics.
struct PosteriorDraws {
    Eigen::MatrixXd unconstrained;     // M x D
    std::vector<HyperParams> params;   // M materialized states
    Eigen::VectorXd lp;                // target log density per draw
    McmcResult mcmc;
    ParamLayout layout;
    std::vector<std::string> expert_names;

    Eigen::Index size() const { return unconstrained.rows(); }
};

// Algorithm step 1: sample the marginalized hyperparameter posterior with HMC
// (or the random-walk fallback when use_rwm is set).
PosteriorDraws fit_panel(const TransformedPanel& panel, const PriorConfig& prior,
                         const HmcConfig& cfg, int threads = 1, bool use_rwm = false);

}  // namespace abilitygp
