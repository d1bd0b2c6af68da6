#include "abilitygp/fit.hpp"

namespace abilitygp {

PosteriorDraws fit_panel(const TransformedPanel& panel, const PriorConfig& prior,
                         const HmcConfig& cfg, int threads, bool use_rwm) {
    LogPosterior target(panel, prior);
    const Eigen::Index dim = target.dim();

    McmcResult mcmc;
    if (use_rwm) {
        mcmc = rwm_sample([&](const Eigen::VectorXd& u) { return target.value(u); }, dim, cfg,
                          threads);
    } else {
        mcmc = hmc_sample([&](const Eigen::VectorXd& u) { return target.value_grad(u); }, dim, cfg,
                          threads);
    }

    PosteriorDraws out;
    out.layout = target.layout();
    out.expert_names = panel.expert_names;
    out.unconstrained = std::move(mcmc.draws);
    out.lp = std::move(mcmc.logp);
    mcmc.draws.resize(0, 0);
    mcmc.logp.resize(0);
    out.mcmc = std::move(mcmc);
    const Eigen::Index M = out.unconstrained.rows();
    out.params.reserve(static_cast<std::size_t>(M));
    for (Eigen::Index j = 0; j < M; ++j) {
        const Constrained c = constrain(out.unconstrained.row(j).transpose(), target.layout(), prior);
        out.params.push_back(c.params);
    }
    return out;
}

}  // namespace abilitygp
