#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "abilitygp/target.hpp"

namespace abilitygp {

struct HmcConfig {
    int n_chains = 4;
    int n_warmup = 500;
    int n_draws = 500;
    double target_accept = 0.8;
    int max_leapfrog = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ChainDiagnostics {
    double accept_rate = 0.0;  // mean Metropolis statistic after warmup
    double step_size = 0.0;    // adapted step size (proposal scale for RWM)
    int divergences = 0;       // post-warmup divergent transitions
};

struct McmcResult {
    // Post-warmup draws, chains stacked in order: row c * n_draws + m.
    Eigen::MatrixXd draws;
    Eigen::VectorXd logp;  // target log density per draw
    std::vector<ChainDiagnostics> chains;
    Eigen::VectorXd split_rhat;
    Eigen::VectorXd bulk_ess;
    std::vector<std::string> warnings;

    double divergence_rate() const;
};

// Dynamic-length HMC: trajectory doubling with multinomial selection of the
// next state, dual-averaging step-size adaptation toward target_accept and
// diagonal mass-matrix adaptation during warmup. Chains are independent and
// deterministic given (seed, chain index), so results do not depend on the
// thread count.
McmcResult hmc_sample(const ValueGradFn& target, Eigen::Index dim, const HmcConfig& cfg,
                      int threads = 1);

// Gradient-free fallback: Gaussian random-walk Metropolis with the proposal
// scale adapted toward target_accept during warmup.
McmcResult rwm_sample(const ValueFn& target, Eigen::Index dim, const HmcConfig& cfg,
                      int threads = 1);

// Split-chain potential scale reduction per coordinate. Coordinates with zero
// variance everywhere return 1.0 by convention.
Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains);

// Bulk effective sample size per coordinate (rank-normalized split chains,
// paired autocorrelation sums).
Eigen::VectorXd bulk_ess(const std::vector<Eigen::MatrixXd>& chains);

// One phase-space state; exposed so the integrator can be tested directly.
struct PhaseState {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double logp = 0.0;
};

void leapfrog(const ValueGradFn& target, PhaseState& state, double step,
              const Eigen::VectorXd& inv_mass);

double hamiltonian(const PhaseState& state, const Eigen::VectorXd& inv_mass);

}  // namespace abilitygp
