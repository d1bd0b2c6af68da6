#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abilitygp/fit.hpp"
#include "abilitygp/panel.hpp"
#include "abilitygp/pool.hpp"
#include "abilitygp/sampler.hpp"
#include "abilitygp/sim.hpp"

namespace abilitygp::io {

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

std::uint64_t fnv1a_hash(const std::string& data);

// Panel CSV schema: obs_id, z_1..z_P, ls_<expert> per expert, a_<expert>
// optional; missing a columns default to zero.
ScorePanel read_panel_csv(const std::string& path);
void write_panel_csv(const std::string& path, const ScorePanel& panel);

struct QueryTable {
    Eigen::MatrixXd Z;  // rows x P
    Eigen::MatrixXd A;  // rows x K, zero when absent
};

// Query CSV: z_1..z_P with optional a_<expert> columns.
QueryTable read_queries_csv(const std::string& path, const std::vector<std::string>& experts,
                            Eigen::Index P);

// psi series CSV: one psi_<expert> column per expert, rows in time order.
Eigen::MatrixXd read_psi_csv(const std::string& path, const std::vector<std::string>& experts);

void write_draws_csv(const std::string& path, const PosteriorDraws& draws);
// Noise correlations are detected from the header: absent omega_noise columns
// mean the fit used a diagonal noise covariance.
std::vector<HyperParams> read_draws_csv(const std::string& path,
                                        const std::vector<std::string>& experts, Eigen::Index P);

struct RunConfig {
    std::string panel_path;
    std::string draws_path;
    std::string queries_path;
    std::string psi_path;
    PriorConfig prior;
    HmcConfig sampler;
    std::string algorithm = "hmc";
    double pool_c = 2.0;
    std::vector<double> c_grid;
    int pool_warmup = 10;
    SimConfig sim;
    std::vector<double> sim_arms{0.7, 0.0};
    std::string sim_estimator = "gaussian";
    std::string out_dir = "out";
    bool dump_ability_draws = false;
    std::uint64_t seed = 0;
    int threads = 1;

    RunConfig();

    StudySettings study_settings() const;
    // Canonical serialization of the effective configuration; hashed into the
    // run manifest.
    std::string canonical_json() const;
};

// Strict parse: unknown keys anywhere are rejected.
RunConfig load_config(const std::string& path);

void write_diagnostics_json(const std::string& path, const McmcResult& mcmc,
                            const std::vector<std::string>& coordinate_names,
                            const std::string& algorithm);

void write_manifest_json(const std::string& path, const std::string& command,
                         const RunConfig& config,
                         const std::vector<std::pair<std::string, std::string>>& extra);

}  // namespace abilitygp::io
