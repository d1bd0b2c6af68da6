#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "abilitygp/panel.hpp"

namespace abilitygp {

enum class PoolScheme { natural, selection, softmax, equal };

std::string to_string(PoolScheme scheme);

// Nonnegative forecast-combination weights summing to one.
struct PoolWeights {
    Eigen::VectorXd w;
    PoolScheme scheme = PoolScheme::equal;
    std::optional<double> c;
};

PoolWeights natural_weights(const Eigen::VectorXd& psi);
// One-hot at the largest psi; ties go to the lowest expert index.
PoolWeights selection_weights(const Eigen::VectorXd& psi);
// w_k proportional to exp(c * psi_k); c = 0 gives equal weights, large c
// approaches selection.
PoolWeights softmax_weights(const Eigen::VectorXd& psi, double c);
PoolWeights equal_weights(Eigen::Index K);

// Log predictive density of the linear pool: log sum_k w_k exp(l_k), summed
// over the experts with positive weight only, stable for very small scores.
double pooled_log_score(const PoolWeights& weights, const Eigen::VectorXd& logscores);

struct BacktestRecord {
    int t = 0;
    Eigen::VectorXd psi;
    double c = 0.0;
    Eigen::VectorXd weights;
    Eigen::VectorXd logscores;       // realized per-expert log scores at t
    double pooled_log_score = 0.0;
};

// Walk the held-out panel in time order, at each step choosing the
// discrimination factor from c_grid that maximizes the cumulative realized
// pooled log score over the past; the first `warmup` steps use c = 0.
std::vector<BacktestRecord> dynamic_backtest(const ScorePanel& panel,
                                             const Eigen::MatrixXd& psi_series,
                                             const std::vector<double>& c_grid, int warmup);

}  // namespace abilitygp
