#include "abilitygp/pool.hpp"

#include <cmath>
#include <limits>

namespace abilitygp {

namespace {

void check_psi(const Eigen::VectorXd& psi) {
    if (psi.size() < 1) throw ValidationError("pool: psi must have at least one entry");
    if (!psi.allFinite() || (psi.array() < 0.0).any()) {
        throw ValidationError("pool: psi entries must be finite and nonnegative");
    }
}

}  // namespace

std::string to_string(PoolScheme scheme) {
    switch (scheme) {
        case PoolScheme::natural: return "natural";
        case PoolScheme::selection: return "selection";
        case PoolScheme::softmax: return "softmax";
        case PoolScheme::equal: return "equal";
    }
    return "unknown";
}

PoolWeights natural_weights(const Eigen::VectorXd& psi) {
    check_psi(psi);
    return {psi, PoolScheme::natural, std::nullopt};
}

PoolWeights selection_weights(const Eigen::VectorXd& psi) {
    check_psi(psi);
    Eigen::Index best = 0;
    psi.maxCoeff(&best);  // maxCoeff reports the first maximum
    Eigen::VectorXd w = Eigen::VectorXd::Zero(psi.size());
    w(best) = 1.0;
    return {std::move(w), PoolScheme::selection, std::nullopt};
}

PoolWeights softmax_weights(const Eigen::VectorXd& psi, double c) {
    check_psi(psi);
    if (!(c >= 0.0) || !std::isfinite(c)) {
        throw ValidationError("softmax_weights: discrimination factor must be finite and nonnegative");
    }
    const Eigen::ArrayXd shifted = c * (psi.array() - psi.maxCoeff());
    Eigen::VectorXd w = shifted.exp().matrix();
    w /= w.sum();
    return {std::move(w), PoolScheme::softmax, c};
}

PoolWeights equal_weights(Eigen::Index K) {
    if (K < 1) throw ValidationError("equal_weights: need at least one expert");
    return {Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K)), PoolScheme::equal,
            std::nullopt};
}

double pooled_log_score(const PoolWeights& weights, const Eigen::VectorXd& logscores) {
    const Eigen::Index K = weights.w.size();
    if (logscores.size() != K) {
        throw ValidationError("pooled_log_score: weight and score lengths differ");
    }
    if ((weights.w.array() < 0.0).any() || std::abs(weights.w.sum() - 1.0) > 1e-9) {
        throw ValidationError("pooled_log_score: weights must be a probability vector");
    }
    double max_term = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
        if (weights.w(k) > 0.0) {
            max_term = std::max(max_term, std::log(weights.w(k)) + logscores(k));
        }
    }
    double acc = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
        if (weights.w(k) > 0.0) {
            acc += std::exp(std::log(weights.w(k)) + logscores(k) - max_term);
        }
    }
    return max_term + std::log(acc);
}

std::vector<BacktestRecord> dynamic_backtest(const ScorePanel& panel,
                                             const Eigen::MatrixXd& psi_series,
                                             const std::vector<double>& c_grid, int warmup) {
    if (c_grid.empty()) throw ValidationError("dynamic_backtest: empty discrimination grid");
    if (warmup < 1) throw ValidationError("dynamic_backtest: warmup must be at least 1");
    const Eigen::Index T = panel.n();
    const Eigen::Index K = panel.K();
    if (psi_series.rows() != T || psi_series.cols() != K) {
        throw ValidationError("dynamic_backtest: psi series must align with the panel (" +
                              std::to_string(T) + " x " + std::to_string(K) + ")");
    }

    // Cumulative realized pooled score per grid value over the past.
    std::vector<double> grid_score(c_grid.size(), 0.0);
    std::vector<BacktestRecord> records;
    records.reserve(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        double chosen = 0.0;
        if (t >= warmup) {
            std::size_t best = 0;
            for (std::size_t g = 1; g < c_grid.size(); ++g) {
                if (grid_score[g] > grid_score[best] ||
                    (grid_score[g] == grid_score[best] && c_grid[g] < c_grid[best])) {
                    best = g;
                }
            }
            chosen = c_grid[best];
        }
        BacktestRecord rec;
        rec.t = static_cast<int>(t);
        rec.psi = psi_series.row(t);
        rec.c = chosen;
        const PoolWeights w = softmax_weights(rec.psi, chosen);
        rec.weights = w.w;
        rec.logscores = panel.L.row(t);
        rec.pooled_log_score = pooled_log_score(w, rec.logscores);
        records.push_back(std::move(rec));

        for (std::size_t g = 0; g < c_grid.size(); ++g) {
            grid_score[g] += pooled_log_score(softmax_weights(psi_series.row(t), c_grid[g]),
                                              panel.L.row(t));
        }
    }
    return records;
}

}  // namespace abilitygp
