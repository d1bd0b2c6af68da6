#include "abilitygp/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace abilitygp {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double moment_gaussian_log_density(const Eigen::MatrixXd& eta, const Eigen::VectorXd& x) {
    const Eigen::Index M = eta.rows();
    const Eigen::Index K = eta.cols();
    const Eigen::VectorXd mean = eta.colwise().mean();
    const Eigen::MatrixXd centered = eta.rowwise() - mean.transpose();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(M - 1);
    cov.diagonal().array() += 1e-8 * std::max(0.0, cov.trace()) / static_cast<double>(K);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("joint_truth_density: sample covariance is singular after ridge");
    }
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::VectorXd d = x - mean;
    const double quad = d.dot(llt.solve(d));
    return -0.5 * (static_cast<double>(K) * std::log(2.0 * M_PI) + log_det + quad);
}

double kde_log_density(const Eigen::MatrixXd& eta, const Eigen::VectorXd& x) {
    const Eigen::Index M = eta.rows();
    const Eigen::Index K = eta.cols();
    const Eigen::VectorXd mean = eta.colwise().mean();
    Eigen::VectorXd sd(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        sd(k) = std::sqrt((eta.col(k).array() - mean(k)).square().sum() /
                          static_cast<double>(M - 1));
        if (!(sd(k) > 0.0)) sd(k) = 1e-8;
    }
    const Eigen::VectorXd h = sd * std::pow(static_cast<double>(M), -1.0 / (static_cast<double>(K) + 4.0));
    double max_term = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd terms(M);
    for (Eigen::Index j = 0; j < M; ++j) {
        double t = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            const double z = (x(k) - eta(j, k)) / h(k);
            t += -0.5 * z * z - std::log(h(k)) - 0.5 * std::log(2.0 * M_PI);
        }
        terms(j) = t;
        max_term = std::max(max_term, t);
    }
    return max_term + std::log((terms.array() - max_term).exp().sum()) -
           std::log(static_cast<double>(M));
}

// Independent sub-streams per (arm, replicate, role).
std::uint64_t stream_id(int arm, int replicate, int role) {
    return (static_cast<std::uint64_t>(arm) << 40) ^
           (static_cast<std::uint64_t>(replicate) << 8) ^ static_cast<std::uint64_t>(role);
}

ScorePanel drop_row(const ScorePanel& panel, Eigen::Index row) {
    const Eigen::Index n = panel.n();
    Eigen::MatrixXd Z(n - 1, panel.P());
    Eigen::MatrixXd L(n - 1, panel.K());
    Eigen::Index out = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == row) continue;
        Z.row(out) = panel.Z.row(i);
        L.row(out) = panel.L.row(i);
        ++out;
    }
    return ScorePanel(std::move(Z), std::move(L), panel.expert_names);
}

ScorePanel single_expert_panel(const ScorePanel& panel, Eigen::Index k) {
    return ScorePanel(panel.Z, panel.L.col(k),
                      {panel.expert_names[static_cast<std::size_t>(k)]});
}

ReplicateResult run_replicate(const SimConfig& cfg, double correlation, int arm, int r,
                              const StudySettings& settings) {
    SimConfig dgp = cfg;
    dgp.z_correlation = correlation;
    Rng rng(cfg.seed, stream_id(arm, r, 0));
    const SimDataset data = gen_dataset(dgp, rng);

    ReplicateResult res;
    res.replicate = r;
    res.query_index = static_cast<int>(rng.integer(static_cast<std::uint64_t>(cfg.n)));
    const Eigen::VectorXd z_star = data.panel.Z.row(res.query_index);
    const Eigen::VectorXd eta_true = data.eta_true.row(res.query_index);
    const ScorePanel train = drop_row(data.panel, res.query_index);

    // Multi-output fit and joint density at the held-out point.
    HmcConfig multi_cfg = settings.sampler;
    multi_cfg.seed = splitmix64(cfg.seed ^ stream_id(arm, r, 1));
    const TransformedPanel tpanel = transform_scores(train);
    const PosteriorDraws multi = fit_panel(tpanel, settings.prior, multi_cfg);
    res.max_rhat_multi = multi.mcmc.split_rhat.maxCoeff();
    const AbilityDraws ability = sample_ability(
        z_star, Eigen::VectorXd::Zero(kSimExperts), tpanel, multi.params,
        splitmix64(cfg.seed ^ stream_id(arm, r, 2)));
    res.multi_score = joint_truth_density(ability, eta_true, settings.estimator);

    std::vector<double> l11, l21, l12, l22;
    for (const auto& h : multi.params) {
        l11.push_back(h.lengthscales(0, 0));
        l21.push_back(h.lengthscales(1, 0));
        l12.push_back(h.lengthscales(0, 1));
        l22.push_back(h.lengthscales(1, 1));
    }
    res.lengthscale_medians << median(l11), median(l21), median(l12), median(l22);

    // Independent single-output fits; the joint density is the product of the
    // marginals.
    res.single_score = 0.0;
    res.max_rhat_single = 0.0;
    for (Eigen::Index k = 0; k < kSimExperts; ++k) {
        HmcConfig single_cfg = settings.sampler;
        single_cfg.seed = splitmix64(cfg.seed ^ stream_id(arm, r, 3 + 2 * static_cast<int>(k)));
        const TransformedPanel tp = transform_scores(single_expert_panel(train, k));
        const PosteriorDraws fit = fit_panel(tp, settings.prior, single_cfg);
        res.max_rhat_single = std::max(res.max_rhat_single, fit.mcmc.split_rhat.maxCoeff());
        const AbilityDraws a = sample_ability(
            z_star, Eigen::VectorXd::Zero(1), tp, fit.params,
            splitmix64(cfg.seed ^ stream_id(arm, r, 4 + 2 * static_cast<int>(k))));
        res.single_score +=
            joint_truth_density(a, eta_true.segment(k, 1), settings.estimator);
    }

    res.converged = res.max_rhat_multi <= settings.rhat_threshold &&
                    res.max_rhat_single <= settings.rhat_threshold;
    return res;
}

ArmResult summarize_arm(double correlation, std::vector<ReplicateResult> rows) {
    ArmResult arm;
    arm.z_correlation = correlation;
    double multi_sum = 0.0;
    double single_sum = 0.0;
    int wins = 0;
    for (const auto& r : rows) {
        if (!r.converged) {
            ++arm.n_excluded;
            continue;
        }
        ++arm.n_used;
        multi_sum += r.multi_score;
        single_sum += r.single_score;
        wins += r.multi_score > r.single_score ? 1 : 0;
    }
    if (arm.n_used > 0) {
        arm.multi_mean = multi_sum / arm.n_used;
        arm.single_mean = single_sum / arm.n_used;
        arm.mean_paired_diff = arm.multi_mean - arm.single_mean;
        arm.multi_win_fraction = static_cast<double>(wins) / arm.n_used;
    }
    arm.replicates = std::move(rows);
    return arm;
}

}  // namespace

void SimConfig::validate() const {
    if (n < 1 || n_datasets < 1) throw ValidationError("sim config: counts must be positive");
    if (!(b > 0.0)) throw ValidationError("sim config: b must be positive");
    if (!(std::abs(z_correlation) < 1.0)) {
        throw ValidationError("sim config: |z_correlation| must be below 1");
    }
}

SimDataset gen_dataset(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = cfg.n;
    const double rho = cfg.z_correlation;
    Eigen::MatrixXd Z(n, kSimExperts);
    Eigen::MatrixXd L(n, kSimExperts);
    Eigen::MatrixXd truth(n, kSimExperts);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.normal();
        const double x2 = rng.normal();
        Z(i, 0) = x1;
        Z(i, 1) = rho * x1 + std::sqrt(1.0 - rho * rho) * x2;
        const double y = rng.normal();
        for (int k = 0; k < kSimExperts; ++k) {
            const double d = y - Z(i, k);
            L(i, k) = -cfg.b * d * d;
            truth(i, k) = -cfg.b * (1.0 + Z(i, k) * Z(i, k));
        }
    }
    SimDataset out{ScorePanel(std::move(Z), std::move(L), {"expert1", "expert2"}),
                   std::move(truth)};
    return out;
}

double joint_truth_density(const AbilityDraws& ability, const Eigen::VectorXd& eta_true,
                           DensityEstimator estimator) {
    const Eigen::Index M = ability.eta.rows();
    const Eigen::Index K = ability.eta.cols();
    if (M < K + 2) {
        throw ValidationError("joint_truth_density: need at least K + 2 draws");
    }
    if (eta_true.size() != K) {
        throw ValidationError("joint_truth_density: truth vector has the wrong length");
    }
    return estimator == DensityEstimator::moment_gaussian
               ? moment_gaussian_log_density(ability.eta, eta_true)
               : kde_log_density(ability.eta, eta_true);
}

StudyResult run_study(const SimConfig& cfg, const std::vector<double>& arm_correlations,
                      const StudySettings& settings) {
    cfg.validate();
    if (arm_correlations.empty()) {
        throw ValidationError("run_study: need at least one arm");
    }
    struct Task {
        int arm;
        int replicate;
    };
    std::vector<Task> tasks;
    for (int a = 0; a < static_cast<int>(arm_correlations.size()); ++a) {
        for (int r = 0; r < cfg.n_datasets; ++r) tasks.push_back({a, r});
    }

    std::vector<std::vector<ReplicateResult>> rows(arm_correlations.size());
    for (auto& v : rows) v.resize(static_cast<std::size_t>(cfg.n_datasets));
    std::vector<std::exception_ptr> errors(tasks.size());

    const int n_workers = std::max(1, std::min<int>(settings.threads, static_cast<int>(tasks.size())));
    auto worker = [&](std::atomic<std::size_t>& next) {
        for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
            try {
                rows[static_cast<std::size_t>(tasks[t].arm)][static_cast<std::size_t>(tasks[t].replicate)] =
                    run_replicate(cfg, arm_correlations[static_cast<std::size_t>(tasks[t].arm)],
                                  tasks[t].arm, tasks[t].replicate, settings);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    std::atomic<std::size_t> next{0};
    if (n_workers == 1) {
        worker(next);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back([&] { worker(next); });
        for (auto& t : pool) t.join();
    }
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }

    StudyResult result;
    for (std::size_t a = 0; a < arm_correlations.size(); ++a) {
        result.arms.push_back(summarize_arm(arm_correlations[a], std::move(rows[a])));
    }
    return result;
}

}  // namespace abilitygp
