#include <doctest.h>

#include <cmath>

#include "abilitygp/sim.hpp"
#include "oracles.hpp"

using namespace abilitygp;

TEST_CASE("pseudo scores have the conditional mean b (1 + z^2)") {
    SimConfig cfg;
    cfg.n = 1000000;
    cfg.z_correlation = 0.7;
    cfg.seed = 3;
    Rng rng(cfg.seed, 0);
    const SimDataset data = gen_dataset(cfg, rng);
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd resid(cfg.n);
        for (int i = 0; i < cfg.n; ++i) {
            const double lprime = -data.panel.L(i, k);
            resid(i) = lprime - cfg.b * (1.0 + data.panel.Z(i, k) * data.panel.Z(i, k));
        }
        CHECK(std::abs(resid.mean()) < 3.0 * oracles::mcse(resid));
    }
}

TEST_CASE("pooling covariates carry the configured correlation") {
    SimConfig cfg;
    cfg.n = 100000;
    cfg.seed = 4;
    for (double rho : {0.7, 0.0}) {
        cfg.z_correlation = rho;
        Rng rng(cfg.seed, 1);
        const SimDataset data = gen_dataset(cfg, rng);
        const Eigen::VectorXd a = data.panel.Z.col(0).array() - data.panel.Z.col(0).mean();
        const Eigen::VectorXd b = data.panel.Z.col(1).array() - data.panel.Z.col(1).mean();
        const double corr = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
        CHECK(std::abs(corr - rho) < 0.01);
    }
}

TEST_CASE("doubling b doubles every pseudo score for the same seed") {
    SimConfig cfg;
    cfg.n = 50;
    cfg.seed = 5;
    Rng r1(cfg.seed, 0);
    const SimDataset base = gen_dataset(cfg, r1);
    cfg.b *= 2.0;
    Rng r2(cfg.seed, 0);
    const SimDataset doubled = gen_dataset(cfg, r2);
    CHECK((doubled.panel.L - 2.0 * base.panel.L).cwiseAbs().maxCoeff() == 0.0);
    CHECK((doubled.panel.Z - base.panel.Z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("true ability is bounded by -b with the maximum at z = 0") {
    SimConfig cfg;
    cfg.n = 2000;
    cfg.seed = 6;
    Rng rng(cfg.seed, 0);
    const SimDataset data = gen_dataset(cfg, rng);
    CHECK((data.eta_true.array() <= -cfg.b).all());
    for (int i = 0; i < cfg.n; ++i) {
        for (int k = 0; k < 2; ++k) {
            const double z = data.panel.Z(i, k);
            CHECK(data.eta_true(i, k) ==
                  doctest::Approx(-cfg.b * (1.0 + z * z)).epsilon(1e-14));
        }
    }
}

TEST_CASE("sim config validation") {
    SimConfig cfg;
    cfg.z_correlation = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = SimConfig{};
    cfg.b = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = SimConfig{};
    cfg.n = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

namespace {

AbilityDraws draws_from(const Eigen::MatrixXd& eta) {
    AbilityDraws d;
    d.eta = eta;
    d.z_star = Eigen::VectorXd::Zero(2);
    d.a_star = Eigen::VectorXd::Zero(eta.cols());
    return d;
}

}  // namespace

TEST_CASE("joint_truth_density recovers a known Gaussian") {
    Rng rng(71);
    const int M = 100000;
    Eigen::MatrixXd eta(M, 2);
    Eigen::VectorXd truth(2);
    truth << -0.8, -1.6;
    for (int i = 0; i < M; ++i) {
        eta(i, 0) = truth(0) + rng.normal();
        eta(i, 1) = truth(1) + rng.normal();
    }
    const double got = joint_truth_density(draws_from(eta), truth);
    CHECK(std::abs(got - (-std::log(2.0 * M_PI))) < 0.02);
}

TEST_CASE("joint_truth_density decreases monotonically into the tail") {
    Rng rng(72);
    const int M = 20000;
    Eigen::MatrixXd eta(M, 2);
    for (int i = 0; i < M; ++i) {
        eta(i, 0) = rng.normal();
        eta(i, 1) = rng.normal();
    }
    const AbilityDraws d = draws_from(eta);
    double prev = std::numeric_limits<double>::infinity();
    for (double shift : {0.0, 2.0, 5.0, 10.0}) {
        const double v = joint_truth_density(d, Eigen::VectorXd::Constant(2, shift));
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < -50.0);
}

TEST_CASE("joint_truth_density reduces to the scalar normal for K=1") {
    Rng rng(73);
    const int M = 5000;
    Eigen::MatrixXd eta(M, 1);
    for (int i = 0; i < M; ++i) eta(i, 0) = 0.3 + 0.7 * rng.normal();
    AbilityDraws d;
    d.eta = eta;
    d.z_star = Eigen::VectorXd::Zero(2);
    d.a_star = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.1);
    const double got = joint_truth_density(d, x);
    const double mean = eta.col(0).mean();
    double var = (eta.col(0).array() - mean).square().sum() / static_cast<double>(M - 1);
    var += 1e-8 * var;  // the same ridge the estimator applies
    const double expected =
        -0.5 * (std::log(2.0 * M_PI) + std::log(var) + (0.1 - mean) * (0.1 - mean) / var);
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
    CHECK_THROWS_AS(joint_truth_density(d, Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST_CASE("joint_truth_density requires enough draws") {
    Eigen::MatrixXd eta(3, 2);
    eta.setZero();
    CHECK_THROWS_AS(joint_truth_density(draws_from(eta), Eigen::VectorXd::Zero(2)),
                    ValidationError);
}

TEST_CASE("kde estimator is finite and tracks the moment-matched density") {
    Rng rng(74);
    const int M = 20000;
    Eigen::MatrixXd eta(M, 2);
    for (int i = 0; i < M; ++i) {
        eta(i, 0) = rng.normal();
        eta(i, 1) = 0.5 * eta(i, 0) + rng.normal();
    }
    const AbilityDraws d = draws_from(eta);
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    const double gauss = joint_truth_density(d, x, DensityEstimator::moment_gaussian);
    const double kde = joint_truth_density(d, x, DensityEstimator::kde);
    CHECK(std::isfinite(kde));
    CHECK(std::abs(kde - gauss) < 0.2);
}

TEST_CASE("single-output pipeline equals the hand-written scalar oracle") {
    SimConfig cfg;
    cfg.n = 15;
    cfg.seed = 9;
    Rng rng(cfg.seed, 2);
    const SimDataset data = gen_dataset(cfg, rng);
    const ScorePanel single(data.panel.Z, data.panel.L.col(0), {"expert1"});
    const TransformedPanel tp = transform_scores(single);
    PriorConfig prior;
    HyperParams h;
    h.lengthscales.resize(2, 1);
    h.lengthscales << 1.4, 2.2;
    h.mean = Eigen::VectorXd::Constant(1, 0.5);
    h.tau = Eigen::VectorXd::Constant(1, 0.9);
    h.sigma_eps = Eigen::VectorXd::Constant(1, 0.6);
    h.omega_sig = Eigen::MatrixXd::Identity(1, 1);
    h.omega_noise = Eigen::MatrixXd::Identity(1, 1);
    const double got = log_marginal_posterior(tp, h, prior) - log_prior(h, prior);
    const double jitter = kJitterRel * (0.9 * 0.9 + 0.6 * 0.6);
    const double expected = oracles::scalar_gp_lml(tp.Z, tp.Lpp.col(0), h.lengthscales.col(0),
                                                   0.9, 0.6, 0.5, jitter);
    CHECK(got == doctest::Approx(expected).epsilon(1e-11));
}

TEST_CASE("run_study smoke: one tiny replicate completes with finite fields") {
    SimConfig cfg;
    cfg.n = 20;
    cfg.n_datasets = 1;
    cfg.seed = 10;
    StudySettings settings;
    settings.sampler.n_chains = 2;
    settings.sampler.n_warmup = 50;
    settings.sampler.n_draws = 50;
    const StudyResult res = run_study(cfg, {0.7}, settings);
    REQUIRE(res.arms.size() == 1);
    REQUIRE(res.arms[0].replicates.size() == 1);
    const ReplicateResult& r = res.arms[0].replicates[0];
    CHECK(std::isfinite(r.multi_score));
    CHECK(std::isfinite(r.single_score));
    CHECK(std::isfinite(r.max_rhat_multi));
    CHECK(std::isfinite(r.max_rhat_single));
    CHECK((r.lengthscale_medians.array() > 0.0).all());
    CHECK((r.lengthscale_medians.array() < 100.0).all());
    CHECK(r.query_index >= 0);
    CHECK(r.query_index < cfg.n);
    CHECK(res.arms[0].n_used + res.arms[0].n_excluded == 1);
}
