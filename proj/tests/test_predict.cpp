#include <doctest.h>

#include <cmath>

#include "abilitygp/predict.hpp"
#include "abilitygp/stats.hpp"
#include "oracles.hpp"

using namespace abilitygp;

namespace {

HyperParams make_params(Eigen::Index K, Eigen::Index P) {
    HyperParams h;
    h.lengthscales = Eigen::MatrixXd::Constant(P, K, 1.0);
    h.mean = Eigen::VectorXd::Zero(K);
    h.tau = Eigen::VectorXd::Ones(K);
    h.sigma_eps = Eigen::VectorXd::Constant(K, 0.5);
    h.omega_sig = Eigen::MatrixXd::Identity(K, K);
    h.omega_noise = Eigen::MatrixXd::Identity(K, K);
    return h;
}

TransformedPanel small_panel(Rng& rng, Eigen::Index n, Eigen::Index K, Eigen::Index P) {
    Eigen::MatrixXd Z(n, P);
    Eigen::MatrixXd L(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index p = 0; p < P; ++p) Z(i, p) = rng.normal();
        for (Eigen::Index k = 0; k < K; ++k) L(i, k) = -std::abs(rng.normal());
    }
    std::vector<std::string> names;
    for (Eigen::Index k = 0; k < K; ++k) names.push_back("e" + std::to_string(k + 1));
    return transform_scores(ScorePanel(Z, L, names));
}

}  // namespace

TEST_CASE("noiseless posterior interpolates the observations") {
    Rng rng(51);
    const TransformedPanel panel = small_panel(rng, 4, 2, 2);
    HyperParams h = make_params(2, 2);
    h.sigma_eps.setConstant(1e-5);
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
        const LatentPosterior post = latent_posterior_at(panel.Z.row(i), panel, h);
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(post.mean(k) == doctest::Approx(panel.Lpp(i, k)).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("vanishing signal returns the prior mean with zero covariance") {
    Rng rng(52);
    const TransformedPanel panel = small_panel(rng, 5, 2, 2);
    HyperParams h = make_params(2, 2);
    h.tau.setConstant(1e-8);
    h.mean << 0.4, -0.9;
    Eigen::VectorXd z_star(2);
    z_star << 0.3, -0.1;
    const LatentPosterior post = latent_posterior_at(z_star, panel, h);
    CHECK((post.mean - h.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(post.cov.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conditioning matches the dense Schur-complement oracle") {
    Rng rng(53);
    const Eigen::Index n = 3, K = 2, P = 2;
    const TransformedPanel panel = small_panel(rng, n, K, P);
    HyperParams h = make_params(K, P);
    h.lengthscales << 0.8, 1.6, 1.1, 0.9;
    h.tau << 0.9, 1.2;
    h.sigma_eps << 0.4, 0.7;
    h.omega_sig << 1.0, 0.5, 0.5, 1.0;
    h.omega_noise << 1.0, -0.2, -0.2, 1.0;
    h.mean << 0.2, 0.6;
    Eigen::VectorXd z_star(2);
    z_star << 0.25, -0.55;

    // Assemble the (Kn + K)-dimensional joint over (training, query) and
    // condition explicitly.
    Eigen::MatrixXd Zall(n + 1, P);
    Zall.topRows(n) = panel.Z;
    Zall.row(n) = z_star;
    const oracles::DenseJoint joint =
        oracles::dense_joint(Zall, h.lengthscales, h.mixing(), h.noise_cov(), h.mean);
    // Expert-major over n+1 rows; query indices are k*(n+1)+n. The query block
    // must carry no noise, so subtract Sigma from those diagonal cells.
    const Eigen::MatrixXd Sigma = h.noise_cov();
    std::vector<Eigen::Index> train_idx, query_idx;
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) train_idx.push_back(k * (n + 1) + i);
        query_idx.push_back(k * (n + 1) + n);
    }
    Eigen::MatrixXd Ktt(K * n, K * n), Kqt(K, K * n), Kqq(K, K);
    Eigen::VectorXd mu_t(K * n), mu_q(K);
    for (std::size_t a = 0; a < train_idx.size(); ++a) {
        mu_t(static_cast<Eigen::Index>(a)) = joint.mean(train_idx[a]);
        for (std::size_t b = 0; b < train_idx.size(); ++b) {
            Ktt(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                joint.cov(train_idx[a], train_idx[b]);
        }
    }
    for (Eigen::Index k = 0; k < K; ++k) {
        mu_q(k) = joint.mean(query_idx[static_cast<std::size_t>(k)]);
        for (std::size_t b = 0; b < train_idx.size(); ++b) {
            Kqt(k, static_cast<Eigen::Index>(b)) =
                joint.cov(query_idx[static_cast<std::size_t>(k)], train_idx[b]);
        }
        for (Eigen::Index l = 0; l < K; ++l) {
            Kqq(k, l) = joint.cov(query_idx[static_cast<std::size_t>(k)],
                                  query_idx[static_cast<std::size_t>(l)]) -
                        Sigma(k, l);
        }
    }
    Ktt.diagonal().array() += kJitterRel * Ktt.diagonal().mean();
    Eigen::VectorXd y(K * n);
    for (Eigen::Index k = 0; k < K; ++k) y.segment(k * n, n) = panel.Lpp.col(k);
    const Eigen::MatrixXd Ktt_inv = Ktt.inverse();
    const Eigen::VectorXd mean_oracle = mu_q + Kqt * Ktt_inv * (y - mu_t);
    const Eigen::MatrixXd cov_oracle = Kqq - Kqt * Ktt_inv * Kqt.transpose();

    const LatentPosterior post = latent_posterior_at(z_star, panel, h);
    CHECK((post.mean - mean_oracle).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((post.cov - cov_oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("degenerate ability draws collapse to a_star") {
    Eigen::MatrixXd Z(2, 1);
    Z << 0.0, 1.0;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(2, 2);
    const TransformedPanel panel = transform_scores(ScorePanel(Z, L, {"e1", "e2"}));
    HyperParams h = make_params(2, 1);
    h.tau.setConstant(1e-9);
    h.sigma_eps.setConstant(1e-9);
    h.mean.setZero();
    Eigen::VectorXd z_star(1);
    z_star << 0.5;
    Eigen::VectorXd a_star(2);
    a_star << 1.25, -0.75;
    const AbilityDraws draws = sample_ability(z_star, a_star, panel, {h}, 77);
    CHECK(draws.eta.rows() == 1);
    CHECK(draws.eta(0, 0) == doctest::Approx(1.25).epsilon(1e-9));
    CHECK(draws.eta(0, 1) == doctest::Approx(-0.75).epsilon(1e-9));
}

TEST_CASE("ability draws compose the latent posterior with the third-moment map") {
    // With sigma -> 0 the latent covariance collapses; eta must equal
    // elpd_from_latent applied to the posterior mean, draw by draw.
    Rng rng(54);
    const TransformedPanel panel = small_panel(rng, 4, 2, 2);
    HyperParams h = make_params(2, 2);
    h.tau.setConstant(1e-8);
    h.mean << 0.5, 1.1;
    h.sigma_eps << 0.3, 0.6;
    Eigen::VectorXd z_star(2);
    z_star << 0.0, 0.0;
    const Eigen::VectorXd a_star = Eigen::VectorXd::Zero(2);
    const std::vector<HyperParams> params(5, h);
    const AbilityDraws draws = sample_ability(z_star, a_star, panel, params, 123);
    const Eigen::MatrixXd Sigma = h.noise_cov();
    const LatentPosterior post = latent_posterior_at(z_star, panel, h);
    for (Eigen::Index j = 0; j < draws.eta.rows(); ++j) {
        for (Eigen::Index k = 0; k < 2; ++k) {
            CHECK(draws.eta(j, k) ==
                  doctest::Approx(elpd_from_latent(0.0, post.mean(k), Sigma(k, k))).epsilon(1e-6));
        }
    }
}

TEST_CASE("ability draw mean matches the Gaussian-cube expectation") {
    // Fixed hyperparameters; E[a - f^3 - 3 f Sigma_kk] with f ~ the latent
    // posterior has the closed form a - (mu^3 + 3 mu v) - 3 mu Sigma_kk.
    Rng rng(55);
    const TransformedPanel panel = small_panel(rng, 5, 2, 2);
    HyperParams h = make_params(2, 2);
    h.tau << 0.9, 1.3;
    h.sigma_eps << 0.5, 0.8;
    h.omega_sig << 1.0, 0.6, 0.6, 1.0;
    h.mean << 0.4, 0.9;
    Eigen::VectorXd z_star(2);
    z_star << 0.2, -0.3;
    Eigen::VectorXd a_star(2);
    a_star << 0.1, -0.2;
    const int M = 20000;
    const std::vector<HyperParams> params(M, h);
    const AbilityDraws draws = sample_ability(z_star, a_star, panel, params, 2024);
    const LatentPosterior post = latent_posterior_at(z_star, panel, h);
    const Eigen::MatrixXd Sigma = h.noise_cov();
    for (Eigen::Index k = 0; k < 2; ++k) {
        const double mu = post.mean(k);
        const double v = post.cov(k, k);
        const double expected = a_star(k) - (mu * mu * mu + 3.0 * mu * v) - 3.0 * mu * Sigma(k, k);
        const double se = oracles::mcse(draws.eta.col(k));
        CHECK(std::abs(draws.eta.col(k).mean() - expected) < 3.0 * se);
    }
}

TEST_CASE("psi counts strict maxima and splits ties") {
    Eigen::MatrixXd eta(4, 2);
    eta << 1, 2, 2, 1, 0, 3, 1, 4;
    const Eigen::VectorXd p = psi(eta);
    CHECK(p(0) == doctest::Approx(0.25));
    CHECK(p(1) == doctest::Approx(0.75));

    Eigen::MatrixXd one(3, 1);
    one << 0.1, -2.0, 5.0;
    CHECK(psi(one)(0) == 1.0);

    Eigen::MatrixXd tied = Eigen::MatrixXd::Constant(6, 2, 1.5);
    const Eigen::VectorXd pt = psi(tied);
    CHECK(pt(0) == 0.5);
    CHECK(pt(1) == 0.5);
}

TEST_CASE("psi is a probability vector and a rank statistic") {
    Rng rng(56);
    Eigen::MatrixXd eta(200, 3);
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        for (Eigen::Index k = 0; k < 3; ++k) eta(i, k) = rng.normal();
    }
    const Eigen::VectorXd p = psi(eta);
    CHECK((p.array() >= 0.0).all());
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Any common strictly increasing transform preserves the row ranks.
    const Eigen::MatrixXd warped = (eta.array() * 0.5).exp() + 3.0;
    CHECK((psi(warped) - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prob_second_best_gaussian closed form") {
    CHECK(prob_second_best_gaussian(0.0, 0.5, 1.0, 1.0, 0.0) ==
          doctest::Approx(0.63816319508411847).epsilon(1e-12));
    CHECK(prob_second_best_gaussian(0.0, 0.5, 1.0, 1.0, 0.9) ==
          doctest::Approx(0.86822376135851363).epsilon(1e-12));
    CHECK(prob_second_best_gaussian(1.3, 1.3, 0.5, 2.0, -0.4) == 0.5);
    CHECK_THROWS_AS(prob_second_best_gaussian(0.0, 0.5, 1.0, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(prob_second_best_gaussian(0.0, 0.5, 0.0, 1.0, 0.0), std::domain_error);
}

TEST_CASE("prob_second_best_gaussian increases with correlation") {
    double prev = 0.0;
    for (double rho : {-0.9, 0.0, 0.9}) {
        const double p = prob_second_best_gaussian(0.0, 0.5, 1.0, 1.0, rho);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("latent posterior covariance stays PSD after cleanup") {
    Rng rng(57);
    const TransformedPanel panel = small_panel(rng, 6, 2, 2);
    HyperParams h = make_params(2, 2);
    h.sigma_eps.setConstant(1e-6);
    // Query exactly at a training point: the subtraction cancels almost
    // everything and can leave negative dust.
    const LatentPosterior post = latent_posterior_at(panel.Z.row(2), panel, h);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.cov);
    CHECK(eig.eigenvalues().minCoeff() >= 0.0);
}
