#include <doctest.h>

#include <cmath>

#include "abilitygp/panel.hpp"
#include "abilitygp/stats.hpp"
#include "oracles.hpp"

using namespace abilitygp;

TEST_CASE("compute_a matches the Gaussian density maximum") {
    CHECK(compute_a(1.0 / std::sqrt(2.0 * M_PI)) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(compute_a(1.0) == doctest::Approx(-0.91893853320467274).epsilon(1e-14));
    CHECK(compute_a(2.0) == doctest::Approx(-1.6120857137646181).epsilon(1e-14));
}

TEST_CASE("compute_a rejects nonpositive and nonfinite input") {
    CHECK_THROWS_AS(compute_a(0.0), std::domain_error);
    CHECK_THROWS_AS(compute_a(-1.0), std::domain_error);
    CHECK_THROWS_AS(compute_a(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
    CHECK_THROWS_AS(compute_a(std::numeric_limits<double>::infinity()), std::domain_error);
}

namespace {

ScorePanel tiny_panel(double a, double l) {
    Eigen::MatrixXd Z(1, 1);
    Z << 0.0;
    Eigen::MatrixXd L(1, 1);
    L << l;
    Eigen::MatrixXd A(1, 1);
    A << a;
    return ScorePanel(Z, L, A, {"e"});
}

}  // namespace

TEST_CASE("transform_scores on known cells") {
    CHECK(transform_scores(tiny_panel(0.0, -8.0)).Lpp(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(transform_scores(tiny_panel(1.0, 1.0)).Lpp(0, 0) == 0.0);
    CHECK(transform_scores(tiny_panel(0.0, -0.001)).Lpp(0, 0) ==
          doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("panel validation names the offending cell") {
    Eigen::MatrixXd Z(2, 1);
    Z << 0.0, 1.0;
    Eigen::MatrixXd L(2, 2);
    L << -1.0, -1.0, -1.0, 0.5;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
    try {
        ScorePanel panel(Z, L, A, {"alpha", "beta"});
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("observation 1") != std::string::npos);
        CHECK(msg.find("beta") != std::string::npos);
    }
}

TEST_CASE("panel validation rejects bad shapes and non-finite entries") {
    Eigen::MatrixXd Z(1, 1);
    Z << 0.0;
    Eigen::MatrixXd L(1, 1);
    L << -1.0;
    CHECK_THROWS_AS(ScorePanel(Z, L, {"a", "b"}), ValidationError);
    Eigen::MatrixXd bad = L;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ScorePanel(Z, bad, {"a"}), ValidationError);
}

TEST_CASE("round trip recovers the raw scores") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.integer(12));
        const int K = 1 + static_cast<int>(rng.integer(3));
        Eigen::MatrixXd Z(n, 2);
        Eigen::MatrixXd A(n, K);
        Eigen::MatrixXd L(n, K);
        for (int i = 0; i < n; ++i) {
            Z(i, 0) = rng.normal();
            Z(i, 1) = rng.normal();
            for (int k = 0; k < K; ++k) {
                A(i, k) = rng.normal();
                L(i, k) = A(i, k) - std::abs(rng.normal()) * 3.0;
            }
        }
        std::vector<std::string> names;
        for (int k = 0; k < K; ++k) names.push_back("e" + std::to_string(k));
        const ScorePanel panel(Z, L, A, names);
        const TransformedPanel t = transform_scores(panel);
        const Eigen::MatrixXd back = panel.A - t.Lpp.array().pow(3.0).matrix();
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < K; ++k) {
                CHECK(back(i, k) ==
                      doctest::Approx(L(i, k)).epsilon(1e-12).scale(std::abs(L(i, k)) + 1.0));
            }
        }
    }
}

TEST_CASE("transform is monotone decreasing in the score") {
    for (double a : {0.0, 1.3}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double l = a - 5.0; l < a; l += 0.25) {
            const double t = transform_scores(tiny_panel(a, l)).Lpp(0, 0);
            CHECK(t < prev);
            prev = t;
        }
    }
}

TEST_CASE("elpd_from_latent on known cells") {
    CHECK(elpd_from_latent(3.25, 0.0, 9.0) == 3.25);
    CHECK(elpd_from_latent(0.0, 1.0, 0.0) == -1.0);
    CHECK(elpd_from_latent(0.0, 2.0, 1.0) == -14.0);
    CHECK_THROWS_AS(elpd_from_latent(0.0, 1.0, -0.5), std::domain_error);
}

TEST_CASE("elpd_from_latent matches the Monte Carlo third moment") {
    // E[a - X^3] for X ~ Normal(f, s2), one setting here; the acceptance suite
    // sweeps five.
    const double a = 0.3, f = 1.4, s2 = 0.7;
    const int M = 1000000;
    Rng rng(11);
    Eigen::VectorXd vals(M);
    const double sd = std::sqrt(s2);
    for (int i = 0; i < M; ++i) {
        const double x = f + sd * rng.normal();
        vals(i) = a - x * x * x;
    }
    const double se = oracles::mcse(vals);
    CHECK(std::abs(vals.mean() - elpd_from_latent(a, f, s2)) < 3.0 * se);
}
