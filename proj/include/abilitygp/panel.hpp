#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace abilitygp {

// Bad input data or configuration; maps to exit code 2 in the CLI.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Failure of a numerical routine (factorization, singular estimate); exit code 3.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Historical log predictive scores of K experts at n observations, with the
// pooling covariates Z at which predictive ability is modeled. A holds the
// per-cell maximum attainable log score of a Gaussian predictive density;
// A = 0 means the scores are already stored as negated transformed scores.
struct ScorePanel {
    Eigen::MatrixXd Z;  // n x P pooling covariates
    Eigen::MatrixXd L;  // n x K raw log scores
    Eigen::MatrixXd A;  // n x K normalization constants, A(i,k) >= L(i,k)
    std::vector<std::string> expert_names;

    ScorePanel(Eigen::MatrixXd Z, Eigen::MatrixXd L, Eigen::MatrixXd A,
               std::vector<std::string> expert_names);
    // A defaults to zero: L is treated as -(l - a) with a = 0.
    ScorePanel(Eigen::MatrixXd Z, Eigen::MatrixXd L, std::vector<std::string> expert_names);

    Eigen::Index n() const { return L.rows(); }
    Eigen::Index K() const { return L.cols(); }
    Eigen::Index P() const { return Z.cols(); }
};

// Cube-root transformed scores (A - L)^(1/3); the observation model's response.
struct TransformedPanel {
    Eigen::MatrixXd Lpp;  // n x K, all entries >= 0
    Eigen::MatrixXd Z;    // n x P
    std::vector<std::string> expert_names;

    Eigen::Index n() const { return Lpp.rows(); }
    Eigen::Index K() const { return Lpp.cols(); }
    Eigen::Index P() const { return Z.cols(); }
};

// Maximum log score of a Gaussian predictive density with standard deviation
// sigma_pred: -log(2 pi sigma^2) / 2.
double compute_a(double sigma_pred);

TransformedPanel transform_scores(const ScorePanel& panel);

// Local expected log predictive density implied by latent value f with noise
// variance sigma_kk: a_star - f^3 - 3 f sigma_kk.
double elpd_from_latent(double a_star, double f, double sigma_kk);

}  // namespace abilitygp
