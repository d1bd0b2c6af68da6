#include "abilitygp/panel.hpp"

#include <cmath>
#include <sstream>

namespace abilitygp {

namespace {

void validate_panel(const ScorePanel& p) {
    const auto n = p.L.rows();
    const auto K = p.L.cols();
    if (n < 1 || K < 1 || p.Z.cols() < 1) {
        throw ValidationError("score panel requires n >= 1, K >= 1, P >= 1");
    }
    if (p.Z.rows() != n) {
        throw ValidationError("score panel: Z has " + std::to_string(p.Z.rows()) +
                              " rows but L has " + std::to_string(n));
    }
    if (p.A.rows() != n || p.A.cols() != K) {
        throw ValidationError("score panel: A must have the same shape as L");
    }
    if (static_cast<Eigen::Index>(p.expert_names.size()) != K) {
        throw ValidationError("score panel: expected " + std::to_string(K) +
                              " expert names, got " + std::to_string(p.expert_names.size()));
    }
    if (!p.Z.allFinite() || !p.L.allFinite() || !p.A.allFinite()) {
        throw ValidationError("score panel: all entries must be finite");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < K; ++k) {
            if (p.A(i, k) < p.L(i, k)) {
                std::ostringstream msg;
                msg << "score panel: a < log score at observation " << i << ", expert '"
                    << p.expert_names[static_cast<std::size_t>(k)] << "' (a=" << p.A(i, k)
                    << ", score=" << p.L(i, k) << ")";
                throw ValidationError(msg.str());
            }
        }
    }
}

}  // namespace

ScorePanel::ScorePanel(Eigen::MatrixXd Z_, Eigen::MatrixXd L_, Eigen::MatrixXd A_,
                       std::vector<std::string> names)
    : Z(std::move(Z_)), L(std::move(L_)), A(std::move(A_)), expert_names(std::move(names)) {
    validate_panel(*this);
}

ScorePanel::ScorePanel(Eigen::MatrixXd Z_, Eigen::MatrixXd L_, std::vector<std::string> names)
    : Z(std::move(Z_)),
      L(std::move(L_)),
      A(Eigen::MatrixXd::Zero(L.rows(), L.cols())),
      expert_names(std::move(names)) {
    validate_panel(*this);
}

double compute_a(double sigma_pred) {
    if (!(sigma_pred > 0.0) || !std::isfinite(sigma_pred)) {
        throw std::domain_error("compute_a: predictive standard deviation must be positive and finite");
    }
    return -0.5 * std::log(2.0 * M_PI * sigma_pred * sigma_pred);
}

TransformedPanel transform_scores(const ScorePanel& panel) {
    TransformedPanel out;
    out.Z = panel.Z;
    out.expert_names = panel.expert_names;
    out.Lpp = (panel.A - panel.L).array().unaryExpr([](double v) { return std::cbrt(v); });
    return out;
}

double elpd_from_latent(double a_star, double f, double sigma_kk) {
    if (sigma_kk < 0.0) {
        throw std::domain_error("elpd_from_latent: noise variance must be nonnegative");
    }
    return a_star - f * f * f - 3.0 * f * sigma_kk;
}

}  // namespace abilitygp
