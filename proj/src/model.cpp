#include "abilitygp/model.hpp"

#include <cmath>
#include <limits>

#include "abilitygp/stats.hpp"

namespace abilitygp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logistic(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(y)^2), stable for large |y|.
double log_one_minus_tanh_sq(double y) {
    const double a = std::abs(y);
    return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double half_normal_log_pdf(double x, double sd) {
    if (!(x > 0.0)) return kNegInf;
    return std::log(2.0) - std::log(sd) - 0.5 * std::log(2.0 * M_PI) - 0.5 * x * x / (sd * sd);
}

double truncated_cauchy_log_pdf(double x, double scale, double upper) {
    if (!(x > 0.0) || !(x < upper)) return kNegInf;
    const double r = x / scale;
    return -std::log(std::atan(upper / scale)) - std::log(scale) - std::log1p(r * r);
}

// Exponent of log(1 - z^2) contributed by the CPC pair (i, j), i < j
// (0-indexed): one from tanh, (K - 2 - i)/2 from the CPC-to-correlation map.
double cpc_jacobian_coef(Eigen::Index i, Eigen::Index K) {
    return 1.0 + 0.5 * static_cast<double>(K - 2 - i);
}

}  // namespace

Eigen::MatrixXd HyperParams::mixing() const {
    const Eigen::MatrixXd S =
        tau.asDiagonal() * omega_sig * tau.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("mixing: diag(tau) omega_sig diag(tau) is not positive definite");
    }
    return llt.matrixU();
}

Eigen::MatrixXd HyperParams::noise_cov() const {
    return sigma_eps.asDiagonal() * omega_noise * sigma_eps.asDiagonal();
}

CrossCovSpec HyperParams::cross_cov_spec() const {
    std::vector<SeArdKernel> kernels;
    kernels.reserve(static_cast<std::size_t>(K()));
    for (Eigen::Index s = 0; s < K(); ++s) {
        kernels.emplace_back(lengthscales.col(s), 1.0);
    }
    return CrossCovSpec(std::move(kernels), mixing());
}

std::vector<std::string> ParamLayout::constrained_names(
    const std::vector<std::string>& experts) const {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(dim()));
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index p = 0; p < P; ++p) {
            names.push_back("lengthscale" + std::to_string(p + 1) + "_" + experts[static_cast<std::size_t>(k)]);
        }
    }
    for (Eigen::Index k = 0; k < K; ++k) names.push_back("mean_" + experts[static_cast<std::size_t>(k)]);
    for (Eigen::Index k = 0; k < K; ++k) names.push_back("tau_" + experts[static_cast<std::size_t>(k)]);
    for (Eigen::Index j = 1; j < K; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            names.push_back("omega_sig_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
        }
    }
    for (Eigen::Index k = 0; k < K; ++k) names.push_back("sigma_" + experts[static_cast<std::size_t>(k)]);
    if (!diagonal_noise) {
        for (Eigen::Index j = 1; j < K; ++j) {
            for (Eigen::Index i = 0; i < j; ++i) {
                names.push_back("omega_noise_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
            }
        }
    }
    return names;
}

std::vector<std::string> ParamLayout::coordinate_names(
    const std::vector<std::string>& experts) const {
    auto names = constrained_names(experts);
    for (auto& n : names) n = "raw_" + n;
    return names;
}

Eigen::MatrixXd cpc_to_corr_chol(const Eigen::VectorXd& z, Eigen::Index K) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, K);
    L(0, 0) = 1.0;
    for (Eigen::Index r = 1; r < K; ++r) {
        double pre = 1.0;
        for (Eigen::Index c = 0; c < r; ++c) {
            const double zc = z(r * (r - 1) / 2 + c);
            L(r, c) = zc * pre;
            pre *= std::sqrt(1.0 - zc * zc);
        }
        L(r, r) = pre;
    }
    return L;
}

Eigen::VectorXd corr_to_cpc(const Eigen::MatrixXd& omega) {
    const Eigen::Index K = omega.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("corr_to_cpc: matrix is not positive definite");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::VectorXd z(K * (K - 1) / 2);
    for (Eigen::Index r = 1; r < K; ++r) {
        double pre = 1.0;
        for (Eigen::Index c = 0; c < r; ++c) {
            const double zc = L(r, c) / pre;
            z(r * (r - 1) / 2 + c) = zc;
            pre *= std::sqrt(1.0 - zc * zc);
        }
    }
    return z;
}

double lkj_log_normalizer(Eigen::Index K, double eta) {
    double s = 0.0;
    for (Eigen::Index i = 1; i < K; ++i) {
        const double a = eta + 0.5 * static_cast<double>(K - 1 - i);
        s += static_cast<double>(K - i) * ((2.0 * a - 1.0) * std::log(2.0) + lbeta(a, a));
    }
    return -s;
}

double lkj_log_pdf(const Eigen::MatrixXd& omega, double eta) {
    const Eigen::Index K = omega.rows();
    if (omega.cols() != K) return kNegInf;
    for (Eigen::Index k = 0; k < K; ++k) {
        if (std::abs(omega(k, k) - 1.0) > 1e-8) return kNegInf;
    }
    if (!omega.isApprox(omega.transpose(), 1e-10)) return kNegInf;
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() != Eigen::Success) return kNegInf;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return lkj_log_normalizer(K, eta) + (eta - 1.0) * log_det;
}

Constrained constrain(const Eigen::VectorXd& u, const ParamLayout& layout,
                      const PriorConfig& prior) {
    const Eigen::Index K = layout.K;
    const Eigen::Index P = layout.P;
    if (u.size() != layout.dim()) {
        throw ValidationError("constrain: expected " + std::to_string(layout.dim()) +
                              " coordinates, got " + std::to_string(u.size()));
    }
    const double B = prior.lengthscale_upper;

    Constrained out;
    out.params.lengthscales.resize(P, K);
    out.params.mean.resize(K);
    out.params.tau.resize(K);
    out.params.sigma_eps.resize(K);
    double log_jac = 0.0;

    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index p = 0; p < P; ++p) {
            const double x = u(layout.lengthscale(p, k));
            out.params.lengthscales(p, k) = B * logistic(x);
            log_jac += std::log(B) - softplus(x) - softplus(-x);
        }
        out.params.mean(k) = u(layout.mean(k));
        const double lt = u(layout.log_tau(k));
        out.params.tau(k) = std::exp(lt);
        log_jac += lt;
        const double ls = u(layout.log_sigma(k));
        out.params.sigma_eps(k) = std::exp(ls);
        log_jac += ls;
    }

    const Eigen::Index n_corr = layout.n_corr();
    out.z_sig.resize(n_corr);
    out.z_noise.resize(layout.diagonal_noise ? 0 : n_corr);
    for (Eigen::Index j = 1; j < K; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            const Eigen::Index idx = j * (j - 1) / 2 + i;
            const double y = u(layout.z_sig(i, j));
            out.z_sig(idx) = std::tanh(y);
            log_jac += cpc_jacobian_coef(i, K) * log_one_minus_tanh_sq(y);
            if (!layout.diagonal_noise) {
                const double yn = u(layout.z_noise(i, j));
                out.z_noise(idx) = std::tanh(yn);
                log_jac += cpc_jacobian_coef(i, K) * log_one_minus_tanh_sq(yn);
            }
        }
    }
    out.chol_sig = cpc_to_corr_chol(out.z_sig, K);
    out.params.omega_sig = out.chol_sig * out.chol_sig.transpose();
    if (layout.diagonal_noise) {
        out.chol_noise = Eigen::MatrixXd::Identity(K, K);
        out.params.omega_noise = Eigen::MatrixXd::Identity(K, K);
    } else {
        out.chol_noise = cpc_to_corr_chol(out.z_noise, K);
        out.params.omega_noise = out.chol_noise * out.chol_noise.transpose();
    }
    out.log_jacobian = log_jac;
    return out;
}

Eigen::VectorXd unconstrain(const HyperParams& h, const ParamLayout& layout,
                            const PriorConfig& prior) {
    const Eigen::Index K = layout.K;
    const Eigen::Index P = layout.P;
    const double B = prior.lengthscale_upper;
    Eigen::VectorXd u(layout.dim());
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index p = 0; p < P; ++p) {
            const double l = h.lengthscales(p, k);
            u(layout.lengthscale(p, k)) = std::log(l) - std::log(B - l);
        }
        u(layout.mean(k)) = h.mean(k);
        u(layout.log_tau(k)) = std::log(h.tau(k));
        u(layout.log_sigma(k)) = std::log(h.sigma_eps(k));
    }
    if (K > 1) {
        const Eigen::VectorXd z_sig = corr_to_cpc(h.omega_sig);
        for (Eigen::Index j = 1; j < K; ++j) {
            for (Eigen::Index i = 0; i < j; ++i) {
                u(layout.z_sig(i, j)) = std::atanh(z_sig(j * (j - 1) / 2 + i));
            }
        }
        if (!layout.diagonal_noise) {
            const Eigen::VectorXd z_noise = corr_to_cpc(h.omega_noise);
            for (Eigen::Index j = 1; j < K; ++j) {
                for (Eigen::Index i = 0; i < j; ++i) {
                    u(layout.z_noise(i, j)) = std::atanh(z_noise(j * (j - 1) / 2 + i));
                }
            }
        }
    }
    return u;
}

double log_prior(const HyperParams& h, const PriorConfig& prior) {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < h.K(); ++k) {
        for (Eigen::Index p = 0; p < h.P(); ++p) {
            lp += truncated_cauchy_log_pdf(h.lengthscales(p, k), prior.lengthscale_cauchy_scale,
                                           prior.lengthscale_upper);
        }
        lp += normal_log_pdf(h.mean(k), 0.0, prior.mean_prior_sd);
        lp += half_normal_log_pdf(h.tau(k), prior.scale_prior_sd);
        lp += half_normal_log_pdf(h.sigma_eps(k), prior.scale_prior_sd);
    }
    lp += lkj_log_pdf(h.omega_sig, prior.lkj_eta);
    if (!prior.diagonal_noise) {
        lp += lkj_log_pdf(h.omega_noise, prior.lkj_eta);
    }
    return lp;
}

LogPosterior::LogPosterior(TransformedPanel panel, PriorConfig prior)
    : panel_(std::move(panel)), prior_(prior) {
    const Eigen::Index n = panel_.n();
    const Eigen::Index K = panel_.K();
    const Eigen::Index P = panel_.P();
    if (n < 1 || K < 1 || P < 1) {
        throw ValidationError("log posterior: panel requires n >= 1, K >= 1, P >= 1");
    }
    if (panel_.Z.rows() != n || !panel_.Lpp.allFinite() || !panel_.Z.allFinite() ||
        (panel_.Lpp.array() < 0.0).any()) {
        throw ValidationError("log posterior: transformed panel is invalid");
    }
    layout_ = ParamLayout{K, P, prior_.diagonal_noise};
    y_.resize(K * n);
    for (Eigen::Index k = 0; k < K; ++k) {
        y_.segment(k * n, n) = panel_.Lpp.col(k);
    }
    sq_dist_.reserve(static_cast<std::size_t>(P));
    for (Eigen::Index p = 0; p < P; ++p) {
        const Eigen::VectorXd zp = panel_.Z.col(p);
        Eigen::MatrixXd d = zp.replicate(1, n) - zp.transpose().replicate(n, 1);
        sq_dist_.push_back(d.cwiseProduct(d));
    }
}

namespace {

// Matrix-level gradients of the Gaussian log marginal likelihood.
struct LikGrads {
    Eigen::MatrixXd g_lengthscale;  // P x K
    Eigen::VectorXd g_mean;         // K
    Eigen::MatrixXd g_mixing;       // K x K, entries (s, k) with s <= k
    Eigen::MatrixXd g_noise;        // K x K, entries (k, l) with k <= l
};

}  // namespace

double LogPosterior::likelihood(const HyperParams& h, const Constrained* chain,
                                Eigen::VectorXd* grad) const {
    const Eigen::Index n = panel_.n();
    const Eigen::Index K = panel_.K();
    const Eigen::Index P = panel_.P();
    const Eigen::Index Kn = K * n;

    // C from the chain factors when available so that value and gradient see
    // bit-identical covariances.
    const Eigen::MatrixXd C = chain != nullptr
                                  ? Eigen::MatrixXd(chain->chol_sig.transpose() *
                                                    h.tau.asDiagonal())
                                  : h.mixing();
    const Eigen::MatrixXd Sigma = h.noise_cov();

    std::vector<Eigen::MatrixXd> grams;
    grams.reserve(static_cast<std::size_t>(K));
    for (Eigen::Index s = 0; s < K; ++s) {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index p = 0; p < P; ++p) {
            const double l = h.lengthscales(p, s);
            q += sq_dist_[static_cast<std::size_t>(p)] / (l * l);
        }
        grams.push_back((-0.5 * q.array()).exp().matrix());
    }

    Eigen::MatrixXd Kmat = Eigen::MatrixXd::Zero(Kn, Kn);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) {
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, n);
            for (Eigen::Index s = 0; s <= l; ++s) {
                const double w = C(s, k) * C(s, l);
                if (w != 0.0) block += w * grams[static_cast<std::size_t>(s)];
            }
            block.diagonal().array() += Sigma(k, l);
            Kmat.block(k * n, l * n, n, n) = block;
            if (l != k) Kmat.block(l * n, k * n, n, n) = block.transpose();
        }
    }

    if (!Kmat.allFinite()) {
        throw NumericalError("marginal covariance has non-finite entries");
    }
    const CholFactor factor = chol_with_jitter(Kmat);
    const double jitter_rel = factor.jitter / Kmat.diagonal().mean();

    Eigen::VectorXd mu(Kn);
    for (Eigen::Index k = 0; k < K; ++k) mu.segment(k * n, n).setConstant(h.mean(k));
    const Eigen::VectorXd r = y_ - mu;
    const Eigen::VectorXd alpha = factor.solve(r);
    const double value = -0.5 * r.dot(alpha) - 0.5 * factor.log_det -
                         0.5 * static_cast<double>(Kn) * std::log(2.0 * M_PI);

    if (grad == nullptr) return value;

    LikGrads g;
    g.g_lengthscale = Eigen::MatrixXd::Zero(P, K);
    g.g_mean.resize(K);
    g.g_mixing = Eigen::MatrixXd::Zero(K, K);
    g.g_noise = Eigen::MatrixXd::Zero(K, K);

    const Eigen::MatrixXd Kinv = factor.solve(Eigen::MatrixXd::Identity(Kn, Kn));
    const Eigen::MatrixXd B = alpha * alpha.transpose() - Kinv;
    const double tr_B = B.trace();

    for (Eigen::Index k = 0; k < K; ++k) g.g_mean(k) = alpha.segment(k * n, n).sum();

    for (Eigen::Index s = 0; s < K; ++s) {
        // Frobenius products of B blocks against the latent gram, and the
        // C-weighted collapse of B used for the length-scale traces.
        Eigen::MatrixXd prods(K, K);
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index k = 0; k < K; ++k) {
            for (Eigen::Index l = 0; l <= k; ++l) {
                const double dot =
                    B.block(k * n, l * n, n, n).cwiseProduct(grams[static_cast<std::size_t>(s)]).sum();
                prods(k, l) = dot;
                prods(l, k) = dot;
                const double w = C(s, k) * C(s, l);
                if (w != 0.0) {
                    W += (l == k ? w : 2.0 * w) * B.block(k * n, l * n, n, n);
                }
            }
        }
        for (Eigen::Index p = 0; p < P; ++p) {
            const double l3 = std::pow(h.lengthscales(p, s), 3);
            g.g_lengthscale(p, s) =
                0.5 / l3 *
                W.cwiseProduct(grams[static_cast<std::size_t>(s)])
                    .cwiseProduct(sq_dist_[static_cast<std::size_t>(p)])
                    .sum();
        }
        for (Eigen::Index k = s; k < K; ++k) {
            double acc = 0.0;
            for (Eigen::Index b = s; b < K; ++b) acc += C(s, b) * prods(k, b);
            g.g_mixing(s, k) = acc + jitter_rel * C(s, k) * tr_B / static_cast<double>(K);
        }
    }

    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index l = k; l < K; ++l) {
            const double diag_sum = B.block(k * n, l * n, n, n).diagonal().sum();
            g.g_noise(k, l) = (k == l)
                                  ? 0.5 * diag_sum + 0.5 * jitter_rel * tr_B / static_cast<double>(K)
                                  : diag_sum;
        }
    }

    // Chain the matrix-level gradients into the unconstrained coordinates.
    // Prior and Jacobian contributions are added by the caller.
    grad->setZero(layout_.dim());
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index p = 0; p < P; ++p) {
            const double l = h.lengthscales(p, k);
            const double sig = l / prior_.lengthscale_upper;
            (*grad)(layout_.lengthscale(p, k)) =
                g.g_lengthscale(p, k) * prior_.lengthscale_upper * sig * (1.0 - sig);
        }
        (*grad)(layout_.mean(k)) = g.g_mean(k);
        double gt = 0.0;
        for (Eigen::Index s = 0; s <= k; ++s) gt += g.g_mixing(s, k) * C(s, k);
        (*grad)(layout_.log_tau(k)) = gt;
        double gs = 0.0;
        for (Eigen::Index b = 0; b < K; ++b) {
            if (b == k) {
                gs += 2.0 * g.g_noise(k, k) * Sigma(k, k);
            } else {
                gs += g.g_noise(std::min(k, b), std::max(k, b)) * Sigma(k, b);
            }
        }
        (*grad)(layout_.log_sigma(k)) = gs;
    }

    if (K > 1 && chain != nullptr) {
        // Signal correlation coordinates: C(s, j) = tau_j * L_sig(j, s).
        for (Eigen::Index j = 1; j < K; ++j) {
            Eigen::VectorXd pre(j + 1);
            pre(0) = 1.0;
            for (Eigen::Index c = 0; c < j; ++c) {
                const double zc = chain->z_sig(j * (j - 1) / 2 + c);
                pre(c + 1) = pre(c) * std::sqrt(1.0 - zc * zc);
            }
            for (Eigen::Index i = 0; i < j; ++i) {
                const double zi = chain->z_sig(j * (j - 1) / 2 + i);
                const double shrink = -zi / (1.0 - zi * zi);
                double dval = g.g_mixing(i, j) * h.tau(j) * pre(i);
                for (Eigen::Index s = i + 1; s <= j; ++s) {
                    dval += g.g_mixing(s, j) * h.tau(j) * chain->chol_sig(j, s) * shrink;
                }
                (*grad)(layout_.z_sig(i, j)) = dval * (1.0 - zi * zi);
            }
        }
        if (!layout_.diagonal_noise) {
            // Noise correlation coordinates through Sigma = A A^T, A = diag(sigma) L.
            const Eigen::MatrixXd A = h.sigma_eps.asDiagonal() * chain->chol_noise;
            for (Eigen::Index j = 1; j < K; ++j) {
                Eigen::VectorXd pre(j + 1);
                pre(0) = 1.0;
                for (Eigen::Index c = 0; c < j; ++c) {
                    const double zc = chain->z_noise(j * (j - 1) / 2 + c);
                    pre(c + 1) = pre(c) * std::sqrt(1.0 - zc * zc);
                }
                for (Eigen::Index i = 0; i < j; ++i) {
                    const double zi = chain->z_noise(j * (j - 1) / 2 + i);
                    const double shrink = -zi / (1.0 - zi * zi);
                    Eigen::VectorXd dA = Eigen::VectorXd::Zero(K);
                    dA(i) = h.sigma_eps(j) * pre(i);
                    for (Eigen::Index s = i + 1; s <= j; ++s) {
                        dA(s) = A(j, s) * shrink;
                    }
                    // dSigma has nonzeros only in row/column j.
                    Eigen::VectorXd drow = A * dA;  // dSigma(m, j) for all m
                    drow(j) *= 2.0;
                    double dval = g.g_noise(j, j) * drow(j);
                    for (Eigen::Index m = 0; m < K; ++m) {
                        if (m == j) continue;
                        dval += g.g_noise(std::min(m, j), std::max(m, j)) * drow(m);
                    }
                    (*grad)(layout_.z_noise(i, j)) = dval * (1.0 - zi * zi);
                }
            }
        }
    }
    return value;
}

double LogPosterior::log_marginal_posterior(const HyperParams& h) const {
    const double lp = log_prior(h, prior_);
    if (!std::isfinite(lp)) return kNegInf;
    return likelihood(h, nullptr, nullptr) + lp;
}

double LogPosterior::value(const Eigen::VectorXd& u) const {
    const Constrained c = constrain(u, layout_, prior_);
    const double lp = log_prior(c.params, prior_);
    if (!std::isfinite(lp)) return kNegInf;
    try {
        return likelihood(c.params, &c, nullptr) + lp + c.log_jacobian;
    } catch (const NumericalError&) {
        return kNegInf;
    }
}

TargetEval LogPosterior::value_grad(const Eigen::VectorXd& u) const {
    const Constrained c = constrain(u, layout_, prior_);
    const HyperParams& h = c.params;
    TargetEval out;
    out.grad.setZero(layout_.dim());

    const double lp = log_prior(h, prior_);
    if (!std::isfinite(lp)) {
        out.value = kNegInf;
        return out;
    }
    double lik;
    try {
        lik = likelihood(h, &c, &out.grad);
    } catch (const NumericalError&) {
        out.value = kNegInf;
        out.grad.setZero();
        return out;
    }
    out.value = lik + lp + c.log_jacobian;

    // Prior and Jacobian gradients in unconstrained coordinates.
    const double eta = prior_.lkj_eta;
    const double cs = prior_.lengthscale_cauchy_scale;
    for (Eigen::Index k = 0; k < layout_.K; ++k) {
        for (Eigen::Index p = 0; p < layout_.P; ++p) {
            const double l = h.lengthscales(p, k);
            const double sig = l / prior_.lengthscale_upper;
            const double dl_du = prior_.lengthscale_upper * sig * (1.0 - sig);
            const double dprior_dl = -2.0 * l / (cs * cs + l * l);
            out.grad(layout_.lengthscale(p, k)) += dprior_dl * dl_du + (1.0 - 2.0 * sig);
        }
        out.grad(layout_.mean(k)) += -h.mean(k) / (prior_.mean_prior_sd * prior_.mean_prior_sd);
        const double s2 = prior_.scale_prior_sd * prior_.scale_prior_sd;
        out.grad(layout_.log_tau(k)) += -h.tau(k) * h.tau(k) / s2 + 1.0;
        out.grad(layout_.log_sigma(k)) += -h.sigma_eps(k) * h.sigma_eps(k) / s2 + 1.0;
    }
    for (Eigen::Index j = 1; j < layout_.K; ++j) {
        for (Eigen::Index i = 0; i < j; ++i) {
            const double coef = cpc_jacobian_coef(i, layout_.K);
            const double zs = c.z_sig(j * (j - 1) / 2 + i);
            out.grad(layout_.z_sig(i, j)) += -2.0 * zs * (eta - 1.0 + coef);
            if (!layout_.diagonal_noise) {
                const double zn = c.z_noise(j * (j - 1) / 2 + i);
                out.grad(layout_.z_noise(i, j)) += -2.0 * zn * (eta - 1.0 + coef);
            }
        }
    }
    return out;
}

double log_marginal_posterior(const TransformedPanel& panel, const HyperParams& h,
                              const PriorConfig& prior) {
    return LogPosterior(panel, prior).log_marginal_posterior(h);
}

Eigen::VectorXd grad_log_marginal_posterior(const TransformedPanel& panel, const Eigen::VectorXd& u,
                                            const PriorConfig& prior) {
    return LogPosterior(panel, prior).value_grad(u).grad;
}

}  // namespace abilitygp
