#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "abilitygp/cli.hpp"
#include "abilitygp/fit.hpp"
#include "abilitygp/io.hpp"
#include "abilitygp/kernels.hpp"
#include "abilitygp/model.hpp"
#include "abilitygp/panel.hpp"
#include "abilitygp/pool.hpp"
#include "abilitygp/predict.hpp"
#include "abilitygp/sampler.hpp"
#include "abilitygp/sim.hpp"

namespace py = pybind11;
using namespace abilitygp;

namespace {

CrossCovSpec make_spec(const Eigen::MatrixXd& lengthscales, const Eigen::MatrixXd& mixing) {
    std::vector<SeArdKernel> kernels;
    for (Eigen::Index s = 0; s < lengthscales.cols(); ++s) {
        kernels.emplace_back(lengthscales.col(s), 1.0);
    }
    return CrossCovSpec(std::move(kernels), mixing);
}

PoolWeights weights_from_array(const Eigen::VectorXd& w) {
    PoolWeights pw;
    pw.w = w;
    return pw;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Joint local predictive ability of experts: correlated multi-output GP on "
              "cube-root transformed log scores, plus locally weighted forecast pools";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<ScorePanel>(m, "ScorePanel")
        .def(py::init<Eigen::MatrixXd, Eigen::MatrixXd, Eigen::MatrixXd,
                      std::vector<std::string>>(),
             py::arg("Z"), py::arg("L"), py::arg("A"), py::arg("expert_names"))
        .def(py::init<Eigen::MatrixXd, Eigen::MatrixXd, std::vector<std::string>>(),
             py::arg("Z"), py::arg("L"), py::arg("expert_names"))
        .def_readonly("Z", &ScorePanel::Z)
        .def_readonly("L", &ScorePanel::L)
        .def_readonly("A", &ScorePanel::A)
        .def_readonly("expert_names", &ScorePanel::expert_names)
        .def_property_readonly("n", &ScorePanel::n)
        .def_property_readonly("K", &ScorePanel::K)
        .def_property_readonly("P", &ScorePanel::P);

    py::class_<TransformedPanel>(m, "TransformedPanel")
        .def_readonly("Lpp", &TransformedPanel::Lpp)
        .def_readonly("Z", &TransformedPanel::Z)
        .def_readonly("expert_names", &TransformedPanel::expert_names);

    m.def("compute_a", &compute_a, py::arg("sigma_pred"),
          "Maximum log score of a Gaussian predictive density.");
    m.def("transform_scores", &transform_scores, py::arg("panel"));
    m.def("elpd_from_latent", &elpd_from_latent, py::arg("a_star"), py::arg("f"),
          py::arg("sigma_kk"));

    m.def(
        "se_ard",
        [](const Eigen::VectorXd& zi, const Eigen::VectorXd& zj, const Eigen::VectorXd& ls,
           double signal_sd) { return se_ard(zi, zj, SeArdKernel(ls, signal_sd)); },
        py::arg("z_i"), py::arg("z_j"), py::arg("lengthscales"), py::arg("signal_sd") = 1.0);
    m.def(
        "cross_cov",
        [](const Eigen::MatrixXd& Za, const Eigen::MatrixXd& Zb,
           const Eigen::MatrixXd& lengthscales, const Eigen::MatrixXd& mixing) {
            return cross_cov(Za, Zb, make_spec(lengthscales, mixing));
        },
        py::arg("Z_a"), py::arg("Z_b"), py::arg("lengthscales"), py::arg("mixing"),
        "Expert-major cross covariance; lengthscales is P x K, one column per latent process.");
    m.def(
        "marginal_cov",
        [](const Eigen::MatrixXd& Z, const Eigen::MatrixXd& lengthscales,
           const Eigen::MatrixXd& mixing, const Eigen::MatrixXd& Sigma) {
            return marginal_cov(Z, make_spec(lengthscales, mixing), Sigma);
        },
        py::arg("Z"), py::arg("lengthscales"), py::arg("mixing"), py::arg("Sigma"));

    py::class_<PriorConfig>(m, "PriorConfig")
        .def(py::init<>())
        .def_readwrite("lengthscale_upper", &PriorConfig::lengthscale_upper)
        .def_readwrite("lengthscale_cauchy_scale", &PriorConfig::lengthscale_cauchy_scale)
        .def_readwrite("lkj_eta", &PriorConfig::lkj_eta)
        .def_readwrite("scale_prior_sd", &PriorConfig::scale_prior_sd)
        .def_readwrite("mean_prior_sd", &PriorConfig::mean_prior_sd)
        .def_readwrite("diagonal_noise", &PriorConfig::diagonal_noise);

    py::class_<HyperParams>(m, "HyperParams")
        .def(py::init([](Eigen::MatrixXd lengthscales, Eigen::VectorXd mean, Eigen::VectorXd tau,
                         Eigen::MatrixXd omega_sig, Eigen::VectorXd sigma_eps,
                         Eigen::MatrixXd omega_noise) {
                 return HyperParams{std::move(lengthscales), std::move(mean),     std::move(tau),
                                    std::move(omega_sig),    std::move(sigma_eps),
                                    std::move(omega_noise)};
             }),
             py::arg("lengthscales"), py::arg("mean"), py::arg("tau"), py::arg("omega_sig"),
             py::arg("sigma_eps"), py::arg("omega_noise"))
        .def_readwrite("lengthscales", &HyperParams::lengthscales)
        .def_readwrite("mean", &HyperParams::mean)
        .def_readwrite("tau", &HyperParams::tau)
        .def_readwrite("omega_sig", &HyperParams::omega_sig)
        .def_readwrite("sigma_eps", &HyperParams::sigma_eps)
        .def_readwrite("omega_noise", &HyperParams::omega_noise)
        .def("mixing", &HyperParams::mixing)
        .def("noise_cov", &HyperParams::noise_cov);

    m.def("log_prior", &log_prior, py::arg("params"), py::arg("prior") = PriorConfig{});
    m.def("log_marginal_posterior", &log_marginal_posterior, py::arg("panel"), py::arg("params"),
          py::arg("prior") = PriorConfig{});
    m.def("grad_log_marginal_posterior", &grad_log_marginal_posterior, py::arg("panel"),
          py::arg("u"), py::arg("prior") = PriorConfig{});
    m.def("lkj_log_pdf", &lkj_log_pdf, py::arg("omega"), py::arg("eta"));

    py::class_<LogPosterior>(m, "LogPosterior")
        .def(py::init<TransformedPanel, PriorConfig>(), py::arg("panel"),
             py::arg("prior") = PriorConfig{})
        .def_property_readonly("dim", &LogPosterior::dim)
        .def("value", &LogPosterior::value, py::arg("u"))
        .def("value_grad",
             [](const LogPosterior& lp, const Eigen::VectorXd& u) {
                 const TargetEval e = lp.value_grad(u);
                 return std::make_pair(e.value, e.grad);
             },
             py::arg("u"))
        .def("constrained_names", [](const LogPosterior& lp, std::vector<std::string> experts) {
            return lp.layout().constrained_names(experts);
        });

    py::class_<HmcConfig>(m, "HmcConfig")
        .def(py::init<>())
        .def_readwrite("n_chains", &HmcConfig::n_chains)
        .def_readwrite("n_warmup", &HmcConfig::n_warmup)
        .def_readwrite("n_draws", &HmcConfig::n_draws)
        .def_readwrite("target_accept", &HmcConfig::target_accept)
        .def_readwrite("max_leapfrog", &HmcConfig::max_leapfrog)
        .def_readwrite("seed", &HmcConfig::seed);

    py::class_<ChainDiagnostics>(m, "ChainDiagnostics")
        .def_readonly("accept_rate", &ChainDiagnostics::accept_rate)
        .def_readonly("step_size", &ChainDiagnostics::step_size)
        .def_readonly("divergences", &ChainDiagnostics::divergences);

    py::class_<McmcResult>(m, "McmcResult")
        .def_readonly("draws", &McmcResult::draws)
        .def_readonly("logp", &McmcResult::logp)
        .def_readonly("chains", &McmcResult::chains)
        .def_readonly("split_rhat", &McmcResult::split_rhat)
        .def_readonly("bulk_ess", &McmcResult::bulk_ess)
        .def_readonly("warnings", &McmcResult::warnings)
        .def("divergence_rate", &McmcResult::divergence_rate);

    m.def(
        "hmc_sample",
        [](const LogPosterior& target, const HmcConfig& cfg, int threads) {
            py::gil_scoped_release release;
            return hmc_sample([&](const Eigen::VectorXd& u) { return target.value_grad(u); },
                              target.dim(), cfg, threads);
        },
        py::arg("target"), py::arg("config"), py::arg("threads") = 1);
    m.def(
        "hmc_sample_fn",
        [](const std::function<std::pair<double, Eigen::VectorXd>(Eigen::VectorXd)>& fn,
           Eigen::Index dim, const HmcConfig& cfg) {
            return hmc_sample(
                [&](const Eigen::VectorXd& u) {
                    auto [v, g] = fn(u);
                    return TargetEval{v, std::move(g)};
                },
                dim, cfg, 1);
        },
        py::arg("fn"), py::arg("dim"), py::arg("config"),
        "HMC over a python callable returning (value, gradient); single threaded.");
    m.def(
        "rwm_sample_fn",
        [](const std::function<double(Eigen::VectorXd)>& fn, Eigen::Index dim,
           const HmcConfig& cfg) {
            return rwm_sample([&](const Eigen::VectorXd& u) { return fn(u); }, dim, cfg, 1);
        },
        py::arg("fn"), py::arg("dim"), py::arg("config"));
    m.def("split_rhat", &split_rhat, py::arg("chains"));
    m.def("bulk_ess", &bulk_ess, py::arg("chains"));

    py::class_<PosteriorDraws>(m, "PosteriorDraws")
        .def_readonly("unconstrained", &PosteriorDraws::unconstrained)
        .def_readonly("params", &PosteriorDraws::params)
        .def_readonly("lp", &PosteriorDraws::lp)
        .def_readonly("mcmc", &PosteriorDraws::mcmc)
        .def_readonly("expert_names", &PosteriorDraws::expert_names)
        .def_property_readonly("size", &PosteriorDraws::size)
        .def("constrained_names", [](const PosteriorDraws& d) {
            return d.layout.constrained_names(d.expert_names);
        });

    m.def(
        "fit_panel",
        [](const TransformedPanel& panel, const PriorConfig& prior, const HmcConfig& cfg,
           int threads, bool use_rwm) {
            py::gil_scoped_release release;
            return fit_panel(panel, prior, cfg, threads, use_rwm);
        },
        py::arg("panel"), py::arg("prior"), py::arg("config"), py::arg("threads") = 1,
        py::arg("use_rwm") = false);

    py::class_<LatentPosterior>(m, "LatentPosterior")
        .def_readonly("mean", &LatentPosterior::mean)
        .def_readonly("cov", &LatentPosterior::cov)
        .def_readonly("clipped", &LatentPosterior::clipped);

    py::class_<AbilityDraws>(m, "AbilityDraws")
        .def_readonly("eta", &AbilityDraws::eta)
        .def_readonly("z_star", &AbilityDraws::z_star)
        .def_readonly("a_star", &AbilityDraws::a_star);

    m.def("latent_posterior_at", &latent_posterior_at, py::arg("z_star"), py::arg("panel"),
          py::arg("params"));
    m.def(
        "sample_ability",
        [](const Eigen::VectorXd& z_star, const Eigen::VectorXd& a_star,
           const TransformedPanel& panel, const std::vector<HyperParams>& draws,
           std::uint64_t seed) {
            py::gil_scoped_release release;
            return sample_ability(z_star, a_star, panel, draws, seed);
        },
        py::arg("z_star"), py::arg("a_star"), py::arg("panel"), py::arg("draws"), py::arg("seed"));
    m.def("psi", py::overload_cast<const Eigen::MatrixXd&>(&psi), py::arg("eta"));
    m.def("prob_second_best_gaussian", &prob_second_best_gaussian, py::arg("mu1"), py::arg("mu2"),
          py::arg("sd1"), py::arg("sd2"), py::arg("rho"));

    m.def("natural_weights", [](const Eigen::VectorXd& p) { return natural_weights(p).w; },
          py::arg("psi"));
    m.def("selection_weights", [](const Eigen::VectorXd& p) { return selection_weights(p).w; },
          py::arg("psi"));
    m.def("softmax_weights",
          [](const Eigen::VectorXd& p, double c) { return softmax_weights(p, c).w; },
          py::arg("psi"), py::arg("c"));
    m.def("equal_weights", [](Eigen::Index K) { return equal_weights(K).w; }, py::arg("K"));
    m.def(
        "pooled_log_score",
        [](const Eigen::VectorXd& w, const Eigen::VectorXd& ls) {
            return pooled_log_score(weights_from_array(w), ls);
        },
        py::arg("weights"), py::arg("logscores"));

    py::class_<BacktestRecord>(m, "BacktestRecord")
        .def_readonly("t", &BacktestRecord::t)
        .def_readonly("psi", &BacktestRecord::psi)
        .def_readonly("c", &BacktestRecord::c)
        .def_readonly("weights", &BacktestRecord::weights)
        .def_readonly("logscores", &BacktestRecord::logscores)
        .def_readonly("pooled_log_score", &BacktestRecord::pooled_log_score);
    m.def("dynamic_backtest", &dynamic_backtest, py::arg("panel"), py::arg("psi_series"),
          py::arg("c_grid"), py::arg("warmup"));

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("n", &SimConfig::n)
        .def_readwrite("b", &SimConfig::b)
        .def_readwrite("z_correlation", &SimConfig::z_correlation)
        .def_readwrite("n_datasets", &SimConfig::n_datasets)
        .def_readwrite("seed", &SimConfig::seed);
    m.def(
        "gen_dataset",
        [](const SimConfig& cfg, std::uint64_t stream) {
            Rng rng(cfg.seed, stream);
            SimDataset d = gen_dataset(cfg, rng);
            return std::make_pair(std::move(d.panel), std::move(d.eta_true));
        },
        py::arg("config"), py::arg("stream") = 0,
        "Returns (panel, eta_true) for one replicate stream.");
    m.def(
        "joint_truth_density",
        [](const AbilityDraws& ability, const Eigen::VectorXd& truth, const std::string& estimator) {
            return joint_truth_density(ability, truth,
                                       estimator == "kde" ? DensityEstimator::kde
                                                          : DensityEstimator::moment_gaussian);
        },
        py::arg("ability"), py::arg("eta_true"), py::arg("estimator") = "gaussian");
}
