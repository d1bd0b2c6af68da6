#include "abilitygp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "abilitygp/predict.hpp"
#include "abilitygp/stats.hpp"

namespace abilitygp::cli {

namespace {

namespace fs = std::filesystem;

std::string prepare_out(const io::RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    return cfg.out_dir;
}

std::string join(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    return out;
}

ScorePanel require_panel(const io::RunConfig& cfg) {
    if (cfg.panel_path.empty()) throw ValidationError("config: input.panel is required");
    return io::read_panel_csv(cfg.panel_path);
}

void write_record_row(std::ofstream& out, const BacktestRecord& rec, const std::string& scheme) {
    out << rec.t + 1 << "," << scheme << "," << io::format_double(rec.c);
    for (Eigen::Index k = 0; k < rec.weights.size(); ++k) {
        out << "," << io::format_double(rec.weights(k));
    }
    for (Eigen::Index k = 0; k < rec.logscores.size(); ++k) {
        out << "," << io::format_double(rec.logscores(k));
    }
    out << "," << io::format_double(rec.pooled_log_score) << "\n";
}

}  // namespace

void cmd_fit(const io::RunConfig& cfg) {
    const ScorePanel panel = require_panel(cfg);
    const TransformedPanel tpanel = transform_scores(panel);
    HmcConfig hmc = cfg.sampler;
    hmc.seed = cfg.seed;
    const PosteriorDraws draws =
        fit_panel(tpanel, cfg.prior, hmc, cfg.threads, cfg.algorithm == "rwm");

    const std::string dir = prepare_out(cfg);
    io::write_draws_csv(join(dir, "draws.csv"), draws);
    io::write_diagnostics_json(join(dir, "diagnostics.json"), draws.mcmc,
                               draws.layout.coordinate_names(panel.expert_names), cfg.algorithm);
    io::write_manifest_json(join(dir, "manifest.json"), "fit", cfg,
                            {{"panel", cfg.panel_path},
                             {"draws", std::to_string(draws.size())},
                             {"experts", std::to_string(panel.K())}});
    for (const auto& warning : draws.mcmc.warnings) {
        std::cerr << "warning: " << warning << "\n";
    }
}

void cmd_predict(const io::RunConfig& cfg) {
    const ScorePanel panel = require_panel(cfg);
    if (cfg.draws_path.empty()) throw ValidationError("config: input.draws is required");
    if (cfg.queries_path.empty()) throw ValidationError("config: input.queries is required");
    const TransformedPanel tpanel = transform_scores(panel);
    const std::vector<HyperParams> params =
        io::read_draws_csv(cfg.draws_path, panel.expert_names, panel.P());
    const io::QueryTable queries = io::read_queries_csv(cfg.queries_path, panel.expert_names,
                                                        panel.P());
    const Eigen::Index K = panel.K();

    const std::string dir = prepare_out(cfg);
    auto out = open_out(join(dir, "predictions.csv"));
    out << "query";
    for (Eigen::Index p = 0; p < panel.P(); ++p) out << ",z_" << (p + 1);
    for (const auto& name : panel.expert_names) out << ",eta_mean_" << name;
    for (const auto& name : panel.expert_names) out << ",eta_sd_" << name;
    for (const auto& name : panel.expert_names) out << ",psi_" << name;
    for (Eigen::Index i = 0; i < K; ++i) {
        for (Eigen::Index j = i + 1; j < K; ++j) {
            out << ",eta_corr_" << (i + 1) << "_" << (j + 1);
        }
    }
    out << "\n";

    std::ofstream dump;
    if (cfg.dump_ability_draws) {
        dump = open_out(join(dir, "ability_draws.csv"));
        dump << "query,draw";
        for (const auto& name : panel.expert_names) dump << ",eta_" << name;
        dump << "\n";
    }

    for (Eigen::Index q = 0; q < queries.Z.rows(); ++q) {
        const AbilityDraws ability =
            sample_ability(queries.Z.row(q), queries.A.row(q), tpanel, params,
                           splitmix64(cfg.seed ^ static_cast<std::uint64_t>(q)));
        const Eigen::VectorXd probs = psi(ability);
        const Eigen::VectorXd mean = ability.eta.colwise().mean();
        const Eigen::MatrixXd centered = ability.eta.rowwise() - mean.transpose();
        const Eigen::MatrixXd cov =
            centered.transpose() * centered / std::max<double>(1.0, ability.eta.rows() - 1.0);
        out << (q + 1);
        for (Eigen::Index p = 0; p < panel.P(); ++p) {
            out << "," << io::format_double(queries.Z(q, p));
        }
        for (Eigen::Index k = 0; k < K; ++k) out << "," << io::format_double(mean(k));
        for (Eigen::Index k = 0; k < K; ++k) {
            out << "," << io::format_double(std::sqrt(std::max(0.0, cov(k, k))));
        }
        for (Eigen::Index k = 0; k < K; ++k) out << "," << io::format_double(probs(k));
        for (Eigen::Index i = 0; i < K; ++i) {
            for (Eigen::Index j = i + 1; j < K; ++j) {
                const double denom = std::sqrt(cov(i, i) * cov(j, j));
                out << "," << io::format_double(denom > 0.0 ? cov(i, j) / denom : 0.0);
            }
        }
        out << "\n";
        if (cfg.dump_ability_draws) {
            for (Eigen::Index m = 0; m < ability.eta.rows(); ++m) {
                dump << (q + 1) << "," << (m + 1);
                for (Eigen::Index k = 0; k < K; ++k) {
                    dump << "," << io::format_double(ability.eta(m, k));
                }
                dump << "\n";
            }
        }
    }
    io::write_manifest_json(join(dir, "manifest.json"), "predict", cfg,
                            {{"panel", cfg.panel_path},
                             {"draws_file", cfg.draws_path},
                             {"queries", std::to_string(queries.Z.rows())}});
}

void cmd_pool(const io::RunConfig& cfg) {
    const ScorePanel panel = require_panel(cfg);
    if (cfg.psi_path.empty()) throw ValidationError("config: input.psi is required");
    Eigen::MatrixXd psi_series = io::read_psi_csv(cfg.psi_path, panel.expert_names);
    if (psi_series.rows() != panel.n()) {
        throw ValidationError("pool: psi series has " + std::to_string(psi_series.rows()) +
                              " rows but the panel has " + std::to_string(panel.n()));
    }
    for (Eigen::Index t = 0; t < psi_series.rows(); ++t) {
        const double total = psi_series.row(t).sum();
        if ((psi_series.row(t).array() < 0.0).any() || std::abs(total - 1.0) > 1e-6) {
            throw ValidationError("pool: psi row " + std::to_string(t + 1) +
                                  " is not a probability vector (sum " + std::to_string(total) + ")");
        }
        psi_series.row(t) /= total;
    }
    const Eigen::Index T = panel.n();
    const Eigen::Index K = panel.K();

    const std::string dir = prepare_out(cfg);
    auto out = open_out(join(dir, "backtest.csv"));
    out << "t,scheme,c";
    for (const auto& name : panel.expert_names) out << ",w_" << name;
    for (const auto& name : panel.expert_names) out << ",ls_" << name;
    out << ",pooled_log_score\n";

    const std::vector<std::pair<std::string, double>> fixed_schemes = {
        {"natural", 0.0}, {"selection", 0.0}, {"softmax", cfg.pool_c}, {"equal", 0.0}};
    std::vector<double> totals(fixed_schemes.size() + 1, 0.0);
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::VectorXd p = psi_series.row(t);
        const Eigen::VectorXd ls = panel.L.row(t);
        for (std::size_t s = 0; s < fixed_schemes.size(); ++s) {
            PoolWeights w;
            if (fixed_schemes[s].first == "natural") w = natural_weights(p);
            else if (fixed_schemes[s].first == "selection") w = selection_weights(p);
            else if (fixed_schemes[s].first == "softmax") w = softmax_weights(p, cfg.pool_c);
            else w = equal_weights(K);
            BacktestRecord rec{static_cast<int>(t), p, fixed_schemes[s].second, w.w, ls,
                               pooled_log_score(w, ls)};
            totals[s] += rec.pooled_log_score;
            write_record_row(out, rec, fixed_schemes[s].first);
        }
    }
    const auto dynamic = dynamic_backtest(panel, psi_series, cfg.c_grid, cfg.pool_warmup);
    for (const auto& rec : dynamic) {
        totals.back() += rec.pooled_log_score;
        write_record_row(out, rec, "dynamic");
    }

    auto summary = open_out(join(dir, "pool_summary.csv"));
    summary << "scheme,cumulative_log_score\n";
    for (std::size_t s = 0; s < fixed_schemes.size(); ++s) {
        summary << fixed_schemes[s].first << "," << io::format_double(totals[s]) << "\n";
    }
    summary << "dynamic," << io::format_double(totals.back()) << "\n";

    io::write_manifest_json(join(dir, "manifest.json"), "pool", cfg,
                            {{"panel", cfg.panel_path},
                             {"psi", cfg.psi_path},
                             {"periods", std::to_string(T)}});
}

void cmd_simulate(const io::RunConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;
    sim.validate();
    const std::string dir = prepare_out(cfg);
    for (int r = 0; r < sim.n_datasets; ++r) {
        Rng rng(sim.seed, static_cast<std::uint64_t>(r));
        const SimDataset data = gen_dataset(sim, rng);
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "%03d", r);
        io::write_panel_csv(join(dir, std::string("sim_panel_") + suffix + ".csv"), data.panel);
        auto truth = open_out(join(dir, std::string("sim_truth_") + suffix + ".csv"));
        truth << "obs_id";
        for (const auto& name : data.panel.expert_names) truth << ",eta_true_" << name;
        truth << "\n";
        for (Eigen::Index i = 0; i < data.eta_true.rows(); ++i) {
            truth << (i + 1);
            for (Eigen::Index k = 0; k < data.eta_true.cols(); ++k) {
                truth << "," << io::format_double(data.eta_true(i, k));
            }
            truth << "\n";
        }
    }
    io::write_manifest_json(join(dir, "manifest.json"), "simulate", cfg,
                            {{"datasets", std::to_string(sim.n_datasets)},
                             {"n", std::to_string(sim.n)}});
}

void cmd_replicate(const io::RunConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;
    StudySettings settings = cfg.study_settings();
    const StudyResult study = run_study(sim, cfg.sim_arms, settings);

    const std::string dir = prepare_out(cfg);
    auto rows = open_out(join(dir, "per_replicate.csv"));
    rows << "arm_correlation,replicate,query_index,converged,multi_score,single_score,"
            "median_l1_1,median_l2_1,median_l1_2,median_l2_2,max_rhat_multi,max_rhat_single\n";
    auto ls = open_out(join(dir, "lengthscales.csv"));
    ls << "arm_correlation,replicate,converged,median_l1_1,median_l2_1,median_l1_2,median_l2_2\n";
    for (const auto& arm : study.arms) {
        for (const auto& r : arm.replicates) {
            rows << io::format_double(arm.z_correlation) << "," << (r.replicate + 1) << ","
                 << (r.query_index + 1) << "," << (r.converged ? 1 : 0) << ","
                 << io::format_double(r.multi_score) << "," << io::format_double(r.single_score);
            for (int i = 0; i < 4; ++i) rows << "," << io::format_double(r.lengthscale_medians(i));
            rows << "," << io::format_double(r.max_rhat_multi) << ","
                 << io::format_double(r.max_rhat_single) << "\n";
            ls << io::format_double(arm.z_correlation) << "," << (r.replicate + 1) << ","
               << (r.converged ? 1 : 0);
            for (int i = 0; i < 4; ++i) ls << "," << io::format_double(r.lengthscale_medians(i));
            ls << "\n";
        }
    }

    auto agg = open_out(join(dir, "aggregate.csv"));
    agg << "arm_correlation,multi_mean,single_mean,mean_paired_diff,multi_win_fraction,"
           "n_used,n_excluded\n";
    std::string excluded;
    for (const auto& arm : study.arms) {
        agg << io::format_double(arm.z_correlation) << "," << io::format_double(arm.multi_mean)
            << "," << io::format_double(arm.single_mean) << ","
            << io::format_double(arm.mean_paired_diff) << ","
            << io::format_double(arm.multi_win_fraction) << "," << arm.n_used << ","
            << arm.n_excluded << "\n";
        if (!excluded.empty()) excluded += ";";
        excluded += io::format_double(arm.z_correlation) + ":" + std::to_string(arm.n_excluded);
    }
    io::write_manifest_json(join(dir, "manifest.json"), "replicate", cfg,
                            {{"replicates", std::to_string(sim.n_datasets)},
                             {"excluded", excluded}});
}

void cmd_validate(const io::RunConfig& cfg) {
    const ScorePanel panel = require_panel(cfg);
    std::cout << "panel ok: n=" << panel.n() << " K=" << panel.K() << " P=" << panel.P()
              << " experts=";
    for (std::size_t k = 0; k < panel.expert_names.size(); ++k) {
        std::cout << (k == 0 ? "" : ",") << panel.expert_names[k];
    }
    std::cout << "\n";
}

}  // namespace abilitygp::cli
