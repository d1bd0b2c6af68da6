#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "abilitygp/cli.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string out_dir;
    std::string seed;
    int threads = -1;
};

void add_common(CLI::App* sub, Overrides& ov) {
    sub->add_option("-c,--config", ov.config_path, "configuration file (JSON)")->required();
    sub->add_option("--seed", ov.seed, "override the config seed");
    sub->add_option("--threads", ov.threads, "override the thread count")
        ->envname("ABILITYGP_THREADS");
    sub->add_option("--out", ov.out_dir, "override the output directory")
        ->envname("ABILITYGP_OUT");
}

abilitygp::io::RunConfig make_config(const Overrides& ov) {
    abilitygp::io::RunConfig cfg = abilitygp::io::load_config(ov.config_path);
    if (!ov.seed.empty()) cfg.seed = std::stoull(ov.seed);
    if (ov.threads >= 0) cfg.threads = ov.threads;
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint local predictive ability of experts via a correlated multi-output GP "
                 "on cube-root transformed log scores, with locally weighted forecast pools"};
    app.require_subcommand(1);

    Overrides ov;
    auto* fit = app.add_subcommand("fit", "sample the hyperparameter posterior from a score panel");
    auto* predict = app.add_subcommand("predict", "joint ability draws and psi at query points");
    auto* pool = app.add_subcommand("pool", "backtest forecast-combination schemes");
    auto* simulate = app.add_subcommand("simulate", "generate pseudo log-score datasets");
    auto* replicate = app.add_subcommand("replicate", "run the simulation study end to end");
    auto* validate = app.add_subcommand("validate", "check a panel file and exit");
    for (auto* sub : {fit, predict, pool, simulate, replicate, validate}) add_common(sub, ov);

    CLI11_PARSE(app, argc, argv);

    try {
        const abilitygp::io::RunConfig cfg = make_config(ov);
        if (fit->parsed()) abilitygp::cli::cmd_fit(cfg);
        else if (predict->parsed()) abilitygp::cli::cmd_predict(cfg);
        else if (pool->parsed()) abilitygp::cli::cmd_pool(cfg);
        else if (simulate->parsed()) abilitygp::cli::cmd_simulate(cfg);
        else if (replicate->parsed()) abilitygp::cli::cmd_replicate(cfg);
        else if (validate->parsed()) abilitygp::cli::cmd_validate(cfg);
    } catch (const abilitygp::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const abilitygp::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
