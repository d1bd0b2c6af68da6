// End-to-end checks of the command-line tool; argv[1] is the binary path.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (!ok) {
        ++failures;
        std::cerr << "FAILED: " << what << "\n";
    }
}

std::string cli_path;

int run(const std::string& args) {
    const std::string cmd = cli_path + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
    double num(std::size_t row, const std::string& name) const {
        return std::stod(rows[row][static_cast<std::size_t>(col(name))]);
    }
};

Csv read_csv(const fs::path& path) {
    std::ifstream in(path);
    Csv out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            out.header = cells;
            first = false;
        } else {
            out.rows.push_back(cells);
        }
    }
    return out;
}

std::string json_config(const std::map<std::string, std::string>& sections) {
    std::string out = "{";
    bool comma = false;
    for (const auto& [key, body] : sections) {
        if (comma) out += ",";
        out += "\"" + key + "\":" + body;
        comma = true;
    }
    return out + "}";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-cli>\n";
        return 1;
    }
    cli_path = argv[1];
    const fs::path dir = fs::temp_directory_path() / "abilitygp_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // --- simulate + validate ---
    const fs::path sim_cfg = dir / "sim.json";
    write_file(sim_cfg, json_config({{"seed", "11"},
                                     {"sim", R"({"n": 30, "n_datasets": 1})"},
                                     {"output", "{\"dir\": \"" + (dir / "sim").string() + "\"}"}}));
    check(run("simulate -c " + sim_cfg.string()) == 0, "simulate exits 0");
    const fs::path panel = dir / "sim" / "sim_panel_000.csv";
    check(fs::exists(panel), "simulate writes the panel csv");
    check(fs::exists(dir / "sim" / "sim_truth_000.csv"), "simulate writes the truth csv");

    const fs::path val_cfg = dir / "val.json";
    write_file(val_cfg, json_config({{"input", "{\"panel\": \"" + panel.string() + "\"}"}}));
    check(run("validate -c " + val_cfg.string()) == 0, "validate accepts a good panel");

    // Broken panel: a < log score must name the cell and exit 2.
    const fs::path bad_panel = dir / "bad_panel.csv";
    write_file(bad_panel,
               "obs_id,z_1,ls_m1,a_m1\n"
               "1,0.0,-1.0,0.0\n"
               "2,1.0,0.5,0.0\n");
    const fs::path bad_cfg = dir / "bad.json";
    write_file(bad_cfg, json_config({{"input", "{\"panel\": \"" + bad_panel.string() + "\"}"}}));
    {
        const std::string cmd = cli_path + " validate -c " + bad_cfg.string() + " 2> " +
                                (dir / "bad_err.txt").string();
        const int status = std::system(cmd.c_str());
        check(WIFEXITED(status) && WEXITSTATUS(status) == 2, "validation failure exits 2");
        const std::string err = slurp(dir / "bad_err.txt");
        check(err.find("observation 1") != std::string::npos, "error names the observation");
        check(err.find("m1") != std::string::npos, "error names the expert");
    }
    check(run("validate -c " + (dir / "missing.json").string()) == 2, "missing config exits 2");

    // --- fit determinism and draw support ---
    const auto fit_cfg_for = [&](const std::string& out) {
        return json_config(
            {{"seed", "21"},
             {"input", "{\"panel\": \"" + panel.string() + "\"}"},
             {"sampler", R"({"chains": 2, "warmup": 80, "draws": 60})"},
             {"output", "{\"dir\": \"" + (dir / out).string() + "\"}"}});
    };
    const fs::path fit_cfg1 = dir / "fit1.json";
    const fs::path fit_cfg2 = dir / "fit2.json";
    write_file(fit_cfg1, fit_cfg_for("fit1"));
    write_file(fit_cfg2, fit_cfg_for("fit2"));
    check(run("fit -c " + fit_cfg1.string()) == 0, "fit exits 0");
    check(run("fit -c " + fit_cfg2.string()) == 0, "second fit exits 0");
    const std::string draws1 = slurp(dir / "fit1" / "draws.csv");
    check(!draws1.empty(), "draws.csv written");
    check(draws1 == slurp(dir / "fit2" / "draws.csv"), "fit reruns are byte-identical");
    check(fs::exists(dir / "fit1" / "diagnostics.json"), "diagnostics written");
    check(fs::exists(dir / "fit1" / "manifest.json"), "manifest written");

    const Csv draws = read_csv(dir / "fit1" / "draws.csv");
    check(draws.rows.size() == 120, "draws.csv has chains*draws rows");
    for (const std::string col : {"lengthscale1_expert1", "lengthscale2_expert1",
                                  "lengthscale1_expert2", "lengthscale2_expert2"}) {
        check(draws.col(col) >= 0, "draws.csv has column " + col);
        bool in_range = true;
        for (std::size_t r = 0; r < draws.rows.size(); ++r) {
            const double v = draws.num(r, col);
            in_range = in_range && v > 0.0 && v < 100.0;
        }
        check(in_range, col + " stays in (0, 100)");
    }

    // --- predict: psi sums to one; K=1 panel gives psi = 1 ---
    const fs::path queries = dir / "queries.csv";
    write_file(queries, "z_1,z_2\n0.0,0.0\n1.0,-0.5\n-2.0,0.25\n");
    const fs::path pred_cfg = dir / "pred.json";
    write_file(pred_cfg,
               json_config({{"seed", "31"},
                            {"input", "{\"panel\": \"" + panel.string() + "\", \"draws\": \"" +
                                          (dir / "fit1" / "draws.csv").string() +
                                          "\", \"queries\": \"" + queries.string() + "\"}"},
                            {"output", "{\"dir\": \"" + (dir / "pred").string() + "\"}"}}));
    check(run("predict -c " + pred_cfg.string()) == 0, "predict exits 0");
    const Csv preds = read_csv(dir / "pred" / "predictions.csv");
    check(preds.rows.size() == 3, "one prediction row per query");
    for (std::size_t r = 0; r < preds.rows.size(); ++r) {
        const double total = preds.num(r, "psi_expert1") + preds.num(r, "psi_expert2");
        check(std::abs(total - 1.0) < 1e-12, "psi sums to one");
        const double corr = preds.num(r, "eta_corr_1_2");
        check(corr >= -1.0 && corr <= 1.0, "eta correlation is in range");
    }

    {
        // Single-expert panel: psi must be identically one.
        const fs::path single_panel = dir / "single_panel.csv";
        std::ifstream in(panel);
        std::ofstream out(single_panel);
        std::string line;
        while (std::getline(in, line)) {
            // keep obs_id, z_1, z_2, first score column
            std::stringstream ss(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            out << cells[0] << "," << cells[1] << "," << cells[2] << "," << cells[3] << "\n";
        }
        in.close();
        out.close();
        const fs::path fit1_cfg = dir / "fit_single.json";
        write_file(fit1_cfg,
                   json_config({{"seed", "41"},
                                {"input", "{\"panel\": \"" + single_panel.string() + "\"}"},
                                {"sampler", R"({"chains": 2, "warmup": 60, "draws": 40})"},
                                {"output", "{\"dir\": \"" + (dir / "fit_single").string() + "\"}"}}));
        check(run("fit -c " + fit1_cfg.string()) == 0, "single-expert fit exits 0");
        const fs::path pred1_cfg = dir / "pred_single.json";
        write_file(pred1_cfg,
                   json_config({{"seed", "42"},
                                {"input", "{\"panel\": \"" + single_panel.string() +
                                              "\", \"draws\": \"" +
                                              (dir / "fit_single" / "draws.csv").string() +
                                              "\", \"queries\": \"" + queries.string() + "\"}"},
                                {"output", "{\"dir\": \"" + (dir / "pred_single").string() + "\"}"}}));
        check(run("predict -c " + pred1_cfg.string()) == 0, "single-expert predict exits 0");
        const Csv p1 = read_csv(dir / "pred_single" / "predictions.csv");
        bool all_one = !p1.rows.empty();
        for (std::size_t r = 0; r < p1.rows.size(); ++r) {
            all_one = all_one && p1.num(r, "psi_expert1") == 1.0;
        }
        check(all_one, "psi is identically one for a single expert");
    }

    // --- pool identities on a hand-built panel ---
    const fs::path pool_panel = dir / "pool_panel.csv";
    const fs::path pool_psi = dir / "pool_psi.csv";
    {
        std::ofstream out(pool_panel);
        out << "obs_id,z_1,ls_m1,ls_m2\n";
        std::ofstream psi_out(pool_psi);
        psi_out << "psi_m1,psi_m2\n";
        unsigned state = 12345;
        for (int t = 0; t < 25; ++t) {
            auto next = [&state] {
                state = state * 1103515245u + 12345u;
                return static_cast<double>((state >> 16) & 0x7fff) / 32768.0;
            };
            const double l1 = -0.2 - 3.0 * next();
            const double l2 = -0.2 - 3.0 * next();
            const double p = 0.05 + 0.9 * next();
            out << (t + 1) << ",0.0," << l1 << "," << l2 << "\n";
            psi_out << p << "," << (1.0 - p) << "\n";
        }
    }
    const fs::path pool_cfg = dir / "pool.json";
    write_file(pool_cfg,
               json_config({{"seed", "51"},
                            {"input", "{\"panel\": \"" + pool_panel.string() + "\", \"psi\": \"" +
                                          pool_psi.string() + "\"}"},
                            {"pooling", R"({"c": 1000000.0, "c_grid": [0], "warmup": 5})"},
                            {"output", "{\"dir\": \"" + (dir / "pool").string() + "\"}"}}));
    check(run("pool -c " + pool_cfg.string()) == 0, "pool exits 0");
    const Csv backtest = read_csv(dir / "pool" / "backtest.csv");
    const Csv summary = read_csv(dir / "pool" / "pool_summary.csv");

    // equal-weights cumulative equals sum_t log mean_k exp(ls_tk)
    const Csv pp = read_csv(pool_panel);
    double expected_equal = 0.0;
    for (std::size_t t = 0; t < pp.rows.size(); ++t) {
        const double a = std::exp(pp.num(t, "ls_m1"));
        const double b = std::exp(pp.num(t, "ls_m2"));
        expected_equal += std::log(0.5 * (a + b));
    }
    std::map<std::string, double> totals;
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
        totals[summary.rows[r][0]] = std::stod(summary.rows[r][1]);
    }
    check(std::abs(totals["equal"] - expected_equal) < 1e-9, "equal column matches the identity");
    check(totals["dynamic"] == totals["equal"], "singleton zero grid reproduces equal weights");
    check(std::abs(totals["softmax"] - totals["selection"]) < 1e-9,
          "softmax at the infinity proxy matches selection");
    // per-period: selection weights are one-hot
    bool found_selection = false;
    for (std::size_t r = 0; r < backtest.rows.size(); ++r) {
        if (backtest.rows[r][1] == "selection") {
            found_selection = true;
            const double w1 = backtest.num(r, "w_m1");
            check(w1 == 0.0 || w1 == 1.0, "selection weights are one-hot");
        }
    }
    check(found_selection, "backtest carries selection rows");

    // misaligned psi series
    {
        const fs::path short_psi = dir / "short_psi.csv";
        write_file(short_psi, "psi_m1,psi_m2\n0.5,0.5\n");
        const fs::path cfg = dir / "pool_short.json";
        write_file(cfg, json_config({{"input", "{\"panel\": \"" + pool_panel.string() +
                                                   "\", \"psi\": \"" + short_psi.string() + "\"}"},
                                     {"output", "{\"dir\": \"" + (dir / "poolx").string() + "\"}"}}));
        check(run("pool -c " + cfg.string()) == 2, "misaligned psi exits 2");
    }

    // --- replicate: tiny smoke, table shape, determinism ---
    const auto rep_cfg_for = [&](const std::string& out) {
        return json_config(
            {{"seed", "61"},
             {"sim", R"({"n": 16, "n_datasets": 1, "arms": [0.7, 0.0]})"},
             {"sampler", R"({"chains": 2, "warmup": 40, "draws": 40})"},
             {"output", "{\"dir\": \"" + (dir / out).string() + "\"}"}});
    };
    write_file(dir / "rep1.json", rep_cfg_for("rep1"));
    write_file(dir / "rep2.json", rep_cfg_for("rep2"));
    check(run("replicate -c " + (dir / "rep1.json").string()) == 0, "replicate exits 0");
    check(run("replicate -c " + (dir / "rep2.json").string()) == 0, "replicate rerun exits 0");
    const Csv agg = read_csv(dir / "rep1" / "aggregate.csv");
    check(agg.rows.size() == 2, "aggregate has one row per arm");
    check(agg.col("multi_mean") >= 0 && agg.col("single_mean") >= 0,
          "aggregate has the four mean-score cells");
    const Csv per = read_csv(dir / "rep1" / "per_replicate.csv");
    check(per.rows.size() == 2, "per-replicate rows for both arms");
    for (std::size_t r = 0; r < per.rows.size(); ++r) {
        check(std::isfinite(per.num(r, "multi_score")), "multi score finite");
        check(std::isfinite(per.num(r, "single_score")), "single score finite");
        check(per.num(r, "median_l1_1") > 0.0, "length-scale medians populated");
    }
    check(slurp(dir / "rep1" / "per_replicate.csv") == slurp(dir / "rep2" / "per_replicate.csv"),
          "replicate reruns are byte-identical");
    check(slurp(dir / "rep1" / "aggregate.csv") == slurp(dir / "rep2" / "aggregate.csv"),
          "aggregate reruns are byte-identical");
    check(fs::exists(dir / "rep1" / "lengthscales.csv"), "length-scale summary written");
    const std::string manifest = slurp(dir / "rep1" / "manifest.json");
    check(manifest.find("excluded") != std::string::npos, "manifest reports exclusions");

    if (failures == 0) {
        std::cout << "all cli checks passed\n";
        fs::remove_all(dir);
        return 0;
    }
    std::cerr << failures << " cli check(s) failed; artifacts kept in " << dir << "\n";
    return 1;
}
