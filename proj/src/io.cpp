#include "abilitygp/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace abilitygp::io {

namespace {

using nlohmann::json;

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("'" + path + "' is empty");
    table.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != table.header.size()) {
            throw ValidationError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(table.header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

double parse_double(const std::string& cell, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(context + ": cannot parse '" + cell + "' as a number");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    return out;
}

void check_keys(const json& obj, const std::string& where,
                const std::vector<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError("config: unknown key '" + key + "' in " + where);
        }
    }
}

std::vector<double> default_c_grid() {
    std::vector<double> grid;
    for (int c = 0; c <= 20; ++c) grid.push_back(static_cast<double>(c));
    grid.push_back(1e6);
    return grid;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a_hash(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ScorePanel read_panel_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    if (!table.column("obs_id")) {
        throw ValidationError("'" + path + "': missing obs_id column");
    }
    std::vector<std::size_t> z_cols;
    for (Eigen::Index p = 1;; ++p) {
        const auto col = table.column("z_" + std::to_string(p));
        if (!col) break;
        z_cols.push_back(*col);
    }
    if (z_cols.empty()) {
        throw ValidationError("'" + path + "': no pooling covariate columns z_1..z_P found");
    }
    std::vector<std::string> experts;
    std::vector<std::size_t> ls_cols;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i].rfind("ls_", 0) == 0) {
            experts.push_back(table.header[i].substr(3));
            ls_cols.push_back(i);
        }
    }
    if (experts.empty()) {
        throw ValidationError("'" + path + "': no score columns ls_<expert> found");
    }
    std::vector<std::optional<std::size_t>> a_cols;
    bool any_a = false;
    for (const auto& name : experts) {
        a_cols.push_back(table.column("a_" + name));
        any_a = any_a || a_cols.back().has_value();
    }
    if (any_a) {
        for (std::size_t k = 0; k < experts.size(); ++k) {
            if (!a_cols[k]) {
                throw ValidationError("'" + path + "': a_" + experts[k] +
                                      " is missing while other a columns are present");
            }
        }
    }

    const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
    if (n < 1) throw ValidationError("'" + path + "': no observations");
    const Eigen::Index P = static_cast<Eigen::Index>(z_cols.size());
    const Eigen::Index K = static_cast<Eigen::Index>(experts.size());
    Eigen::MatrixXd Z(n, P);
    Eigen::MatrixXd L(n, K);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::string ctx = "'" + path + "' row " + std::to_string(i + 1);
        for (Eigen::Index p = 0; p < P; ++p) {
            Z(i, p) = parse_double(row[z_cols[static_cast<std::size_t>(p)]], ctx);
        }
        for (Eigen::Index k = 0; k < K; ++k) {
            L(i, k) = parse_double(row[ls_cols[static_cast<std::size_t>(k)]], ctx);
            if (any_a) {
                A(i, k) = parse_double(row[*a_cols[static_cast<std::size_t>(k)]], ctx);
            }
        }
    }
    return ScorePanel(std::move(Z), std::move(L), std::move(A), std::move(experts));
}

void write_panel_csv(const std::string& path, const ScorePanel& panel) {
    auto out = open_out(path);
    out << "obs_id";
    for (Eigen::Index p = 0; p < panel.P(); ++p) out << ",z_" << (p + 1);
    for (const auto& name : panel.expert_names) out << ",ls_" << name;
    const bool write_a = !panel.A.isZero(0.0);
    if (write_a) {
        for (const auto& name : panel.expert_names) out << ",a_" << name;
    }
    out << "\n";
    for (Eigen::Index i = 0; i < panel.n(); ++i) {
        out << (i + 1);
        for (Eigen::Index p = 0; p < panel.P(); ++p) out << "," << format_double(panel.Z(i, p));
        for (Eigen::Index k = 0; k < panel.K(); ++k) out << "," << format_double(panel.L(i, k));
        if (write_a) {
            for (Eigen::Index k = 0; k < panel.K(); ++k) out << "," << format_double(panel.A(i, k));
        }
        out << "\n";
    }
}

QueryTable read_queries_csv(const std::string& path, const std::vector<std::string>& experts,
                            Eigen::Index P) {
    const CsvTable table = read_csv(path);
    QueryTable q;
    const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
    if (n < 1) throw ValidationError("'" + path + "': no query rows");
    q.Z.resize(n, P);
    q.A = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(experts.size()));
    std::vector<std::size_t> z_cols;
    for (Eigen::Index p = 1; p <= P; ++p) {
        const auto col = table.column("z_" + std::to_string(p));
        if (!col) {
            throw ValidationError("'" + path + "': missing column z_" + std::to_string(p));
        }
        z_cols.push_back(*col);
    }
    std::vector<std::optional<std::size_t>> a_cols;
    for (const auto& name : experts) a_cols.push_back(table.column("a_" + name));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::string ctx = "'" + path + "' row " + std::to_string(i + 1);
        for (Eigen::Index p = 0; p < P; ++p) {
            q.Z(i, p) = parse_double(row[z_cols[static_cast<std::size_t>(p)]], ctx);
        }
        for (std::size_t k = 0; k < experts.size(); ++k) {
            if (a_cols[k]) {
                q.A(i, static_cast<Eigen::Index>(k)) = parse_double(row[*a_cols[k]], ctx);
            }
        }
    }
    return q;
}

Eigen::MatrixXd read_psi_csv(const std::string& path, const std::vector<std::string>& experts) {
    const CsvTable table = read_csv(path);
    const Eigen::Index T = static_cast<Eigen::Index>(table.rows.size());
    Eigen::MatrixXd psi(T, static_cast<Eigen::Index>(experts.size()));
    for (std::size_t k = 0; k < experts.size(); ++k) {
        const auto col = table.column("psi_" + experts[k]);
        if (!col) {
            throw ValidationError("'" + path + "': missing column psi_" + experts[k]);
        }
        for (Eigen::Index t = 0; t < T; ++t) {
            psi(t, static_cast<Eigen::Index>(k)) =
                parse_double(table.rows[static_cast<std::size_t>(t)][*col],
                             "'" + path + "' row " + std::to_string(t + 1));
        }
    }
    return psi;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
    auto out = open_out(path);
    out << "chain,draw,lp__";
    for (const auto& name : draws.layout.constrained_names(draws.expert_names)) {
        out << "," << name;
    }
    out << "\n";
    const auto& layout = draws.layout;
    const Eigen::Index per_chain =
        draws.size() / static_cast<Eigen::Index>(draws.mcmc.chains.size());
    for (Eigen::Index j = 0; j < draws.size(); ++j) {
        const HyperParams& h = draws.params[static_cast<std::size_t>(j)];
        out << (j / per_chain + 1) << "," << (j % per_chain + 1) << ","
            << format_double(draws.lp(j));
        for (Eigen::Index k = 0; k < layout.K; ++k) {
            for (Eigen::Index p = 0; p < layout.P; ++p) {
                out << "," << format_double(h.lengthscales(p, k));
            }
        }
        for (Eigen::Index k = 0; k < layout.K; ++k) out << "," << format_double(h.mean(k));
        for (Eigen::Index k = 0; k < layout.K; ++k) out << "," << format_double(h.tau(k));
        for (Eigen::Index jj = 1; jj < layout.K; ++jj) {
            for (Eigen::Index ii = 0; ii < jj; ++ii) {
                out << "," << format_double(h.omega_sig(ii, jj));
            }
        }
        for (Eigen::Index k = 0; k < layout.K; ++k) out << "," << format_double(h.sigma_eps(k));
        if (!layout.diagonal_noise) {
            for (Eigen::Index jj = 1; jj < layout.K; ++jj) {
                for (Eigen::Index ii = 0; ii < jj; ++ii) {
                    out << "," << format_double(h.omega_noise(ii, jj));
                }
            }
        }
        out << "\n";
    }
}

std::vector<HyperParams> read_draws_csv(const std::string& path,
                                        const std::vector<std::string>& experts, Eigen::Index P) {
    const CsvTable table = read_csv(path);
    const Eigen::Index K = static_cast<Eigen::Index>(experts.size());
    const bool diagonal_noise = K > 1 && !table.column("omega_noise_1_2").has_value();
    auto need = [&](const std::string& name) {
        const auto col = table.column(name);
        if (!col) throw ValidationError("'" + path + "': missing column " + name);
        return *col;
    };
    std::vector<HyperParams> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = "'" + path + "' row " + std::to_string(r + 1);
        HyperParams h;
        h.lengthscales.resize(P, K);
        h.mean.resize(K);
        h.tau.resize(K);
        h.sigma_eps.resize(K);
        h.omega_sig = Eigen::MatrixXd::Identity(K, K);
        h.omega_noise = Eigen::MatrixXd::Identity(K, K);
        for (Eigen::Index k = 0; k < K; ++k) {
            const auto& name = experts[static_cast<std::size_t>(k)];
            for (Eigen::Index p = 0; p < P; ++p) {
                h.lengthscales(p, k) =
                    parse_double(row[need("lengthscale" + std::to_string(p + 1) + "_" + name)], ctx);
            }
            h.mean(k) = parse_double(row[need("mean_" + name)], ctx);
            h.tau(k) = parse_double(row[need("tau_" + name)], ctx);
            h.sigma_eps(k) = parse_double(row[need("sigma_" + name)], ctx);
        }
        for (Eigen::Index jj = 1; jj < K; ++jj) {
            for (Eigen::Index ii = 0; ii < jj; ++ii) {
                const std::string suffix =
                    "_" + std::to_string(ii + 1) + "_" + std::to_string(jj + 1);
                const double s = parse_double(row[need("omega_sig" + suffix)], ctx);
                h.omega_sig(ii, jj) = s;
                h.omega_sig(jj, ii) = s;
                if (!diagonal_noise) {
                    const double t = parse_double(row[need("omega_noise" + suffix)], ctx);
                    h.omega_noise(ii, jj) = t;
                    h.omega_noise(jj, ii) = t;
                }
            }
        }
        out.push_back(std::move(h));
    }
    if (out.empty()) throw ValidationError("'" + path + "': no posterior draws");
    return out;
}

RunConfig::RunConfig() : c_grid(default_c_grid()) {
    sampler.seed = 0;
}

StudySettings RunConfig::study_settings() const {
    StudySettings s;
    s.prior = prior;
    s.sampler = sampler;
    s.threads = threads;
    s.estimator =
        sim_estimator == "kde" ? DensityEstimator::kde : DensityEstimator::moment_gaussian;
    return s;
}

std::string RunConfig::canonical_json() const {
    json j;
    j["input"] = {{"panel", panel_path},
                  {"draws", draws_path},
                  {"queries", queries_path},
                  {"psi", psi_path}};
    j["model"] = {{"lengthscale_upper", prior.lengthscale_upper},
                  {"lengthscale_cauchy_scale", prior.lengthscale_cauchy_scale},
                  {"lkj_eta", prior.lkj_eta},
                  {"scale_prior_sd", prior.scale_prior_sd},
                  {"mean_prior_sd", prior.mean_prior_sd},
                  {"diagonal_noise", prior.diagonal_noise}};
    j["sampler"] = {{"algorithm", algorithm},
                    {"chains", sampler.n_chains},
                    {"warmup", sampler.n_warmup},
                    {"draws", sampler.n_draws},
                    {"target_accept", sampler.target_accept},
                    {"max_leapfrog", sampler.max_leapfrog}};
    j["pooling"] = {{"c", pool_c}, {"c_grid", c_grid}, {"warmup", pool_warmup}};
    j["sim"] = {{"n", sim.n},
                {"n_datasets", sim.n_datasets},
                {"b", sim.b},
                {"z_correlation", sim.z_correlation},
                {"arms", sim_arms},
                {"estimator", sim_estimator}};
    j["output"] = {{"dir", out_dir}, {"dump_ability_draws", dump_ability_draws}};
    j["seed"] = seed;
    j["threads"] = threads;
    return j.dump();
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config '" + path + "': expected an object");
    check_keys(j, "top level",
               {"input", "model", "sampler", "pooling", "sim", "output", "seed", "threads"});

    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
        if (j.contains("input")) {
            const auto& in_j = j.at("input");
            check_keys(in_j, "input", {"panel", "draws", "queries", "psi"});
            if (in_j.contains("panel")) cfg.panel_path = in_j.at("panel").get<std::string>();
            if (in_j.contains("draws")) cfg.draws_path = in_j.at("draws").get<std::string>();
            if (in_j.contains("queries")) cfg.queries_path = in_j.at("queries").get<std::string>();
            if (in_j.contains("psi")) cfg.psi_path = in_j.at("psi").get<std::string>();
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, "model",
                       {"lengthscale_upper", "lengthscale_cauchy_scale", "lkj_eta",
                        "scale_prior_sd", "mean_prior_sd", "diagonal_noise"});
            if (m.contains("lengthscale_upper")) cfg.prior.lengthscale_upper = m.at("lengthscale_upper").get<double>();
            if (m.contains("lengthscale_cauchy_scale")) cfg.prior.lengthscale_cauchy_scale = m.at("lengthscale_cauchy_scale").get<double>();
            if (m.contains("lkj_eta")) cfg.prior.lkj_eta = m.at("lkj_eta").get<double>();
            if (m.contains("scale_prior_sd")) cfg.prior.scale_prior_sd = m.at("scale_prior_sd").get<double>();
            if (m.contains("mean_prior_sd")) cfg.prior.mean_prior_sd = m.at("mean_prior_sd").get<double>();
            if (m.contains("diagonal_noise")) cfg.prior.diagonal_noise = m.at("diagonal_noise").get<bool>();
        }
        if (j.contains("sampler")) {
            const auto& s = j.at("sampler");
            check_keys(s, "sampler",
                       {"algorithm", "chains", "warmup", "draws", "target_accept", "max_leapfrog"});
            if (s.contains("algorithm")) cfg.algorithm = s.at("algorithm").get<std::string>();
            if (cfg.algorithm != "hmc" && cfg.algorithm != "rwm") {
                throw ValidationError("config: sampler.algorithm must be 'hmc' or 'rwm'");
            }
            if (s.contains("chains")) cfg.sampler.n_chains = s.at("chains").get<int>();
            if (s.contains("warmup")) cfg.sampler.n_warmup = s.at("warmup").get<int>();
            if (s.contains("draws")) cfg.sampler.n_draws = s.at("draws").get<int>();
            if (s.contains("target_accept")) cfg.sampler.target_accept = s.at("target_accept").get<double>();
            if (s.contains("max_leapfrog")) cfg.sampler.max_leapfrog = s.at("max_leapfrog").get<int>();
        }
        if (j.contains("pooling")) {
            const auto& p = j.at("pooling");
            check_keys(p, "pooling", {"c", "c_grid", "warmup"});
            if (p.contains("c")) cfg.pool_c = p.at("c").get<double>();
            if (p.contains("c_grid")) cfg.c_grid = p.at("c_grid").get<std::vector<double>>();
            if (p.contains("warmup")) cfg.pool_warmup = p.at("warmup").get<int>();
        }
        if (j.contains("sim")) {
            const auto& s = j.at("sim");
            check_keys(s, "sim", {"n", "n_datasets", "b", "z_correlation", "arms", "estimator"});
            if (s.contains("n")) cfg.sim.n = s.at("n").get<int>();
            if (s.contains("n_datasets")) cfg.sim.n_datasets = s.at("n_datasets").get<int>();
            if (s.contains("b")) cfg.sim.b = s.at("b").get<double>();
            if (s.contains("z_correlation")) cfg.sim.z_correlation = s.at("z_correlation").get<double>();
            if (s.contains("arms")) cfg.sim_arms = s.at("arms").get<std::vector<double>>();
            if (s.contains("estimator")) cfg.sim_estimator = s.at("estimator").get<std::string>();
            if (cfg.sim_estimator != "gaussian" && cfg.sim_estimator != "kde") {
                throw ValidationError("config: sim.estimator must be 'gaussian' or 'kde'");
            }
        }
        if (j.contains("output")) {
            const auto& o = j.at("output");
            check_keys(o, "output", {"dir", "dump_ability_draws"});
            if (o.contains("dir")) cfg.out_dir = o.at("dir").get<std::string>();
            if (o.contains("dump_ability_draws")) cfg.dump_ability_draws = o.at("dump_ability_draws").get<bool>();
        }
    } catch (const json::exception& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    cfg.sampler.validate();
    if (cfg.threads < 0) throw ValidationError("config: threads must be nonnegative");
    return cfg;
}

void write_diagnostics_json(const std::string& path, const McmcResult& mcmc,
                            const std::vector<std::string>& coordinate_names,
                            const std::string& algorithm) {
    json j;
    j["algorithm"] = algorithm;
    j["chains"] = json::array();
    for (const auto& c : mcmc.chains) {
        j["chains"].push_back({{"accept_rate", c.accept_rate},
                               {"step_size", c.step_size},
                               {"divergences", c.divergences}});
    }
    json rhat = json::object();
    json ess = json::object();
    for (std::size_t i = 0; i < coordinate_names.size(); ++i) {
        rhat[coordinate_names[i]] = mcmc.split_rhat(static_cast<Eigen::Index>(i));
        ess[coordinate_names[i]] = mcmc.bulk_ess(static_cast<Eigen::Index>(i));
    }
    j["split_rhat"] = rhat;
    j["bulk_ess"] = ess;
    j["divergence_rate"] = mcmc.divergence_rate();
    j["warnings"] = mcmc.warnings;
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

void write_manifest_json(const std::string& path, const std::string& command,
                         const RunConfig& config,
                         const std::vector<std::pair<std::string, std::string>>& extra) {
    json j;
    j["command"] = command;
    j["seed"] = config.seed;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(config.canonical_json())));
    j["config_hash"] = hash;
    for (const auto& [key, value] : extra) j[key] = value;
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

}  // namespace abilitygp::io
