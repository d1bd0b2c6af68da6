#include "abilitygp/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "abilitygp/panel.hpp"
#include "abilitygp/stats.hpp"

namespace abilitygp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;

double log_add_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

TargetEval checked_eval(const ValueGradFn& target, const Eigen::VectorXd& q) {
    TargetEval e = target(q);
    if (std::isfinite(e.value) && !e.grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite gradient at a finite target point; state:";
        for (Eigen::Index i = 0; i < q.size(); ++i) msg << " " << q(i);
        throw NumericalError(msg.str());
    }
    return e;
}

struct DualAveraging {
    double mu = 0.0;
    double log_eps = 0.0;
    double log_eps_bar = 0.0;
    double h_bar = 0.0;
    int m = 0;
    double delta = 0.8;

    void reset(double eps0) {
        mu = std::log(10.0 * eps0);
        log_eps = std::log(eps0);
        log_eps_bar = std::log(eps0);
        h_bar = 0.0;
        m = 0;
    }
    void update(double accept_stat) {
        ++m;
        const double w = 1.0 / (m + 10.0);
        h_bar = (1.0 - w) * h_bar + w * (delta - accept_stat);
        log_eps = mu - std::sqrt(static_cast<double>(m)) / 0.05 * h_bar;
        const double wk = std::pow(static_cast<double>(m), -0.75);
        log_eps_bar = wk * log_eps + (1.0 - wk) * log_eps_bar;
    }
    double eps() const { return std::exp(log_eps); }
    double eps_final() const { return std::exp(log_eps_bar); }
};

// Welford accumulator for the diagonal mass matrix.
struct RunningVariance {
    Eigen::VectorXd mean;
    Eigen::VectorXd m2;
    long n = 0;

    void reset(Eigen::Index dim) {
        mean = Eigen::VectorXd::Zero(dim);
        m2 = Eigen::VectorXd::Zero(dim);
        n = 0;
    }
    void add(const Eigen::VectorXd& x) {
        ++n;
        const Eigen::VectorXd d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d.cwiseProduct(x - mean);
    }
    Eigen::VectorXd regularized() const {
        const double nn = static_cast<double>(n);
        Eigen::VectorXd var = n > 1 ? (m2 / (nn - 1.0)).eval() : Eigen::VectorXd::Ones(mean.size());
        return (nn / (nn + 5.0)) * var + Eigen::VectorXd::Constant(mean.size(), 1e-3 * 5.0 / (nn + 5.0));
    }
};

// Warmup phases: step-size-only buffers around doubling variance-estimation
// windows.
struct WarmupSchedule {
    int init_buffer = 0;
    int term_buffer = 0;
    std::vector<int> window_ends;  // iteration indices (exclusive) ending each window
};

WarmupSchedule make_schedule(int n_warmup) {
    WarmupSchedule s;
    int base = 25;
    if (n_warmup >= 150) {
        s.init_buffer = 75;
        s.term_buffer = std::max(50, static_cast<int>(0.25 * n_warmup));
    } else {
        s.init_buffer = std::max(1, static_cast<int>(0.15 * n_warmup));
        s.term_buffer = std::max(1, static_cast<int>(0.25 * n_warmup));
        base = std::max(1, n_warmup - s.init_buffer - s.term_buffer);
    }
    const int last = n_warmup - s.term_buffer;
    int pos = s.init_buffer;
    int w = base;
    while (pos + w <= last) {
        int end = pos + w;
        if (end + 2 * w > last) end = last;
        s.window_ends.push_back(end);
        pos = end;
        w *= 2;
    }
    return s;
}

double kinetic_energy(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass) {
    return 0.5 * p.cwiseProduct(p).dot(inv_mass);
}

// Doubles/halves the step until the one-step acceptance crosses one half.
double find_initial_step_size(const ValueGradFn& target, const PhaseState& start,
                              const Eigen::VectorXd& inv_mass, Rng& rng) {
    PhaseState state = start;
    for (Eigen::Index i = 0; i < state.q.size(); ++i) {
        state.p(i) = rng.normal() / std::sqrt(inv_mass(i));
    }
    const double h0 = hamiltonian(state, inv_mass);

    auto accept_at = [&](double eps) {
        PhaseState trial = state;
        leapfrog(target, trial, eps, inv_mass);
        const double h1 = hamiltonian(trial, inv_mass);
        return std::isfinite(h1) ? std::exp(h0 - h1) : 0.0;
    };

    double eps = 1.0;
    const double direction = accept_at(eps) > 0.5 ? 2.0 : 0.5;
    for (int iter = 0; iter < 100; ++iter) {
        const double next = eps * direction;
        const double a = accept_at(next);
        if ((direction > 1.0 && a <= 0.5) || (direction < 1.0 && a > 0.5)) {
            return direction > 1.0 ? eps : next;
        }
        eps = next;
        if (eps > 1e7 || eps < 1e-10) break;
    }
    return eps;
}

struct Transition {
    double accept_stat = 0.0;
    bool divergent = false;
};

bool is_uturn(const PhaseState& left, const PhaseState& right, const Eigen::VectorXd& inv_mass) {
    const Eigen::VectorXd dq = right.q - left.q;
    return dq.dot(inv_mass.cwiseProduct(left.p)) < 0.0 ||
           dq.dot(inv_mass.cwiseProduct(right.p)) < 0.0;
}

Transition hmc_transition(const ValueGradFn& target, PhaseState& state, double eps,
                          const Eigen::VectorXd& inv_mass, int max_leapfrog, Rng& rng) {
    for (Eigen::Index i = 0; i < state.q.size(); ++i) {
        state.p(i) = rng.normal() / std::sqrt(inv_mass(i));
    }
    const double h0 = hamiltonian(state, inv_mass);

    PhaseState left = state;
    PhaseState right = state;
    PhaseState selected = state;
    double log_w_total = -h0;
    double sum_metro = 0.0;
    int n_metro = 0;
    Transition out;

    int n_steps = 0;
    int subtree = 1;
    std::vector<PhaseState> states;  // generation order within one subtree
    while (n_steps + subtree <= max_leapfrog) {
        const bool forward = rng.uniform() < 0.5;
        PhaseState cur = forward ? right : left;
        const double step = forward ? eps : -eps;

        states.clear();
        states.reserve(static_cast<std::size_t>(subtree));
        double log_w_sub = kNegInf;
        PhaseState sel_sub;
        bool bad = false;
        for (int i = 0; i < subtree; ++i) {
            leapfrog(target, cur, step, inv_mass);
            ++n_steps;
            const double h = hamiltonian(cur, inv_mass);
            if (!std::isfinite(h) || h - h0 > kDivergenceThreshold) {
                bad = true;
                break;
            }
            states.push_back(cur);
            sum_metro += std::min(1.0, std::exp(h0 - h));
            ++n_metro;
            log_w_sub = log_add_exp(log_w_sub, -h);
            if (std::log(rng.uniform()) < -h - log_w_sub) sel_sub = cur;
        }
        if (bad) {
            out.divergent = true;
            break;
        }

        // The doubling is valid only if no balanced sub-block of the new
        // subtree has already turned; otherwise the subtree is discarded and
        // the trajectory ends. Generation order is reversed time when
        // integrating backward.
        bool sub_turned = false;
        for (int size = 2; size <= subtree && !sub_turned; size *= 2) {
            for (int b = 0; b + size <= subtree && !sub_turned; b += size) {
                const PhaseState& gen_first = states[static_cast<std::size_t>(b)];
                const PhaseState& gen_last = states[static_cast<std::size_t>(b + size - 1)];
                sub_turned = forward ? is_uturn(gen_first, gen_last, inv_mass)
                                     : is_uturn(gen_last, gen_first, inv_mass);
            }
        }
        if (sub_turned) break;

        if (forward) {
            right = cur;
        } else {
            left = cur;
        }
        const double log_w_new = log_add_exp(log_w_total, log_w_sub);
        if (std::log(rng.uniform()) < log_w_sub - log_w_new) selected = sel_sub;
        log_w_total = log_w_new;

        if (is_uturn(left, right, inv_mass)) break;
        subtree *= 2;
    }
    state = selected;
    out.accept_stat = n_metro > 0 ? sum_metro / static_cast<double>(n_metro) : 0.0;
    return out;
}

struct ChainOutput {
    Eigen::MatrixXd draws;
    Eigen::VectorXd logp;
    ChainDiagnostics diag;
};

ChainOutput run_hmc_chain(const ValueGradFn& target, Eigen::Index dim, const HmcConfig& cfg,
                          int chain_idx) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain_idx));
    PhaseState state;
    state.q.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) state.q(i) = rng.uniform(-0.1, 0.1);
    state.p = Eigen::VectorXd::Zero(dim);

    TargetEval e = checked_eval(target, state.q);
    if (!std::isfinite(e.value)) {
        throw NumericalError("hmc: target is not finite at the initial point");
    }
    state.logp = e.value;
    state.grad = e.grad;

    Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
    double eps = find_initial_step_size(target, state, inv_mass, rng);
    DualAveraging da;
    da.delta = cfg.target_accept;
    da.reset(eps);

    const WarmupSchedule schedule = make_schedule(cfg.n_warmup);
    RunningVariance window;
    window.reset(dim);
    std::size_t next_window = 0;

    for (int iter = 0; iter < cfg.n_warmup; ++iter) {
        const Transition t = hmc_transition(target, state, eps, inv_mass, cfg.max_leapfrog, rng);
        da.update(t.accept_stat);
        eps = da.eps();
        const bool in_window = iter >= schedule.init_buffer &&
                               iter < cfg.n_warmup - schedule.term_buffer &&
                               next_window < schedule.window_ends.size();
        if (in_window) {
            window.add(state.q);
            if (iter + 1 == schedule.window_ends[next_window]) {
                inv_mass = window.regularized();
                window.reset(dim);
                ++next_window;
                eps = find_initial_step_size(target, state, inv_mass, rng);
                da.reset(eps);
            }
        }
    }
    if (cfg.n_warmup > 0) eps = da.eps_final();

    ChainOutput out;
    out.draws.resize(cfg.n_draws, dim);
    out.logp.resize(cfg.n_draws);
    double sum_accept = 0.0;
    for (int m = 0; m < cfg.n_draws; ++m) {
        const Transition t = hmc_transition(target, state, eps, inv_mass, cfg.max_leapfrog, rng);
        sum_accept += t.accept_stat;
        out.diag.divergences += t.divergent ? 1 : 0;
        out.draws.row(m) = state.q;
        out.logp(m) = state.logp;
    }
    out.diag.accept_rate = sum_accept / std::max(1, cfg.n_draws);
    out.diag.step_size = eps;
    return out;
}

ChainOutput run_rwm_chain(const ValueFn& target, Eigen::Index dim, const HmcConfig& cfg,
                          int chain_idx) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain_idx));
    Eigen::VectorXd q(dim);
    for (Eigen::Index i = 0; i < dim; ++i) q(i) = rng.uniform(-0.1, 0.1);
    double logp = target(q);
    if (!std::isfinite(logp)) {
        throw NumericalError("rwm: target is not finite at the initial point");
    }

    double scale = 2.38 / std::sqrt(static_cast<double>(dim));
    auto step = [&](bool adapt, int m) {
        Eigen::VectorXd prop(dim);
        for (Eigen::Index i = 0; i < dim; ++i) prop(i) = q(i) + scale * rng.normal();
        const double lp = target(prop);
        const double a = std::isfinite(lp) ? std::min(1.0, std::exp(lp - logp)) : 0.0;
        if (std::log(rng.uniform()) < lp - logp) {
            q = prop;
            logp = lp;
        }
        if (adapt) {
            scale *= std::exp((a - cfg.target_accept) * std::pow(m + 1.0, -0.6));
        }
        return a;
    };

    for (int iter = 0; iter < cfg.n_warmup; ++iter) step(true, iter);

    ChainOutput out;
    out.draws.resize(cfg.n_draws, dim);
    out.logp.resize(cfg.n_draws);
    double sum_accept = 0.0;
    for (int m = 0; m < cfg.n_draws; ++m) {
        sum_accept += step(false, 0);
        out.draws.row(m) = q;
        out.logp(m) = logp;
    }
    out.diag.accept_rate = sum_accept / std::max(1, cfg.n_draws);
    out.diag.step_size = scale;
    return out;
}

McmcResult assemble(std::vector<ChainOutput> outputs, const HmcConfig& cfg, Eigen::Index dim) {
    McmcResult result;
    result.draws.resize(static_cast<Eigen::Index>(cfg.n_chains) * cfg.n_draws, dim);
    result.logp.resize(static_cast<Eigen::Index>(cfg.n_chains) * cfg.n_draws);
    std::vector<Eigen::MatrixXd> per_chain;
    per_chain.reserve(outputs.size());
    long total_div = 0;
    for (int c = 0; c < cfg.n_chains; ++c) {
        auto& o = outputs[static_cast<std::size_t>(c)];
        result.draws.middleRows(static_cast<Eigen::Index>(c) * cfg.n_draws, cfg.n_draws) = o.draws;
        result.logp.segment(static_cast<Eigen::Index>(c) * cfg.n_draws, cfg.n_draws) = o.logp;
        total_div += o.diag.divergences;
        result.chains.push_back(o.diag);
        per_chain.push_back(std::move(o.draws));
    }
    result.split_rhat = split_rhat(per_chain);
    result.bulk_ess = bulk_ess(per_chain);
    const double div_rate =
        static_cast<double>(total_div) / std::max(1, cfg.n_chains * cfg.n_draws);
    if (div_rate > 0.2) {
        std::ostringstream msg;
        msg << "divergence rate " << div_rate << " exceeds 20% after warmup";
        result.warnings.push_back(msg.str());
    }
    return result;
}

template <typename RunChain>
McmcResult sample_chains(RunChain run_chain, const HmcConfig& cfg, Eigen::Index dim, int threads) {
    cfg.validate();
    std::vector<ChainOutput> outputs(static_cast<std::size_t>(cfg.n_chains));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));
    const int n_workers = std::max(1, std::min(threads, cfg.n_chains));
    if (n_workers == 1) {
        for (int c = 0; c < cfg.n_chains; ++c) outputs[static_cast<std::size_t>(c)] = run_chain(c);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                for (int c = next.fetch_add(1); c < cfg.n_chains; c = next.fetch_add(1)) {
                    try {
                        outputs[static_cast<std::size_t>(c)] = run_chain(c);
                    } catch (...) {
                        errors[static_cast<std::size_t>(c)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }
    return assemble(std::move(outputs), cfg, dim);
}

// Pooled rank normalization: average ranks mapped through the normal quantile.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& seqs) {
    std::size_t total = 0;
    for (const auto& s : seqs) total += static_cast<std::size_t>(s.size());
    std::vector<std::pair<double, std::size_t>> values;
    values.reserve(total);
    std::size_t offset = 0;
    for (const auto& s : seqs) {
        for (Eigen::Index i = 0; i < s.size(); ++i) values.emplace_back(s(i), offset + i);
        offset += static_cast<std::size_t>(s.size());
    }
    std::sort(values.begin(), values.end());
    std::vector<double> rank(total);
    std::size_t i = 0;
    while (i < total) {
        std::size_t j = i;
        while (j + 1 < total && values[j + 1].first == values[i].first) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[values[t].second] = avg;
        i = j + 1;
    }
    std::vector<Eigen::VectorXd> out;
    out.reserve(seqs.size());
    offset = 0;
    const double N = static_cast<double>(total);
    for (const auto& s : seqs) {
        Eigen::VectorXd z(s.size());
        for (Eigen::Index t = 0; t < s.size(); ++t) {
            z(t) = normal_quantile((rank[offset + t] - 0.375) / (N + 0.25));
        }
        out.push_back(std::move(z));
        offset += static_cast<std::size_t>(s.size());
    }
    return out;
}

std::vector<Eigen::VectorXd> split_sequences(const std::vector<Eigen::MatrixXd>& chains,
                                             Eigen::Index coord) {
    std::vector<Eigen::VectorXd> seqs;
    for (const auto& chain : chains) {
        const Eigen::Index n = chain.rows();
        const Eigen::Index nh = n / 2;
        if (nh < 1) continue;
        seqs.push_back(chain.col(coord).head(nh));
        seqs.push_back(chain.col(coord).tail(nh));
    }
    return seqs;
}

struct PooledVariance {
    double within = 0.0;
    double var_plus = 0.0;
    bool degenerate = false;  // all sequences constant and identical
    bool mixed_constant = false;
};

PooledVariance pooled_variance(const std::vector<Eigen::VectorXd>& seqs) {
    PooledVariance out;
    const std::size_t S = seqs.size();
    const Eigen::Index nh = seqs.front().size();
    Eigen::VectorXd means(static_cast<Eigen::Index>(S));
    double w = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        const double m = seqs[s].mean();
        means(static_cast<Eigen::Index>(s)) = m;
        w += (seqs[s].array() - m).square().sum() / std::max<double>(1.0, static_cast<double>(nh - 1));
    }
    out.within = w / static_cast<double>(S);
    const double grand = means.mean();
    const double b_over_n =
        S > 1 ? (means.array() - grand).square().sum() / static_cast<double>(S - 1) : 0.0;
    out.var_plus = (static_cast<double>(nh - 1) / static_cast<double>(nh)) * out.within + b_over_n;
    if (out.within <= 0.0) {
        if (b_over_n <= 0.0) {
            out.degenerate = true;
        } else {
            out.mixed_constant = true;
        }
    }
    return out;
}

}  // namespace

void HmcConfig::validate() const {
    if (n_chains < 1 || n_draws < 1 || n_warmup < 0 || max_leapfrog < 1) {
        throw ValidationError("sampler config: chain, draw and leapfrog counts must be positive");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
        throw ValidationError("sampler config: target_accept must lie in (0, 1)");
    }
}

double McmcResult::divergence_rate() const {
    if (chains.empty() || draws.rows() == 0) return 0.0;
    long total = 0;
    for (const auto& c : chains) total += c.divergences;
    return static_cast<double>(total) / static_cast<double>(draws.rows());
}

double hamiltonian(const PhaseState& state, const Eigen::VectorXd& inv_mass) {
    return -state.logp + kinetic_energy(state.p, inv_mass);
}

void leapfrog(const ValueGradFn& target, PhaseState& state, double step,
              const Eigen::VectorXd& inv_mass) {
    state.p += 0.5 * step * state.grad;
    state.q += step * inv_mass.cwiseProduct(state.p);
    const TargetEval e = checked_eval(target, state.q);
    state.logp = e.value;
    state.grad = std::isfinite(e.value) ? e.grad : Eigen::VectorXd::Zero(state.q.size());
    state.p += 0.5 * step * state.grad;
}

McmcResult hmc_sample(const ValueGradFn& target, Eigen::Index dim, const HmcConfig& cfg,
                      int threads) {
    return sample_chains([&](int c) { return run_hmc_chain(target, dim, cfg, c); }, cfg, dim,
                         threads);
}

McmcResult rwm_sample(const ValueFn& target, Eigen::Index dim, const HmcConfig& cfg, int threads) {
    return sample_chains([&](int c) { return run_rwm_chain(target, dim, cfg, c); }, cfg, dim,
                         threads);
}

Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& chains) {
    if (chains.empty()) throw ValidationError("split_rhat: no chains");
    const Eigen::Index dim = chains.front().cols();
    Eigen::VectorXd out(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        const auto seqs = split_sequences(chains, d);
        if (seqs.empty() || seqs.front().size() < 2) {
            out(d) = 1.0;
            continue;
        }
        bool constant = true;
        const double first = seqs.front()(0);
        for (const auto& s : seqs) {
            if (((s.array() - first) != 0.0).any()) {
                constant = false;
                break;
            }
        }
        if (constant) {
            out(d) = 1.0;
            continue;
        }
        const PooledVariance pv = pooled_variance(seqs);
        if (pv.degenerate) {
            out(d) = 1.0;
        } else if (pv.mixed_constant) {
            out(d) = std::numeric_limits<double>::infinity();
        } else {
            out(d) = std::sqrt(pv.var_plus / pv.within);
        }
    }
    return out;
}

Eigen::VectorXd bulk_ess(const std::vector<Eigen::MatrixXd>& chains) {
    if (chains.empty()) throw ValidationError("bulk_ess: no chains");
    const Eigen::Index dim = chains.front().cols();
    Eigen::VectorXd out(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        auto raw = split_sequences(chains, d);
        if (raw.empty() || raw.front().size() < 4) {
            out(d) = static_cast<double>(chains.size() * chains.front().rows());
            continue;
        }
        const Eigen::Index nh = raw.front().size();
        const double total = static_cast<double>(raw.size()) * static_cast<double>(nh);

        bool constant = true;
        const double first = raw.front()(0);
        for (const auto& s : raw) {
            if (((s.array() - first) != 0.0).any()) {
                constant = false;
                break;
            }
        }
        if (constant) {
            out(d) = total;
            continue;
        }

        const auto seqs = rank_normalize(raw);
        const PooledVariance pv = pooled_variance(seqs);
        std::vector<Eigen::VectorXd> centered;
        centered.reserve(seqs.size());
        for (const auto& s : seqs) centered.push_back(s.array() - s.mean());

        auto rho = [&](Eigen::Index t) {
            double acc = 0.0;
            for (const auto& s : centered) {
                acc += s.head(nh - t).dot(s.tail(nh - t)) / static_cast<double>(nh);
            }
            const double mean_gamma = acc / static_cast<double>(centered.size());
            return 1.0 - (pv.within - mean_gamma) / pv.var_plus;
        };

        double tau = -1.0;
        double prev_pair = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; 2 * k + 1 < nh; ++k) {
            double pair = rho(2 * k) + rho(2 * k + 1);
            if (pair < 0.0) break;
            pair = std::min(pair, prev_pair);
            prev_pair = pair;
            tau += 2.0 * pair;
        }
        tau = std::max(tau, 1.0 / std::log10(total + 10.0));
        out(d) = total / tau;
    }
    return out;
}

}  // namespace abilitygp
