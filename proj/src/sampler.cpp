#include "claimcar/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "claimcar/numeric.hpp"

namespace claimcar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;
constexpr double kLogHalf = -0.6931471805599453;

// Warmup phases: initial fast window (step size only), doubling slow windows
// (step size + mass), terminal fast window (step size only).
struct WarmupSchedule {
    int n_warmup = 0;
    int fast_end = 0;
    int term_begin = 0;
    std::vector<int> window_ends;

    bool in_slow(int iter) const { return iter >= fast_end && iter < term_begin; }
    bool closes_window(int iter) const {
        return std::find(window_ends.begin(), window_ends.end(), iter + 1) != window_ends.end();
    }
};

WarmupSchedule make_schedule(int n_warmup) {
    WarmupSchedule s;
    s.n_warmup = n_warmup;
    if (n_warmup < 20) {
        s.fast_end = n_warmup;
        s.term_begin = n_warmup;
        return s;
    }
    s.fast_end = static_cast<int>(std::floor(0.15 * n_warmup));
    s.term_begin = n_warmup - static_cast<int>(std::floor(0.10 * n_warmup));
    int pos = s.fast_end;
    int width = 25;
    while (pos < s.term_begin) {
        int remaining = s.term_begin - pos;
        int size = width;
        if (3 * size > remaining) size = remaining;
        s.window_ends.push_back(pos + size);
        pos += size;
        width *= 2;
    }
    return s;
}

struct ChainScaffold {
    LogDensity& target;
    const SamplerConfig& cfg;
    Rng rng;
    int chain_id;
    int d;
    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> unif{0.0, 1.0};
    std::size_t n_evals = 0;
    bool sampling_phase = false;
    std::size_t n_evals_sampling = 0;

    ChainScaffold(LogDensity& t, const SamplerConfig& c, int chain)
        : target(t), cfg(c), rng(make_rng(c.seed, static_cast<std::uint64_t>(chain))), chain_id(chain), d(t.dim()) {}

    double eval(std::span<const double> q, double* grad) {
        ++n_evals;
        if (sampling_phase) ++n_evals_sampling;
        return target(q, grad);
    }

    std::vector<double> start_point(std::span<const double> init) const {
        if (init.empty()) return std::vector<double>(static_cast<std::size_t>(d), 0.0);
        if (static_cast<int>(init.size()) != d)
            throw std::runtime_error("sampler: init vector has size " + std::to_string(init.size()) +
                                     " but the target has dimension " + std::to_string(d));
        return std::vector<double>(init.begin(), init.end());
    }

    std::size_t n_kept() const {
        return static_cast<std::size_t>(cfg.n_samples / cfg.thin);
    }

    bool keep(int sample_iter) const { return (sample_iter + 1) % cfg.thin == 0; }
};

// ---------------------------------------------------------------------------
// NUTS

class NutsWorker {
public:
    NutsWorker(LogDensity& target, const SamplerConfig& cfg, int chain_id)
        : s_(target, cfg, chain_id) {}

    ChainDraws run(std::span<const double> init);

private:
    struct Leaf {
        std::vector<double> q, grad;
        double logp = -kInf;
        double h = kInf;
    };
    struct End {
        std::vector<double> q, p, grad;
        double logp = -kInf;
    };
    struct Subtree {
        double log_sum_w = -kInf;
        std::vector<double> rho;
        Leaf sample;
        double sum_accept = 0.0;
        std::size_t n_states = 0;
        bool ok = true;
        bool divergent = false;
    };
    struct Transition {
        double accept_stat = 0.0;
        double energy = 0.0;
        int tree_depth = 0;
        bool divergent = false;
    };

    double kinetic(const std::vector<double>& p) const {
        double k = 0.0;
        for (int i = 0; i < s_.d; ++i) k += inv_mass_[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)];
        return 0.5 * k;
    }

    void draw_momentum(std::vector<double>& p) {
        for (int i = 0; i < s_.d; ++i)
            p[static_cast<std::size_t>(i)] = s_.normal(s_.rng) / std::sqrt(inv_mass_[static_cast<std::size_t>(i)]);
    }

    bool uturn(const std::vector<double>& rho, const std::vector<double>& p_a,
               const std::vector<double>& p_b) const {
        double da = 0.0, db = 0.0;
        for (int i = 0; i < s_.d; ++i) {
            const auto u = static_cast<std::size_t>(i);
            da += inv_mass_[u] * p_a[u] * rho[u];
            db += inv_mass_[u] * p_b[u] * rho[u];
        }
        return da <= 0.0 || db <= 0.0;
    }

    double find_reasonable_epsilon(const Leaf& cur);
    Subtree build_tree(int depth, double dir, double h0, End& end);
    Transition transition(Leaf& cur);

    ChainScaffold s_;
    std::vector<double> inv_mass_;
    double eps_ = 1.0;
};

double NutsWorker::find_reasonable_epsilon(const Leaf& cur) {
    std::vector<double> p(static_cast<std::size_t>(s_.d));
    draw_momentum(p);
    const double h0 = -cur.logp + kinetic(p);

    std::vector<double> q_try, p_try, g_try;
    auto h_at = [&](double eps) {
        q_try = cur.q;
        p_try = p;
        g_try = cur.grad;
        const double logp = leapfrog(s_.target, q_try, p_try, g_try, eps, inv_mass_);
        ++s_.n_evals;
        return std::isfinite(logp) ? -logp + kinetic(p_try) : kInf;
    };

    double eps = 1.0;
    double log_ratio = h0 - h_at(eps);
    const double direction = log_ratio > kLogHalf ? 1.0 : -1.0;
    for (int iter = 0; iter < 50; ++iter) {
        eps *= direction > 0 ? 2.0 : 0.5;
        if (eps > 1e6 || eps < 1e-10) break;
        log_ratio = h0 - h_at(eps);
        if (direction > 0 && !(log_ratio > kLogHalf)) break;
        if (direction < 0 && !(log_ratio < kLogHalf)) break;
    }
    return std::clamp(eps, 1e-10, 1e6);
}

NutsWorker::Subtree NutsWorker::build_tree(int depth, double dir, double h0, End& end) {
    if (depth == 0) {
        end.logp = leapfrog(s_.target, end.q, end.p, end.grad, dir * eps_, inv_mass_);
        ++s_.n_evals;
        if (s_.sampling_phase) ++s_.n_evals_sampling;
        const double h = std::isfinite(end.logp) ? -end.logp + kinetic(end.p) : kInf;
        Subtree leaf;
        leaf.rho = end.p;
        leaf.n_states = 1;
        leaf.divergent = !(h - h0 < kDivergenceThreshold);
        leaf.ok = !leaf.divergent;
        if (leaf.ok) {
            leaf.log_sum_w = h0 - h;
            leaf.sum_accept = std::min(1.0, std::exp(h0 - h));
            leaf.sample = Leaf{end.q, end.grad, end.logp, h};
        }
        return leaf;
    }

    std::vector<double> p_begin = end.p;
    Subtree left = build_tree(depth - 1, dir, h0, end);
    if (!left.ok) return left;
    Subtree right = build_tree(depth - 1, dir, h0, end);

    Subtree merged;
    merged.sum_accept = left.sum_accept + right.sum_accept;
    merged.n_states = left.n_states + right.n_states;
    merged.divergent = left.divergent || right.divergent;
    if (!right.ok) {
        merged.ok = false;
        return merged;
    }
    merged.log_sum_w = log_add_exp(left.log_sum_w, right.log_sum_w);
    const double take_right = right.log_sum_w - merged.log_sum_w;
    merged.sample = std::log(s_.unif(s_.rng)) < take_right ? std::move(right.sample) : std::move(left.sample);
    merged.rho = std::move(left.rho);
    for (int i = 0; i < s_.d; ++i) merged.rho[static_cast<std::size_t>(i)] += right.rho[static_cast<std::size_t>(i)];
    merged.ok = !uturn(merged.rho, p_begin, end.p);
    return merged;
}

NutsWorker::Transition NutsWorker::transition(Leaf& cur) {
    std::vector<double> p(static_cast<std::size_t>(s_.d));
    draw_momentum(p);
    const double h0 = -cur.logp + kinetic(p);
    cur.h = h0;

    End minus{cur.q, p, cur.grad, cur.logp};
    End plus = minus;
    std::vector<double> rho = p;
    Leaf sample = cur;
    double log_sum_w = 0.0;
    double sum_accept = 0.0;
    std::size_t n_states = 0;

    Transition out;
    for (int depth = 0; depth < s_.cfg.max_tree_depth; ++depth) {
        const double dir = s_.unif(s_.rng) < 0.5 ? -1.0 : 1.0;
        End& end = dir > 0 ? plus : minus;
        Subtree sub = build_tree(depth, dir, h0, end);
        sum_accept += sub.sum_accept;
        n_states += sub.n_states;
        out.divergent = out.divergent || sub.divergent;
        out.tree_depth = depth + 1;
        if (!sub.ok) break;
        if (std::log(s_.unif(s_.rng)) < sub.log_sum_w - log_sum_w) sample = std::move(sub.sample);
        log_sum_w = log_add_exp(log_sum_w, sub.log_sum_w);
        for (int i = 0; i < s_.d; ++i) rho[static_cast<std::size_t>(i)] += sub.rho[static_cast<std::size_t>(i)];
        if (uturn(rho, minus.p, plus.p)) break;
    }

    out.accept_stat = n_states > 0 ? sum_accept / static_cast<double>(n_states) : 0.0;
    out.energy = sample.h;
    cur = std::move(sample);
    return out;
}

ChainDraws NutsWorker::run(std::span<const double> init) {
    const auto& cfg = s_.cfg;
    inv_mass_.assign(static_cast<std::size_t>(s_.d), 1.0);

    Leaf cur;
    cur.q = s_.start_point(init);
    cur.grad.resize(static_cast<std::size_t>(s_.d));
    cur.logp = s_.eval(cur.q, cur.grad.data());
    if (!std::isfinite(cur.logp))
        throw std::runtime_error("sampler: log density is not finite at the initial point");

    eps_ = find_reasonable_epsilon(cur);
    DualAveraging da;
    da.reset(eps_, cfg.target_accept);

    const WarmupSchedule schedule = make_schedule(cfg.n_warmup);
    std::vector<Welford> mass_acc(static_cast<std::size_t>(s_.d));
    std::size_t warmup_divergent = 0;

    for (int iter = 0; iter < cfg.n_warmup; ++iter) {
        eps_ = da.current();
        Transition t = transition(cur);
        if (t.divergent) ++warmup_divergent;
        da.update(t.accept_stat);
        if (schedule.in_slow(iter)) {
            for (int i = 0; i < s_.d; ++i) mass_acc[static_cast<std::size_t>(i)].add(cur.q[static_cast<std::size_t>(i)]);
            if (schedule.closes_window(iter)) {
                const double n = static_cast<double>(mass_acc.front().count());
                if (n >= 2.0) {
                    for (int i = 0; i < s_.d; ++i) {
                        const double var = mass_acc[static_cast<std::size_t>(i)].variance();
                        inv_mass_[static_cast<std::size_t>(i)] =
                            n / (n + 5.0) * var + 1e-3 * (5.0 / (n + 5.0));
                    }
                }
                for (auto& w : mass_acc) w = Welford{};
                eps_ = find_reasonable_epsilon(cur);
                da.reset(eps_, cfg.target_accept);
            }
        }
    }
    if (cfg.n_warmup > 0 && warmup_divergent == static_cast<std::size_t>(cfg.n_warmup))
        throw std::runtime_error("sampler: every warmup iteration diverged; the model is likely "
                                 "misspecified or the initial point is pathological");
    if (cfg.n_warmup > 0) eps_ = da.adapted();

    ChainDraws out;
    out.chain_id = s_.chain_id;
    out.step_size = eps_;
    out.inv_mass_diag = inv_mass_;
    out.draws.reserve(s_.n_kept());
    out.stats.reserve(s_.n_kept());

    s_.sampling_phase = true;
    double accept_sum = 0.0;
    for (int iter = 0; iter < cfg.n_samples; ++iter) {
        Transition t = transition(cur);
        accept_sum += t.accept_stat;
        if (t.divergent) ++out.n_divergent;
        if (s_.keep(iter)) {
            out.draws.push_back(cur.q);
            out.stats.push_back(DrawStats{t.energy, t.tree_depth, t.divergent, eps_});
        }
    }
    out.mean_accept = cfg.n_samples > 0 ? accept_sum / cfg.n_samples : 0.0;
    out.n_evals_sampling = s_.n_evals_sampling;
    return out;
}

// ---------------------------------------------------------------------------
// MALA and random-walk Metropolis

class ProposalWorker {
public:
    ProposalWorker(LogDensity& target, const SamplerConfig& cfg, int chain_id, bool use_gradient)
        : s_(target, cfg, chain_id), use_gradient_(use_gradient) {}

    ChainDraws run(std::span<const double> init);

private:
    ChainScaffold s_;
    bool use_gradient_;
};

ChainDraws ProposalWorker::run(std::span<const double> init) {
    const auto& cfg = s_.cfg;
    const int d = s_.d;
    const double target_accept = use_gradient_ ? 0.574 : rwm_target_accept(d);

    std::vector<double> q = s_.start_point(init);
    std::vector<double> grad(static_cast<std::size_t>(d), 0.0);
    std::vector<double> prop(static_cast<std::size_t>(d));
    std::vector<double> prop_grad(static_cast<std::size_t>(d), 0.0);
    double logp = s_.eval(q, use_gradient_ ? grad.data() : nullptr);
    if (!std::isfinite(logp))
        throw std::runtime_error("sampler: log density is not finite at the initial point");

    double eps = 2.38 / std::sqrt(static_cast<double>(d));
    DualAveraging da;
    da.reset(eps, target_accept);

    auto step = [&](double step_size) {
        double fwd = 0.0;
        for (int i = 0; i < d; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const double drift = use_gradient_ ? 0.5 * step_size * step_size * grad[u] : 0.0;
            const double z = s_.normal(s_.rng);
            prop[u] = q[u] + drift + step_size * z;
            fwd += z * z;
        }
        const double prop_logp = s_.eval(prop, use_gradient_ ? prop_grad.data() : nullptr);
        double log_alpha = -kInf;
        if (std::isfinite(prop_logp)) {
            log_alpha = prop_logp - logp;
            if (use_gradient_) {
                double back = 0.0;
                for (int i = 0; i < d; ++i) {
                    const auto u = static_cast<std::size_t>(i);
                    const double mean_back = prop[u] + 0.5 * step_size * step_size * prop_grad[u];
                    const double r = (q[u] - mean_back) / step_size;
                    back += r * r;
                }
                log_alpha += 0.5 * (fwd - back);
            }
        }
        const double alpha = std::isfinite(log_alpha) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
        if (s_.unif(s_.rng) < alpha) {
            q.swap(prop);
            logp = prop_logp;
            if (use_gradient_) grad.swap(prop_grad);
        }
        return alpha;
    };

    std::size_t warmup_rejects = 0;
    for (int iter = 0; iter < cfg.n_warmup; ++iter) {
        const double alpha = step(da.current());
        if (alpha == 0.0) ++warmup_rejects;
        da.update(alpha);
    }
    if (cfg.n_warmup > 0) eps = da.adapted();
    (void)warmup_rejects;

    ChainDraws out;
    out.chain_id = s_.chain_id;
    out.step_size = eps;
    out.inv_mass_diag.assign(static_cast<std::size_t>(d), 1.0);
    out.draws.reserve(s_.n_kept());
    out.stats.reserve(s_.n_kept());

    s_.sampling_phase = true;
    double accept_sum = 0.0;
    for (int iter = 0; iter < cfg.n_samples; ++iter) {
        accept_sum += step(eps);
        if (s_.keep(iter)) {
            out.draws.push_back(q);
            out.stats.push_back(DrawStats{-logp, 0, false, eps});
        }
    }
    out.mean_accept = cfg.n_samples > 0 ? accept_sum / cfg.n_samples : 0.0;
    out.n_evals_sampling = s_.n_evals_sampling;
    return out;
}

// ---------------------------------------------------------------------------
// Chain orchestration

template <typename RunChain>
PosteriorDraws run_chains(const DensityFactory& make_density, const SamplerConfig& cfg,
                          std::span<const double> init, RunChain run_chain) {
    if (!make_density) throw std::runtime_error("sampler: null density factory");
    PosteriorDraws out;
    out.chains.resize(static_cast<std::size_t>(cfg.n_chains));

    std::vector<std::unique_ptr<LogDensity>> densities;
    densities.reserve(static_cast<std::size_t>(cfg.n_chains));
    for (int c = 0; c < cfg.n_chains; ++c) {
        densities.push_back(make_density());
        if (!densities.back()) throw std::runtime_error("sampler: density factory returned null");
    }
    out.d = densities.front()->dim();

    if (cfg.parallel_chains && cfg.n_chains > 1) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));
        for (int c = 0; c < cfg.n_chains; ++c) {
            threads.emplace_back([&, c] {
                try {
                    out.chains[static_cast<std::size_t>(c)] = run_chain(*densities[static_cast<std::size_t>(c)], c);
                } catch (...) {
                    errors[static_cast<std::size_t>(c)] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (int c = 0; c < cfg.n_chains; ++c)
            out.chains[static_cast<std::size_t>(c)] = run_chain(*densities[static_cast<std::size_t>(c)], c);
    }
    (void)init;
    return out;
}

class SharedDensityRef final : public LogDensity {
public:
    explicit SharedDensityRef(LogDensity& inner) : inner_(&inner) {}
    int dim() const override { return inner_->dim(); }
    double operator()(std::span<const double> theta, double* grad) override {
        return (*inner_)(theta, grad);
    }

private:
    LogDensity* inner_;
};

}  // namespace

DensityFactory shared_density(LogDensity& density) {
    return [&density] { return std::make_unique<SharedDensityRef>(density); };
}

void DualAveraging::reset(double eps0, double target) {
    mu_ = std::log(10.0 * eps0);
    eps_ = eps0;
    eps_bar_ = 1.0;
    h_bar_ = 0.0;
    target_ = target;
    count_ = 0;
}

void DualAveraging::update(double accept_prob) {
    const double a = std::clamp(accept_prob, 0.0, 1.0);
    ++count_;
    const double w = 1.0 / (count_ + 10.0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - a);
    const double log_eps = mu_ - std::sqrt(static_cast<double>(count_)) / 0.05 * h_bar_;
    const double eta = std::pow(static_cast<double>(count_), -0.75);
    const double log_eps_bar = eta * log_eps + (1.0 - eta) * std::log(eps_bar_);
    eps_ = std::exp(log_eps);
    eps_bar_ = std::exp(log_eps_bar);
}

double leapfrog(LogDensity& density, std::span<double> q, std::span<double> p,
                std::span<double> grad, double eps, std::span<const double> inv_mass) {
    const std::size_t d = q.size();
    for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad[i];
    for (std::size_t i = 0; i < d; ++i) q[i] += eps * inv_mass[i] * p[i];
    const double logp = density(q, grad.data());
    if (std::isfinite(logp))
        for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad[i];
    return logp;
}

double rwm_target_accept(int dim) {
    if (dim <= 1) return 0.441;
    if (dim >= 5) return 0.234;
    return 0.441 + (dim - 1) * (0.234 - 0.441) / 4.0;
}

PosteriorDraws nuts_sample(const DensityFactory& make_density, const SamplerConfig& config,
                           std::span<const double> init) {
    return run_chains(make_density, config, init, [&](LogDensity& target, int chain) {
        NutsWorker worker(target, config, chain);
        return worker.run(init);
    });
}

PosteriorDraws mala_sample(const DensityFactory& make_density, const SamplerConfig& config,
                           std::span<const double> init) {
    return run_chains(make_density, config, init, [&](LogDensity& target, int chain) {
        ProposalWorker worker(target, config, chain, /*use_gradient=*/true);
        return worker.run(init);
    });
}

PosteriorDraws rwm_sample(const DensityFactory& make_density, const SamplerConfig& config,
                          std::span<const double> init) {
    return run_chains(make_density, config, init, [&](LogDensity& target, int chain) {
        ProposalWorker worker(target, config, chain, /*use_gradient=*/false);
        return worker.run(init);
    });
}

std::vector<double> optimize_init(LogDensity& density, int n_steps, double learning_rate,
                                  std::uint64_t seed) {
    const int d = density.dim();
    Rng rng = make_rng(seed, 0);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);

    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = unif(rng);
    std::vector<double> x_prev = x;
    std::vector<double> grad(static_cast<std::size_t>(d), 0.0);
    std::vector<double> m(static_cast<std::size_t>(d), 0.0);
    std::vector<double> v(static_cast<std::size_t>(d), 0.0);

    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    double damp = 1.0;
    int consecutive_bad = 0;
    double beta1_pow = 1.0, beta2_pow = 1.0;

    for (int t = 0; t < n_steps; ++t) {
        const double value = density(x, grad.data());
        if (!std::isfinite(value) || !all_finite(grad)) {
            if (++consecutive_bad >= 100)
                throw std::runtime_error("optimize_init: objective stayed non-finite for 100 "
                                         "consecutive steps");
            x = x_prev;
            damp *= 0.5;
            continue;
        }
        consecutive_bad = 0;
        damp = std::min(1.0, damp * 1.5);

        double grad_max = 0.0;
        for (int i = 0; i < d; ++i) grad_max = std::max(grad_max, std::fabs(grad[static_cast<std::size_t>(i)]));
        if (grad_max < 1e-6) break;

        beta1_pow *= kBeta1;
        beta2_pow *= kBeta2;
        const double lr_t =
            learning_rate * std::max(0.05, 1.0 - static_cast<double>(t) / static_cast<double>(n_steps));
        x_prev = x;
        for (int i = 0; i < d; ++i) {
            const auto u = static_cast<std::size_t>(i);
            m[u] = kBeta1 * m[u] + (1.0 - kBeta1) * grad[u];
            v[u] = kBeta2 * v[u] + (1.0 - kBeta2) * grad[u] * grad[u];
            const double m_hat = m[u] / (1.0 - beta1_pow);
            const double v_hat = v[u] / (1.0 - beta2_pow);
            x[u] += lr_t * damp * m_hat / (std::sqrt(v_hat) + kEps);
        }
    }
    return x;
}

}  // namespace claimcar
