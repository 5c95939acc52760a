#include "claimcar/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "claimcar/csv.hpp"
#include "claimcar/numeric.hpp"

namespace claimcar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void fft_inplace(std::vector<std::complex<double>>& a, bool invert) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = 2.0 * M_PI / static_cast<double>(len) * (invert ? -1.0 : 1.0);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (invert)
        for (auto& x : a) x /= static_cast<double>(n);
}

// Biased autocovariance (denominator n) for lags 0..n-1.
std::vector<double> autocovariance(std::span<const double> x) {
    const std::size_t n = x.size();
    const double m = mean_of(x);
    std::size_t len = 1;
    while (len < 2 * n) len <<= 1;
    std::vector<std::complex<double>> a(len, {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) a[i] = {x[i] - m, 0.0};
    fft_inplace(a, false);
    for (auto& v : a) v = {std::norm(v), 0.0};
    fft_inplace(a, true);
    std::vector<double> acov(n);
    for (std::size_t t = 0; t < n; ++t) acov[t] = a[t].real() / static_cast<double>(n);
    return acov;
}

std::size_t common_length(const ScalarChains& chains) {
    if (chains.empty()) throw std::invalid_argument("diagnostics: no chains");
    std::size_t n = chains.front().size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 4) throw std::invalid_argument("diagnostics: need at least 4 draws per chain");
    return n;
}

std::string format_stat(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

double split_rhat(const ScalarChains& chains) {
    const std::size_t n = common_length(chains);
    const std::size_t half = n / 2;

    std::vector<double> means, vars;
    for (const auto& c : chains) {
        for (int part = 0; part < 2; ++part) {
            const std::size_t begin = part == 0 ? 0 : n - half;
            Welford w;
            for (std::size_t i = 0; i < half; ++i) w.add(c[begin + i]);
            means.push_back(w.mean());
            vars.push_back(w.variance());
        }
    }
    const double within = mean_of(vars);
    if (!(within > 0.0)) return kInf;
    const double between_over_n = variance_of(means);
    const double nh = static_cast<double>(half);
    const double var_plus = (nh - 1.0) / nh * within + between_over_n;
    return std::sqrt(var_plus / within);
}

double ess(const ScalarChains& chains) {
    const std::size_t n = common_length(chains);
    const std::size_t m = chains.size();

    std::vector<std::vector<double>> acov;
    acov.reserve(m);
    std::vector<double> chain_means;
    chain_means.reserve(m);
    for (const auto& c : chains) {
        acov.push_back(autocovariance(std::span<const double>(c.data(), n)));
        chain_means.push_back(mean_of(std::span<const double>(c.data(), n)));
    }

    double within = 0.0;
    for (const auto& a : acov) within += a[0] * static_cast<double>(n) / (static_cast<double>(n) - 1.0);
    within /= static_cast<double>(m);
    double var_plus = within * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
    if (m > 1) var_plus += variance_of(chain_means);
    if (!(var_plus > 0.0)) return kNaN;

    std::vector<double> rho(n);
    for (std::size_t t = 0; t < n; ++t) {
        double mean_acov = 0.0;
        for (const auto& a : acov) mean_acov += a[t];
        mean_acov /= static_cast<double>(m);
        rho[t] = 1.0 - (within - mean_acov) / var_plus;
    }

    // Geyer pairs: keep the initial positive sequence, enforce monotonicity.
    double tau = -1.0;
    double prev_pair = kInf;
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = rho[2 * k] + rho[2 * k + 1];
        if (k > 0 && pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1e-8);
    return static_cast<double>(m) * static_cast<double>(n) / tau;
}

double overdispersion_statistic(std::span<const double> y, std::span<const double> lambda,
                                std::size_t n_params) {
    if (y.size() != lambda.size())
        throw std::invalid_argument("overdispersion_statistic: length mismatch");
    if (y.size() <= n_params)
        throw std::invalid_argument("overdispersion_statistic: no degrees of freedom (N <= n_params)");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(lambda[i] > 0.0))
            throw std::invalid_argument("overdispersion_statistic: nonpositive rate");
        const double r = y[i] - lambda[i];
        sum += r * r / lambda[i];
    }
    return sum / static_cast<double>(y.size() - n_params);
}

FitStatistics fit_statistics(std::span<const double> y, std::span<const double> lambda,
                             std::size_t n_params) {
    if (y.size() != lambda.size()) throw std::invalid_argument("fit_statistics: length mismatch");
    if (y.empty()) throw std::invalid_argument("fit_statistics: no records");

    FitStatistics out;
    out.n_records = y.size();
    out.n_params = n_params;
    out.overdispersion = overdispersion_statistic(y, lambda, n_params);

    const double y_bar = mean_of(y);
    double pearson_num = 0.0, pearson_den = 0.0;
    double loglik = 0.0, loglik_unnorm = 0.0, mae = 0.0;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - lambda[i];
        pearson_num += r * r / lambda[i];
        if (y_bar > 0.0) pearson_den += (y[i] - y_bar) * (y[i] - y_bar) / y_bar;
        const double core = (y[i] > 0.0 ? y[i] * std::log(lambda[i]) : 0.0) - lambda[i];
        loglik_unnorm += core;
        loglik += core - std::lgamma(y[i] + 1.0);
        mae += std::abs(r);
        const double sd2 = 2.0 * std::sqrt(lambda[i]);
        if (y[i] >= lambda[i] - sd2 && y[i] <= lambda[i] + sd2) ++covered;
    }
    const double n = static_cast<double>(y.size());
    out.r2_pearson = (y_bar > 0.0 && pearson_den > 0.0) ? 1.0 - pearson_num / pearson_den : kNaN;
    out.mean_loglik = loglik / n;
    out.mean_loglik_unnorm = loglik_unnorm / n;
    out.mae = mae / n;
    out.coverage_2sd = static_cast<double>(covered) / n;
    return out;
}

GateResult convergence_gate(const std::vector<ParameterDiagnostic>& params, double rhat_max,
                            double ess_min) {
    struct Offender {
        double rhat;
        double ess;
        const ParameterDiagnostic* p;
    };
    std::vector<Offender> bad;
    for (const auto& p : params) {
        const bool bad_rhat = !(p.rhat <= rhat_max);
        const bool bad_ess = !(p.ess >= ess_min);
        if (bad_rhat || bad_ess) bad.push_back({p.rhat, p.ess, &p});
    }
    std::sort(bad.begin(), bad.end(), [](const Offender& a, const Offender& b) {
        const double ra = std::isnan(a.rhat) ? kInf : a.rhat;
        const double rb = std::isnan(b.rhat) ? kInf : b.rhat;
        if (ra != rb) return ra > rb;
        const double ea = std::isnan(a.ess) ? -kInf : a.ess;
        const double eb = std::isnan(b.ess) ? -kInf : b.ess;
        if (ea != eb) return ea < eb;
        return a.p->name < b.p->name;
    });
    GateResult out;
    out.pass = bad.empty();
    for (const auto& o : bad)
        out.offenders.push_back(o.p->name + ": rhat=" + format_stat(o.rhat) +
                                ", ess=" + format_stat(o.ess));
    return out;
}

DiagnosticsReport build_report(const std::vector<std::string>& names,
                               const std::vector<std::vector<std::vector<double>>>& unconstrained,
                               const std::vector<std::vector<std::vector<double>>>& constrained,
                               std::size_t n_divergent, std::span<const double> y,
                               std::span<const double> lambda, std::size_t n_params_model,
                               const DiagnosticsConfig& cfg) {
    if (unconstrained.empty() || unconstrained.front().empty())
        throw std::invalid_argument("build_report: no draws");
    if (constrained.size() != unconstrained.size())
        throw std::invalid_argument("build_report: chain count mismatch");

    DiagnosticsReport r;
    r.n_chains = unconstrained.size();
    r.n_kept = unconstrained.front().size();
    r.n_divergent = n_divergent;
    const std::size_t d = names.size();

    ScalarChains scalar(r.n_chains);
    r.max_rhat = -kInf;
    r.min_ess = kInf;
    for (std::size_t p = 0; p < d; ++p) {
        Welford pooled;
        for (std::size_t c = 0; c < r.n_chains; ++c) {
            auto& s = scalar[c];
            s.resize(unconstrained[c].size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                s[i] = unconstrained[c][i][p];
                pooled.add(constrained[c][i][p]);
            }
        }
        ParameterDiagnostic pd;
        pd.name = names[p];
        pd.rhat = split_rhat(scalar);
        pd.ess = ess(scalar);
        pd.mean = pooled.mean();
        pd.sd = std::sqrt(pooled.variance());
        if (pd.rhat > r.max_rhat || r.max_rhat_name.empty()) {
            r.max_rhat = pd.rhat;
            r.max_rhat_name = pd.name;
        }
        if (pd.ess < r.min_ess) {
            r.min_ess = pd.ess;
            r.min_ess_name = pd.name;
        }
        r.params.push_back(std::move(pd));
    }

    r.fit = fit_statistics(y, lambda, n_params_model);
    r.rhat_max = cfg.rhat_max;
    r.ess_min = cfg.ess_min;
    GateResult gate = convergence_gate(r.params, cfg.rhat_max, cfg.ess_min);
    r.gate_pass = gate.pass;
    r.offenders = std::move(gate.offenders);
    return r;
}

std::string report_json(const DiagnosticsReport& r) {
    nlohmann::ordered_json j;
    j["kind"] = "diagnostics_report";
    j["n_chains"] = r.n_chains;
    j["n_kept_per_chain"] = r.n_kept;
    j["n_divergent"] = r.n_divergent;
    j["thresholds"] = {{"rhat_max", r.rhat_max}, {"ess_min", r.ess_min}};
    j["gate"] = {{"pass", r.gate_pass}, {"offenders", r.offenders}};
    j["summary"] = {{"max_rhat", r.max_rhat},
                    {"max_rhat_parameter", r.max_rhat_name},
                    {"min_ess", r.min_ess},
                    {"min_ess_parameter", r.min_ess_name}};
    j["fit"] = {{"n_records", r.fit.n_records},
                {"n_params", r.fit.n_params},
                {"overdispersion", r.fit.overdispersion},
                {"r2_pearson", r.fit.r2_pearson},
                {"mean_log_likelihood", r.fit.mean_loglik},
                {"mean_log_likelihood_unnormalized", r.fit.mean_loglik_unnorm},
                {"mae", r.fit.mae},
                {"coverage_2sd", r.fit.coverage_2sd}};
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (const auto& p : r.params) {
        params.push_back({{"name", p.name},
                          {"rhat", p.rhat},
                          {"ess", p.ess},
                          {"mean", p.mean},
                          {"sd", p.sd}});
    }
    j["parameters"] = std::move(params);
    return j.dump(2) + "\n";
}

std::string report_text(const DiagnosticsReport& r) {
    std::ostringstream out;
    out << "convergence\n";
    out << "  chains: " << r.n_chains << "  kept draws per chain: " << r.n_kept
        << "  divergent: " << r.n_divergent << "\n";
    out << "  max R-hat: " << format_stat(r.max_rhat) << " (" << r.max_rhat_name << ")\n";
    out << "  min ESS:   " << format_stat(r.min_ess) << " (" << r.min_ess_name << ")\n";
    out << "  gate (R-hat <= " << format_stat(r.rhat_max) << ", ESS >= " << format_stat(r.ess_min)
        << "): " << (r.gate_pass ? "PASS" : "FAIL") << "\n";
    if (!r.offenders.empty()) {
        out << "  offenders (" << r.offenders.size() << "):\n";
        const std::size_t shown = std::min<std::size_t>(r.offenders.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) out << "    " << r.offenders[i] << "\n";
        if (shown < r.offenders.size())
            out << "    ... " << (r.offenders.size() - shown) << " more\n";
    }
    out << "fit\n";
    out << "  records: " << r.fit.n_records << "  parameters: " << r.fit.n_params << "\n";
    out << "  overdispersion:      " << format_stat(r.fit.overdispersion) << "\n";
    out << "  R2 (Pearson):        " << format_stat(r.fit.r2_pearson) << "\n";
    out << "  mean log-likelihood: " << format_stat(r.fit.mean_loglik) << " ("
        << format_stat(r.fit.mean_loglik_unnorm) << " without log y! term)\n";
    out << "  MAE:                 " << format_stat(r.fit.mae) << "\n";
    out << "  2sd coverage:        " << format_stat(r.fit.coverage_2sd) << "\n";
    return out.str();
}

void write_prediction_plots(const std::string& quantiles_path, const std::string& residuals_path,
                            std::span<const double> y, std::span<const double> lambda) {
    std::vector<double> ys(y.begin(), y.end());
    std::vector<double> ls(lambda.begin(), lambda.end());
    std::sort(ys.begin(), ys.end());
    std::sort(ls.begin(), ls.end());

    std::ofstream q(quantiles_path);
    if (!q) throw std::runtime_error("cannot write " + quantiles_path);
    q << "percentile,observed,predicted\n";
    for (int p = 1; p <= 99; ++p) {
        const double prob = p / 100.0;
        q << p << ',' << csv::format_double(quantile_sorted(ys, prob)) << ','
          << csv::format_double(quantile_sorted(ls, prob)) << '\n';
    }

    std::ofstream res(residuals_path);
    if (!res) throw std::runtime_error("cannot write " + residuals_path);
    res << "observed,predicted,pearson_residual\n";
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double pearson = (y[i] - lambda[i]) / std::sqrt(lambda[i]);
        res << csv::format_double(y[i]) << ',' << csv::format_double(lambda[i]) << ','
            << csv::format_double(pearson) << '\n';
    }
}

}  // namespace claimcar
