#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "claimcar/config.hpp"

namespace claimcar {

// Draws of one scalar parameter: chains[m][i].
using ScalarChains = std::vector<std::vector<double>>;

// Split potential-scale-reduction statistic over half-chains.  Zero
// within-chain variance reports +infinity.
double split_rhat(const ScalarChains& chains);

// Effective sample size with autocovariances combined across chains and the
// Geyer initial-monotone truncation.  Constant chains report NaN.
double ess(const ScalarChains& chains);

// Sum of squared Pearson residuals over N - n_params degrees of freedom.
double overdispersion_statistic(std::span<const double> y, std::span<const double> lambda,
                                std::size_t n_params);

struct FitStatistics {
    std::size_t n_records = 0;
    std::size_t n_params = 0;
    double overdispersion = 0.0;
    double r2_pearson = 0.0;
    double mean_loglik = 0.0;         // includes the log(y!) term
    double mean_loglik_unnorm = 0.0;  // without the log(y!) term
    double mae = 0.0;
    double coverage_2sd = 0.0;        // fraction inside [lambda - 2 sqrt(lambda), lambda + 2 sqrt(lambda)]
};

FitStatistics fit_statistics(std::span<const double> y, std::span<const double> lambda,
                             std::size_t n_params);

struct ParameterDiagnostic {
    std::string name;
    double rhat = 0.0;
    double ess = 0.0;
    double mean = 0.0;  // constrained space
    double sd = 0.0;    // constrained space
};

struct DiagnosticsReport {
    std::size_t n_chains = 0;
    std::size_t n_kept = 0;  // per chain
    std::size_t n_divergent = 0;
    std::vector<ParameterDiagnostic> params;
    double max_rhat = 0.0;
    std::string max_rhat_name;
    double min_ess = 0.0;
    std::string min_ess_name;
    FitStatistics fit;
    double rhat_max = 1.10;
    double ess_min = 35.0;
    bool gate_pass = false;
    std::vector<std::string> offenders;
};

struct GateResult {
    bool pass = true;
    std::vector<std::string> offenders;
};

// Fails iff any parameter violates either threshold; offenders are listed
// worst-first.  Non-finite statistics count as violations.
GateResult convergence_gate(const std::vector<ParameterDiagnostic>& params, double rhat_max,
                            double ess_min);

// Convergence table + gate + fit statistics.  R-hat and ESS are computed on
// the unconstrained draws; means and standard deviations on the constrained
// ones.  Outer index: chain; middle: kept draw; inner: parameter.
DiagnosticsReport build_report(const std::vector<std::string>& names,
                               const std::vector<std::vector<std::vector<double>>>& unconstrained,
                               const std::vector<std::vector<std::vector<double>>>& constrained,
                               std::size_t n_divergent, std::span<const double> y,
                               std::span<const double> lambda, std::size_t n_params_model,
                               const DiagnosticsConfig& cfg);

std::string report_json(const DiagnosticsReport& report);
std::string report_text(const DiagnosticsReport& report);

// Plot-ready files: percentile table of observed vs predicted counts, and
// per-record residuals.
void write_prediction_plots(const std::string& quantiles_path, const std::string& residuals_path,
                            std::span<const double> y, std::span<const double> lambda);

}  // namespace claimcar
