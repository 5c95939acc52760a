#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "claimcar/config.hpp"
#include "claimcar/data.hpp"
#include "claimcar/parameters.hpp"

namespace claimcar {

// Forward-simulation settings.  With truth_from_priors the generator draws
// every effect from its prior (scales inflated by truth_scale_multiplier —
// the calibration negative-control knob); otherwise `truth` supplies fixed
// values, with empty vector blocks meaning all-zeros.
struct SyntheticSpec {
    std::size_t n_records = 20000;
    int n_cities = 100;
    int n_brand = 8;
    int n_category = 4;
    int n_covariates = 3;
    int n_years = 10;
    int knn_k = 5;
    int year_floor = 1971;
    double exposure_log_mean = -1.0;
    double exposure_log_sd = 1.0;
    std::uint64_t seed = 1;
    SplineConfig spline;
    bool truth_from_priors = true;
    ParameterBlock truth;
    double truth_scale_multiplier = 1.0;
};

// Reads the [synthetic] section (plus spline.*) of a config file.
SyntheticSpec synthetic_spec_from_map(ConfigMap map);

struct SyntheticResult {
    Dataset dataset;             // ingested back from the written files
    ParameterBlock truth;
    std::vector<double> rates;   // per record, in dataset order
    std::string claims_path;
    std::string cities_path;
    std::string truth_path;
};

// Writes cities/claims CSVs in the ingestion schema plus a truth JSON into
// out_dir, simulating y ~ Poisson(lambda) with lambda from predict_rates.
SyntheticResult generate(const SyntheticSpec& spec, const std::string& out_dir);

struct SbcResult {
    std::vector<std::string> names;
    std::vector<std::vector<int>> ranks;  // [parameter][valid replicate]
    int n_ranks = 0;                      // kept draws + 1 possible rank values
    std::size_t n_replicates = 0;
    std::size_t n_excluded = 0;           // convergence gate failures
    std::vector<double> p_values;         // chi-square uniformity per parameter
    double frac_below_05 = 0.0;
};

// Simulation-based calibration: per replicate draw truth from the priors,
// simulate, fit, and record the rank of each scalar truth among the kept
// draws.  Non-converged replicates are excluded from the ranks.
SbcResult sbc_run(const SyntheticSpec& spec, int n_replicates, const SamplerConfig& sampler_cfg,
                  const DiagnosticsConfig& diag_cfg, const std::string& work_dir);

}  // namespace claimcar
