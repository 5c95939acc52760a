#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "claimcar/config.hpp"
#include "claimcar/rng.hpp"

namespace claimcar {

// Target density.  Returns log p(theta) and, when grad != nullptr, writes
// d(log p)/d(theta).  Non-finite values signal an invalid point (treated as
// a rejection).  Instances may hold workspaces, so every chain works on its
// own instance.
class LogDensity {
public:
    virtual ~LogDensity() = default;
    virtual int dim() const = 0;
    virtual double operator()(std::span<const double> theta, double* grad) = 0;
};

// One fresh density instance per chain.
using DensityFactory = std::function<std::unique_ptr<LogDensity>()>;

// Factory for stateless densities shared by reference.
DensityFactory shared_density(LogDensity& density);

struct DrawStats {
    double energy = 0.0;
    int tree_depth = 0;
    bool divergent = false;
    double step_size = 0.0;
};

struct ChainDraws {
    int chain_id = 0;
    std::vector<std::vector<double>> draws;  // n_kept x d, unconstrained
    std::vector<DrawStats> stats;
    std::size_t n_divergent = 0;       // post-warmup
    double mean_accept = 0.0;          // post-warmup
    std::size_t n_evals_sampling = 0;  // density evaluations after warmup
    double step_size = 0.0;
    std::vector<double> inv_mass_diag;
};

struct PosteriorDraws {
    int d = 0;
    std::vector<std::string> names;  // optional; filled by model-level callers
    std::vector<ChainDraws> chains;

    std::size_t n_kept_per_chain() const {
        return chains.empty() ? 0 : chains.front().draws.size();
    }
};

// Multinomial No-U-Turn sampler: doubling trajectory, generalized U-turn
// criterion on subtree momentum sums, divergence at energy error > 1000.
// Warmup runs dual averaging toward target_accept plus windowed diagonal
// mass adaptation (15% fast, doubling slow windows, 10% terminal).
PosteriorDraws nuts_sample(const DensityFactory& make_density, const SamplerConfig& config,
                           std::span<const double> init);

// Metropolis-adjusted Langevin: x' = x + (eps^2/2) grad + eps z with the
// asymmetric-proposal correction; dual averaging toward acceptance 0.574.
PosteriorDraws mala_sample(const DensityFactory& make_density, const SamplerConfig& config,
                           std::span<const double> init);

// Random-walk Metropolis with isotropic Gaussian proposals.  The acceptance
// target interpolates from 0.441 at d=1 down to the asymptotic 0.234 at
// d >= 5.
PosteriorDraws rwm_sample(const DensityFactory& make_density, const SamplerConfig& config,
                          std::span<const double> init);
double rwm_target_accept(int dim);

// Adaptive-moment gradient ascent on the log density from a small random
// start; returns the endpoint.  Aborts if the objective stays non-finite for
// 100 consecutive steps.
std::vector<double> optimize_init(LogDensity& density, int n_steps, double learning_rate,
                                  std::uint64_t seed);

// One leapfrog step under kinetic energy (1/2) p' diag(inv_mass) p; returns
// the log density at the new position and refreshes `grad`.
double leapfrog(LogDensity& density, std::span<double> q, std::span<double> p,
                std::span<double> grad, double eps, std::span<const double> inv_mass);

// Nesterov dual averaging of log step size toward a target acceptance.
class DualAveraging {
public:
    void reset(double eps0, double target);
    void update(double accept_prob);
    double current() const { return eps_; }
    double adapted() const { return eps_bar_; }

private:
    double mu_ = 0.0, eps_ = 1.0, eps_bar_ = 1.0, h_bar_ = 0.0, target_ = 0.8;
    int count_ = 0;
};

// Cost-per-effective-sample scaling study on product standard normals.
struct ScalingPoint {
    int dim = 0;
    std::size_t n_evals = 0;
    double ess = 0.0;
    double cost = 0.0;  // (evals * dim) / ess
    bool excluded = false;  // ess estimate below 10
};

struct ScalingResult {
    SamplerKind kind;
    std::vector<ScalingPoint> points;
    double slope = 0.0;  // log-log cost vs dim over included points
};

ScalingResult scaling_benchmark(SamplerKind kind, std::span<const int> dims, std::uint64_t seed);

}  // namespace claimcar
