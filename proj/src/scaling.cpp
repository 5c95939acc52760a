#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "claimcar/diagnostics.hpp"
#include "claimcar/numeric.hpp"
#include "claimcar/rng.hpp"
#include "claimcar/sampler.hpp"

namespace claimcar {

namespace {

class ProductNormal final : public LogDensity {
public:
    explicit ProductNormal(int d) : d_(d) {}
    int dim() const override { return d_; }
    double operator()(std::span<const double> theta, double* grad) override {
        double quad = 0.0;
        for (int i = 0; i < d_; ++i) {
            const double t = theta[static_cast<std::size_t>(i)];
            quad += t * t;
            if (grad) grad[i] = -t;
        }
        return -0.5 * quad;
    }

private:
    int d_;
};

SamplerConfig benchmark_config(SamplerKind kind, int dim, std::uint64_t master, int index) {
    SamplerConfig cfg;
    cfg.algorithm = kind;
    cfg.seed = derive_seed(master, static_cast<std::uint64_t>(index));
    cfg.n_chains = 1;
    cfg.thin = 1;
    cfg.parallel_chains = false;
    switch (kind) {
        case SamplerKind::Nuts:
            cfg.n_warmup = 500;
            cfg.n_samples = 1000;
            break;
        case SamplerKind::Mala:
            cfg.n_warmup = 1000;
            cfg.n_samples = 3000 + 8 * dim;
            break;
        case SamplerKind::Rwm:
            cfg.n_warmup = 1000;
            cfg.n_samples = 4000 + 64 * dim;
            break;
    }
    return cfg;
}

}  // namespace

ScalingResult scaling_benchmark(SamplerKind kind, std::span<const int> dims, std::uint64_t seed) {
    if (dims.empty()) throw std::invalid_argument("scaling_benchmark: no dimensions");

    ScalingResult result;
    result.kind = kind;
    int index = 0;
    for (const int dim : dims) {
        if (dim < 1) throw std::invalid_argument("scaling_benchmark: dimension must be >= 1");
        const SamplerConfig cfg = benchmark_config(kind, dim, seed, index++);

        // Start each run from an exact draw of the target.
        Rng init_rng = make_rng(seed, 0x1000u + static_cast<std::uint64_t>(index));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> init(static_cast<std::size_t>(dim));
        for (auto& v : init) v = normal(init_rng);

        const DensityFactory factory = [dim] { return std::make_unique<ProductNormal>(dim); };
        PosteriorDraws draws;
        switch (kind) {
            case SamplerKind::Nuts: draws = nuts_sample(factory, cfg, init); break;
            case SamplerKind::Mala: draws = mala_sample(factory, cfg, init); break;
            case SamplerKind::Rwm: draws = rwm_sample(factory, cfg, init); break;
        }
        const ChainDraws& chain = draws.chains.front();

        const int tracked = std::min(dim, 32);
        std::vector<double> esses;
        esses.reserve(static_cast<std::size_t>(tracked));
        ScalarChains scalar(1);
        scalar[0].resize(chain.draws.size());
        for (int c = 0; c < tracked; ++c) {
            for (std::size_t i = 0; i < chain.draws.size(); ++i)
                scalar[0][i] = chain.draws[i][static_cast<std::size_t>(c)];
            esses.push_back(ess(scalar));
        }
        std::sort(esses.begin(), esses.end());
        const double ess_median = quantile_sorted(esses, 0.5);

        ScalingPoint point;
        point.dim = dim;
        point.n_evals = chain.n_evals_sampling;
        point.ess = ess_median;
        point.cost = static_cast<double>(chain.n_evals_sampling) * dim / ess_median;
        point.excluded = !(ess_median >= 10.0);
        result.points.push_back(point);
    }

    std::vector<double> log_d, log_cost;
    for (const auto& p : result.points) {
        if (p.excluded) continue;
        log_d.push_back(std::log(static_cast<double>(p.dim)));
        log_cost.push_back(std::log(p.cost));
    }
    if (log_d.size() >= 2) result.slope = fit_line(log_d, log_cost).slope;
    return result;
}

}  // namespace claimcar
