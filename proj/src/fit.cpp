#include "claimcar/fit.hpp"

#include <memory>
#include <random>

#include "claimcar/rng.hpp"

namespace claimcar {

namespace {

// Seed streams disjoint from the per-chain streams (chain index 0..n-1).
constexpr std::uint64_t kRandomInitStream = 0x72616e64;
constexpr std::uint64_t kOptimizeStream = 0x6f707469;

// View of a posterior with the trailing hyperparameters pinned at zero
// (unit scales, phi = rho = 1/2).  The joint log density is unbounded as the
// scales shrink, so a full MAP search dives into the funnel; the conditional
// objective over the location coordinates alone is concave and safe to
// optimize.
class LocationDensity final : public LogDensity {
public:
    LocationDensity(LogDensity& inner, int n_free)
        : inner_(inner),
          n_free_(n_free),
          full_(static_cast<std::size_t>(inner.dim()), 0.0),
          grad_full_(full_.size(), 0.0) {}

    int dim() const override { return n_free_; }
    double operator()(std::span<const double> theta, double* grad) override {
        std::copy(theta.begin(), theta.end(), full_.begin());
        const double value = inner_(full_, grad ? grad_full_.data() : nullptr);
        if (grad) std::copy(grad_full_.begin(), grad_full_.begin() + n_free_, grad);
        return value;
    }

private:
    LogDensity& inner_;
    int n_free_;
    std::vector<double> full_;
    std::vector<double> grad_full_;
};

}  // namespace

DensityFactory posterior_density_factory(const ModelInputs& inputs) {
    return [&inputs] { return std::make_unique<PosteriorDensity>(inputs); };
}

std::vector<double> initial_point(const ModelInputs& inputs, const SamplerConfig& cfg) {
    const int d = inputs.layout.d;
    switch (cfg.init) {
        case InitKind::Zeros:
            return std::vector<double>(static_cast<std::size_t>(d), 0.0);
        case InitKind::Random: {
            Rng rng = make_rng(cfg.seed, kRandomInitStream);
            std::uniform_real_distribution<double> unif(-1.0, 1.0);
            std::vector<double> x(static_cast<std::size_t>(d));
            for (auto& v : x) v = unif(rng);
            return x;
        }
        case InitKind::Optimize: {
            PosteriorDensity density(inputs);
            LocationDensity conditional(density, inputs.layout.sigma_g);
            std::vector<double> x = optimize_init(conditional, cfg.init_steps,
                                                  cfg.init_learning_rate,
                                                  derive_seed(cfg.seed, kOptimizeStream));
            x.resize(static_cast<std::size_t>(d), 0.0);
            return x;
        }
    }
    return std::vector<double>(static_cast<std::size_t>(d), 0.0);
}

PosteriorDraws run_fit(const ModelInputs& inputs, const SamplerConfig& cfg) {
    const std::vector<double> init = initial_point(inputs, cfg);
    const DensityFactory factory = posterior_density_factory(inputs);
    PosteriorDraws draws;
    switch (cfg.algorithm) {
        case SamplerKind::Nuts: draws = nuts_sample(factory, cfg, init); break;
        case SamplerKind::Mala: draws = mala_sample(factory, cfg, init); break;
        case SamplerKind::Rwm: draws = rwm_sample(factory, cfg, init); break;
    }
    draws.names = inputs.layout.parameter_names();
    return draws;
}

}  // namespace claimcar
