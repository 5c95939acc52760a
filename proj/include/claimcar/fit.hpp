#pragma once

#include <vector>

#include "claimcar/posterior.hpp"
#include "claimcar/sampler.hpp"

namespace claimcar {

// log_posterior as a sampler target; each instance owns its workspace.
class PosteriorDensity final : public LogDensity {
public:
    explicit PosteriorDensity(const ModelInputs& inputs) : layout_(inputs.layout), post_(inputs) {}

    int dim() const override { return layout_.d; }
    double operator()(std::span<const double> theta, double* grad) override {
        if (!grad) return post_.value(theta);
        return post_.value_and_grad(theta, std::span<double>(grad, theta.size()));
    }

private:
    BlockLayout layout_;
    Posterior post_;
};

DensityFactory posterior_density_factory(const ModelInputs& inputs);

// Starting point per config.init: zeros, uniform(-1, 1), or the adaptive
// gradient ascent of optimize_init.
std::vector<double> initial_point(const ModelInputs& inputs, const SamplerConfig& cfg);

// initial_point + the configured sampler; parameter names filled in.
PosteriorDraws run_fit(const ModelInputs& inputs, const SamplerConfig& cfg);

}  // namespace claimcar
