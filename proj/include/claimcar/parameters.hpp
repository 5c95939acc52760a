#pragma once

#include <span>
#include <string>
#include <vector>

namespace claimcar {

// Offsets of each block inside the flat unconstrained vector.  Order:
// c, v1, v2, gamma, delta, eta, xi~ (non-centered), then the scalars
// log sigma_g, log sigma_v1, log sigma_v2, log sigma_eps, log sigma_xi,
// logit phi, logit rho.
struct BlockLayout {
    int L = 0;
    int n_brand = 0;
    int n_category = 0;
    int M = 0;
    int J = 0;
    int T = 1;

    int c = 0;
    int v1 = 0;
    int v2 = 0;
    int gamma = 0;
    int delta = 0;
    int eta = 0;
    int xi = 0;
    int sigma_g = 0;
    int sigma_v1 = 0;
    int sigma_v2 = 0;
    int sigma_eps = 0;
    int sigma_xi = 0;
    int phi = 0;
    int rho = 0;
    int d = 0;

    int n_xi() const { return T - 1; }

    static BlockLayout make(int L, int n_brand, int n_category, int M, int J, int T);

    // Constrained-space names in layout order (draw CSV header).
    std::vector<std::string> parameter_names() const;
};

// Constrained-space parameters.  xi holds the actual random-walk increments
// (the sampler works with xi~ = xi / sigma_xi internally).
struct ParameterBlock {
    std::vector<double> c;
    std::vector<double> v1;
    std::vector<double> v2;
    std::vector<double> gamma;
    std::vector<double> delta;
    std::vector<double> eta;
    std::vector<double> xi;
    double sigma_g = 1.0;
    double sigma_v1 = 1.0;
    double sigma_v2 = 1.0;
    double sigma_eps = 1.0;
    double sigma_xi = 1.0;
    double phi = 0.5;
    double rho = 0.5;
};

// Bijection between the block and the flat unconstrained vector.  Throws on
// non-positive scales or phi/rho outside the open unit interval.
std::vector<double> to_unconstrained(const ParameterBlock& p, const BlockLayout& layout);
ParameterBlock to_constrained(std::span<const double> theta, const BlockLayout& layout);

// Constrained values in layout order; this is the row written to draw CSVs
// (xi re-centered, scales exponentiated, phi/rho on (0,1)).
std::vector<double> constrained_values(std::span<const double> theta, const BlockLayout& layout);

// Inverse of constrained_values; used when diagnostics reconstruct the
// sampling-space draws from persisted CSVs.
std::vector<double> unconstrained_from_values(std::span<const double> values,
                                              const BlockLayout& layout);

}  // namespace claimcar
