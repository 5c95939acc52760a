#include "claimcar/parameters.hpp"

#include <cmath>
#include <stdexcept>

#include "claimcar/numeric.hpp"

namespace claimcar {

BlockLayout BlockLayout::make(int L, int n_brand, int n_category, int M, int J, int T) {
    if (L < 1 || n_brand < 1 || n_category < 1 || M < 0 || J < 1 || T < 1)
        throw std::invalid_argument("block layout: invalid cardinalities");
    BlockLayout b;
    b.L = L;
    b.n_brand = n_brand;
    b.n_category = n_category;
    b.M = M;
    b.J = J;
    b.T = T;
    int off = 0;
    b.c = off;
    off += L;
    b.v1 = off;
    off += n_brand;
    b.v2 = off;
    off += n_category;
    b.gamma = off;
    off += M;
    b.delta = off;
    off += J;
    b.eta = off;
    off += J;
    b.xi = off;
    off += T - 1;
    b.sigma_g = off++;
    b.sigma_v1 = off++;
    b.sigma_v2 = off++;
    b.sigma_eps = off++;
    b.sigma_xi = off++;
    b.phi = off++;
    b.rho = off++;
    b.d = off;
    return b;
}

std::vector<std::string> BlockLayout::parameter_names() const {
    std::vector<std::string> names;
    names.reserve(d);
    auto block = [&names](const char* prefix, int n) {
        for (int i = 0; i < n; ++i) names.push_back(std::string(prefix) + "[" + std::to_string(i) + "]");
    };
    block("c", L);
    block("v1", n_brand);
    block("v2", n_category);
    block("gamma", M);
    block("delta", J);
    block("eta", J);
    block("xi", T - 1);
    names.emplace_back("sigma_g");
    names.emplace_back("sigma_v1");
    names.emplace_back("sigma_v2");
    names.emplace_back("sigma_eps");
    names.emplace_back("sigma_xi");
    names.emplace_back("phi");
    names.emplace_back("rho");
    return names;
}

namespace {

void check_sizes(const ParameterBlock& p, const BlockLayout& b) {
    if (static_cast<int>(p.c.size()) != b.L || static_cast<int>(p.v1.size()) != b.n_brand ||
        static_cast<int>(p.v2.size()) != b.n_category ||
        static_cast<int>(p.gamma.size()) != b.M || static_cast<int>(p.delta.size()) != b.J ||
        static_cast<int>(p.eta.size()) != b.J || static_cast<int>(p.xi.size()) != b.n_xi())
        throw std::invalid_argument("parameter block sizes do not match layout");
}

double checked_log(double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    return std::log(v);
}

double checked_logit(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0))
        throw std::invalid_argument(std::string(name) + " must lie strictly inside (0,1)");
    return logit(v);
}

}  // namespace

std::vector<double> to_unconstrained(const ParameterBlock& p, const BlockLayout& b) {
    check_sizes(p, b);
    std::vector<double> theta(b.d);
    std::copy(p.c.begin(), p.c.end(), theta.begin() + b.c);
    std::copy(p.v1.begin(), p.v1.end(), theta.begin() + b.v1);
    std::copy(p.v2.begin(), p.v2.end(), theta.begin() + b.v2);
    std::copy(p.gamma.begin(), p.gamma.end(), theta.begin() + b.gamma);
    std::copy(p.delta.begin(), p.delta.end(), theta.begin() + b.delta);
    std::copy(p.eta.begin(), p.eta.end(), theta.begin() + b.eta);
    const double sigma_xi = p.sigma_xi;
    if (!(sigma_xi > 0.0)) throw std::invalid_argument("sigma_xi must be positive");
    for (int t = 0; t < b.n_xi(); ++t) theta[b.xi + t] = p.xi[t] / sigma_xi;
    theta[b.sigma_g] = checked_log(p.sigma_g, "sigma_g");
    theta[b.sigma_v1] = checked_log(p.sigma_v1, "sigma_v1");
    theta[b.sigma_v2] = checked_log(p.sigma_v2, "sigma_v2");
    theta[b.sigma_eps] = checked_log(p.sigma_eps, "sigma_eps");
    theta[b.sigma_xi] = checked_log(p.sigma_xi, "sigma_xi");
    theta[b.phi] = checked_logit(p.phi, "phi");
    theta[b.rho] = checked_logit(p.rho, "rho");
    return theta;
}

ParameterBlock to_constrained(std::span<const double> theta, const BlockLayout& b) {
    if (static_cast<int>(theta.size()) != b.d)
        throw std::invalid_argument("theta length does not match layout");
    ParameterBlock p;
    p.c.assign(theta.begin() + b.c, theta.begin() + b.c + b.L);
    p.v1.assign(theta.begin() + b.v1, theta.begin() + b.v1 + b.n_brand);
    p.v2.assign(theta.begin() + b.v2, theta.begin() + b.v2 + b.n_category);
    p.gamma.assign(theta.begin() + b.gamma, theta.begin() + b.gamma + b.M);
    p.delta.assign(theta.begin() + b.delta, theta.begin() + b.delta + b.J);
    p.eta.assign(theta.begin() + b.eta, theta.begin() + b.eta + b.J);
    p.sigma_g = std::exp(theta[b.sigma_g]);
    p.sigma_v1 = std::exp(theta[b.sigma_v1]);
    p.sigma_v2 = std::exp(theta[b.sigma_v2]);
    p.sigma_eps = std::exp(theta[b.sigma_eps]);
    p.sigma_xi = std::exp(theta[b.sigma_xi]);
    p.phi = sigmoid(theta[b.phi]);
    p.rho = sigmoid(theta[b.rho]);
    p.xi.resize(b.n_xi());
    for (int t = 0; t < b.n_xi(); ++t) p.xi[t] = p.sigma_xi * theta[b.xi + t];
    return p;
}

std::vector<double> constrained_values(std::span<const double> theta, const BlockLayout& b) {
    if (static_cast<int>(theta.size()) != b.d)
        throw std::invalid_argument("theta length does not match layout");
    std::vector<double> out(theta.begin(), theta.end());
    const double sigma_xi = std::exp(theta[b.sigma_xi]);
    for (int t = 0; t < b.n_xi(); ++t) out[b.xi + t] = sigma_xi * theta[b.xi + t];
    out[b.sigma_g] = std::exp(theta[b.sigma_g]);
    out[b.sigma_v1] = std::exp(theta[b.sigma_v1]);
    out[b.sigma_v2] = std::exp(theta[b.sigma_v2]);
    out[b.sigma_eps] = std::exp(theta[b.sigma_eps]);
    out[b.sigma_xi] = sigma_xi;
    out[b.phi] = sigmoid(theta[b.phi]);
    out[b.rho] = sigmoid(theta[b.rho]);
    return out;
}

std::vector<double> unconstrained_from_values(std::span<const double> values,
                                              const BlockLayout& b) {
    if (static_cast<int>(values.size()) != b.d)
        throw std::invalid_argument("values length does not match layout");
    std::vector<double> theta(values.begin(), values.end());
    const double sigma_xi = values[b.sigma_xi];
    if (!(sigma_xi > 0.0)) throw std::invalid_argument("sigma_xi must be positive");
    for (int t = 0; t < b.n_xi(); ++t) theta[b.xi + t] = values[b.xi + t] / sigma_xi;
    theta[b.sigma_g] = checked_log(values[b.sigma_g], "sigma_g");
    theta[b.sigma_v1] = checked_log(values[b.sigma_v1], "sigma_v1");
    theta[b.sigma_v2] = checked_log(values[b.sigma_v2], "sigma_v2");
    theta[b.sigma_eps] = checked_log(values[b.sigma_eps], "sigma_eps");
    theta[b.sigma_xi] = checked_log(values[b.sigma_xi], "sigma_xi");
    theta[b.phi] = checked_logit(values[b.phi], "phi");
    theta[b.rho] = checked_logit(values[b.rho], "rho");
    return theta;
}

}  // namespace claimcar
