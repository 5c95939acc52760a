#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "claimcar/parameters.hpp"

using namespace claimcar;

namespace {

ParameterBlock random_block(const BlockLayout& b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    ParameterBlock p;
    p.c.resize(b.L);
    p.v1.resize(b.n_brand);
    p.v2.resize(b.n_category);
    p.gamma.resize(b.M);
    p.delta.resize(b.J);
    p.eta.resize(b.J);
    p.xi.resize(b.n_xi());
    for (auto* block : {&p.c, &p.v1, &p.v2, &p.gamma, &p.delta, &p.eta, &p.xi})
        for (auto& v : *block) v = z(rng);
    p.sigma_g = std::exp(0.3 * z(rng));
    p.sigma_v1 = std::exp(0.3 * z(rng));
    p.sigma_v2 = std::exp(0.3 * z(rng));
    p.sigma_eps = std::exp(0.3 * z(rng));
    p.sigma_xi = std::exp(0.3 * z(rng));
    p.phi = unit(rng);
    p.rho = unit(rng);
    return p;
}

}  // namespace

TEST_CASE("layout dimensions and offsets") {
    const BlockLayout b = BlockLayout::make(11, 29, 6, 3, 3843, 33);
    CHECK(b.d == 11 + 29 + 6 + 3 + 2 * 3843 + 32 + 7);
    const auto names = b.parameter_names();
    REQUIRE(names.size() == static_cast<std::size_t>(b.d));
    CHECK(names.front() == "c[0]");
    CHECK(names.back() == "rho");
    CHECK(names[static_cast<std::size_t>(b.d) - 7] == "sigma_g");

    const BlockLayout small = BlockLayout::make(5, 2, 2, 1, 4, 3);
    CHECK(small.n_xi() == 2);
    CHECK(small.d == 5 + 2 + 2 + 1 + 8 + 2 + 7);
}

TEST_CASE("transform round-trips") {
    const BlockLayout b = BlockLayout::make(11, 8, 4, 3, 50, 10);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ParameterBlock p = random_block(b, seed);
        const std::vector<double> theta = to_unconstrained(p, b);
        REQUIRE(theta.size() == static_cast<std::size_t>(b.d));
        const ParameterBlock q = to_constrained(theta, b);
        CHECK(q.sigma_g == doctest::Approx(p.sigma_g).epsilon(1e-12));
        CHECK(q.sigma_xi == doctest::Approx(p.sigma_xi).epsilon(1e-12));
        CHECK(q.phi == doctest::Approx(p.phi).epsilon(1e-12));
        CHECK(q.rho == doctest::Approx(p.rho).epsilon(1e-12));
        for (int j = 0; j < b.J; ++j) CHECK(q.eta[j] == p.eta[j]);
        for (int t = 0; t < b.n_xi(); ++t) CHECK(q.xi[t] == doctest::Approx(p.xi[t]));

        // and the flat-value inverse used when re-reading persisted draws
        const std::vector<double> values = constrained_values(theta, b);
        const std::vector<double> back = unconstrained_from_values(values, b);
        for (int i = 0; i < b.d; ++i) CHECK(back[i] == doctest::Approx(theta[i]).epsilon(1e-10));
    }
}

TEST_CASE("constrained_values exposes natural-scale parameters") {
    const BlockLayout b = BlockLayout::make(5, 2, 2, 1, 4, 3);
    std::vector<double> theta(b.d, 0.0);
    const std::vector<double> values = constrained_values(theta, b);
    // log-scales at 0 -> sigma = 1; logits at 0 -> 0.5
    for (int i = 0; i < 5; ++i) CHECK(values[b.d - 7 + i] == doctest::Approx(1.0));
    CHECK(values[b.d - 2] == doctest::Approx(0.5));
    CHECK(values[b.d - 1] == doctest::Approx(0.5));
}

TEST_CASE("boundary values are rejected by to_unconstrained") {
    const BlockLayout b = BlockLayout::make(5, 2, 2, 1, 4, 3);
    ParameterBlock p = random_block(b, 42);
    p.sigma_g = 0.0;
    CHECK_THROWS(to_unconstrained(p, b));
    p = random_block(b, 42);
    p.phi = 1.0;
    CHECK_THROWS(to_unconstrained(p, b));
    p = random_block(b, 42);
    p.rho = 0.0;
    CHECK_THROWS(to_unconstrained(p, b));
}

TEST_CASE("size mismatches are rejected") {
    const BlockLayout b = BlockLayout::make(5, 2, 2, 1, 4, 3);
    ParameterBlock p = random_block(b, 7);
    p.delta.pop_back();
    CHECK_THROWS(to_unconstrained(p, b));
    CHECK_THROWS(to_constrained(std::vector<double>(b.d - 1, 0.0), b));
}

TEST_CASE("default block is the prior center") {
    const ParameterBlock p;
    CHECK(p.sigma_g == 1.0);
    CHECK(p.sigma_eps == 1.0);
    CHECK(p.phi == 0.5);
    CHECK(p.rho == 0.5);
}
