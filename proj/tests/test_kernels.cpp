#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "claimcar/kernels.hpp"

using namespace claimcar;

namespace {

double rel_diff(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
    return std::fabs(a - b) / scale;
}

struct KernelGuard {
    ~KernelGuard() {
        for (const auto& name : available_kernels()) {
            select_kernels(name);  // last one wins: the preferred backend
        }
    }
};

}  // namespace

TEST_CASE("backend registry") {
    const auto names = available_kernels();
    REQUIRE(!names.empty());
    CHECK(names.front() == "scalar");
    CHECK(select_kernels("scalar"));
    CHECK(active_kernels().name == std::string("scalar"));
    CHECK_FALSE(select_kernels("sse9"));
    KernelGuard restore;
}

TEST_CASE("vexp matches std::exp and handles edge cases") {
    KernelGuard restore;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-700.0, 700.0);
    std::vector<double> x(1003);
    for (auto& v : x) v = u(rng);
    x[0] = 0.0;
    x[1] = 710.0;                                       // overflow
    x[2] = -746.0;                                      // underflow
    x[3] = std::numeric_limits<double>::quiet_NaN();
    x[4] = std::numeric_limits<double>::infinity();
    x[5] = -std::numeric_limits<double>::infinity();

    for (const auto& name : available_kernels()) {
        REQUIRE(select_kernels(name));
        std::vector<double> out(x.size(), -1.0);
        active_kernels().vexp(x.data(), out.data(), x.size());
        CHECK(out[0] == 1.0);
        CHECK(std::isinf(out[1]));
        CHECK(out[2] == 0.0);
        CHECK(std::isnan(out[3]));
        CHECK(std::isinf(out[4]));
        CHECK(out[5] == 0.0);
        for (std::size_t i = 6; i < x.size(); ++i)
            CHECK(rel_diff(out[i], std::exp(x[i])) <= 5e-14);
    }
}

TEST_CASE("poisson_block agrees with a direct loop across backends") {
    KernelGuard restore;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> counts(0, 40);
    const std::size_t n = 1001;  // odd: exercises the SIMD tail
    std::vector<double> eta(n), sum_y(n), weight(n);
    for (std::size_t i = 0; i < n; ++i) {
        eta[i] = 0.5 * z(rng);
        sum_y[i] = counts(rng);
        weight[i] = 1.0 + std::fabs(z(rng));
    }

    double want = 0.0;
    std::vector<double> want_lambda(n), want_resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        want_lambda[i] = std::exp(eta[i]);
        want_resid[i] = sum_y[i] - weight[i] * want_lambda[i];
        want += sum_y[i] * eta[i] - weight[i] * want_lambda[i];
    }

    for (const auto& name : available_kernels()) {
        REQUIRE(select_kernels(name));
        std::vector<double> lambda(n), resid(n);
        const double got =
            active_kernels().poisson_block(eta.data(), sum_y.data(), weight.data(),
                                           lambda.data(), resid.data(), n);
        CHECK(rel_diff(got, want) <= 1e-12);
        for (std::size_t i = 0; i < n; i += 97) {
            CHECK(rel_diff(lambda[i], want_lambda[i]) <= 5e-14);
            CHECK(rel_diff(resid[i], want_resid[i]) <= 5e-13);
        }
    }
}

TEST_CASE("gather4_add is bitwise identical across backends") {
    KernelGuard restore;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    const std::size_t n = 517;
    std::vector<double> base(n), a(7), b(5), c(9), d(3);
    std::vector<std::int32_t> ia(n), ib(n), ic(n), id(n);
    for (auto& v : base) v = z(rng);
    for (auto& v : a) v = z(rng);
    for (auto& v : b) v = z(rng);
    for (auto& v : c) v = z(rng);
    for (auto& v : d) v = z(rng);
    for (std::size_t i = 0; i < n; ++i) {
        ia[i] = static_cast<std::int32_t>(rng() % a.size());
        ib[i] = static_cast<std::int32_t>(rng() % b.size());
        ic[i] = static_cast<std::int32_t>(rng() % c.size());
        id[i] = static_cast<std::int32_t>(rng() % d.size());
    }

    REQUIRE(select_kernels("scalar"));
    std::vector<double> want(n);
    active_kernels().gather4_add(base.data(), a.data(), ia.data(), b.data(), ib.data(), c.data(),
                                 ic.data(), d.data(), id.data(), want.data(), n);
    for (const auto& name : available_kernels()) {
        REQUIRE(select_kernels(name));
        std::vector<double> out(n);
        active_kernels().gather4_add(base.data(), a.data(), ia.data(), b.data(), ib.data(),
                                     c.data(), ic.data(), d.data(), id.data(), out.data(), n);
        CHECK(out == want);
    }
}

TEST_CASE("spline_dot, dot, sumsq agree across backends") {
    KernelGuard restore;
    std::mt19937_64 rng(14);
    std::normal_distribution<double> z;
    const std::size_t n = 331;
    const int width = 4;
    const int L = 11;
    std::vector<double> base(n), weights(n * width), coeff(L), x(n), y(n);
    std::vector<std::int32_t> span(n);
    for (auto& v : base) v = z(rng);
    for (auto& v : weights) v = z(rng);
    for (auto& v : coeff) v = z(rng);
    for (auto& v : x) v = z(rng);
    for (auto& v : y) v = z(rng);
    for (auto& s : span) s = static_cast<std::int32_t>(rng() % (L - width + 1));

    REQUIRE(select_kernels("scalar"));
    std::vector<double> want(n);
    active_kernels().spline_dot(base.data(), weights.data(), span.data(), coeff.data(), width,
                                want.data(), n);
    const double want_dot = active_kernels().dot(x.data(), y.data(), n);
    const double want_sumsq = active_kernels().sumsq(x.data(), n);

    for (const auto& name : available_kernels()) {
        REQUIRE(select_kernels(name));
        std::vector<double> out(n);
        active_kernels().spline_dot(base.data(), weights.data(), span.data(), coeff.data(),
                                    width, out.data(), n);
        for (std::size_t i = 0; i < n; i += 41) CHECK(rel_diff(out[i], want[i]) <= 1e-13);
        CHECK(rel_diff(active_kernels().dot(x.data(), y.data(), n), want_dot) <= 1e-12);
        CHECK(rel_diff(active_kernels().sumsq(x.data(), n), want_sumsq) <= 1e-12);
    }
}
