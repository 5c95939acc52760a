#include "claimcar/kernels.hpp"

#include <cmath>

namespace claimcar {
namespace {

void vexp_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double poisson_block_scalar(const double* eta, const double* sum_y, const double* weight,
                            double* lambda, double* resid, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lam = std::exp(eta[i]);
        lambda[i] = lam;
        const double wlam = weight[i] * lam;
        resid[i] = sum_y[i] - wlam;
        acc += sum_y[i] * eta[i] - wlam;
    }
    return acc;
}

void gather4_add_scalar(const double* base, const double* a, const std::int32_t* ia,
                        const double* b, const std::int32_t* ib, const double* c,
                        const std::int32_t* ic, const double* d, const std::int32_t* id,
                        double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = base[i] + a[ia[i]] + b[ib[i]] + c[ic[i]] + d[id[i]];
}

void spline_dot_scalar(const double* base, const double* weights, const std::int32_t* span,
                       const double* coeff, int width, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* w = weights + static_cast<std::size_t>(i) * width;
        const double* c = coeff + span[i];
        double acc = base[i];
        for (int j = 0; j < width; ++j) acc += w[j] * c[j];
        out[i] = acc;
    }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sumsq_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels table{
        "scalar",          vexp_scalar, poisson_block_scalar, gather4_add_scalar,
        spline_dot_scalar, dot_scalar,  sumsq_scalar,
    };
    return table;
}

}  // namespace claimcar
