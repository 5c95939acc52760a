#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "claimcar/kernels.hpp"

namespace claimcar {
namespace {

// exp stays on libm per lane (accurate and simple); the block kernels win
// their time back on the fused residual/accumulator arithmetic.
void vexp_neon(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double poisson_block_neon(const double* eta, const double* sum_y, const double* weight,
                          double* lambda, double* resid, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t e = vld1q_f64(eta + i);
        const float64x2_t yy = vld1q_f64(sum_y + i);
        const float64x2_t lam = {std::exp(eta[i]), std::exp(eta[i + 1])};
        vst1q_f64(lambda + i, lam);
        const float64x2_t wlam = vmulq_f64(vld1q_f64(weight + i), lam);
        vst1q_f64(resid + i, vsubq_f64(yy, wlam));
        acc = vfmaq_f64(vsubq_f64(acc, wlam), yy, e);
    }
    double total = vaddvq_f64(acc);
    for (; i < n; ++i) {
        const double lam = std::exp(eta[i]);
        lambda[i] = lam;
        const double wlam = weight[i] * lam;
        resid[i] = sum_y[i] - wlam;
        total += sum_y[i] * eta[i] - wlam;
    }
    return total;
}

void gather4_add_neon(const double* base, const double* a, const std::int32_t* ia,
                      const double* b, const std::int32_t* ib, const double* c,
                      const std::int32_t* ic, const double* d, const std::int32_t* id,
                      double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = base[i] + a[ia[i]] + b[ib[i]] + c[ic[i]] + d[id[i]];
}

void spline_dot_neon(const double* base, const double* weights, const std::int32_t* span,
                     const double* coeff, int width, double* out, std::size_t n) {
    if (width != 4) {
        scalar_kernels().spline_dot(base, weights, span, coeff, width, out, n);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double* w = weights + 4 * i;
        const double* c = coeff + span[i];
        float64x2_t s = vmulq_f64(vld1q_f64(w), vld1q_f64(c));
        s = vfmaq_f64(s, vld1q_f64(w + 2), vld1q_f64(c + 2));
        out[i] = base[i] + vaddvq_f64(s);
    }
}

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    double total = vaddvq_f64(acc);
    for (; i < n; ++i) total += x[i] * y[i];
    return total;
}

double sumsq_neon(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t v = vld1q_f64(x + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double total = vaddvq_f64(acc);
    for (; i < n; ++i) total += x[i] * x[i];
    return total;
}

}  // namespace

const Kernels* neon_kernels() {
    static const Kernels table{
        "neon",          vexp_neon, poisson_block_neon, gather4_add_neon,
        spline_dot_neon, dot_neon,  sumsq_neon,
    };
    return &table;
}

}  // namespace claimcar

#endif  // aarch64
