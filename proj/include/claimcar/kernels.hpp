#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace claimcar {

// Hot inner loops of the likelihood evaluation, provided as interchangeable
// backends (scalar reference plus SIMD variants).  All functions operate on
// plain arrays; no backend owns memory.  Backends may differ from the scalar
// reference by small rounding (different summation order, polynomial exp);
// equivalence is tested with tight tolerances, and per-run reproducibility
// is guaranteed by pinning the backend (manifest records the name).
struct Kernels {
    const char* name;

    // out[i] = exp(x[i]); overflow -> inf, underflow -> 0, NaN propagates.
    void (*vexp)(const double* x, double* out, std::size_t n);

    // Weighted Poisson core over (possibly aggregated) records:
    // lambda[i] = exp(eta[i]); resid[i] = sum_y[i] - weight[i]*lambda[i];
    // returns sum_i (sum_y[i]*eta[i] - weight[i]*lambda[i]).
    // Plain records use weight = 1, sum_y = y.
    double (*poisson_block)(const double* eta, const double* sum_y, const double* weight,
                            double* lambda, double* resid, std::size_t n);

    // out[i] = base[i] + a[ia[i]] + b[ib[i]] + c[ic[i]] + d[id[i]]
    void (*gather4_add)(const double* base, const double* a, const std::int32_t* ia,
                        const double* b, const std::int32_t* ib, const double* c,
                        const std::int32_t* ic, const double* d, const std::int32_t* id,
                        double* out, std::size_t n);

    // out[i] = base[i] + sum_{w<width} weights[i*width + w] * coeff[span[i] + w]
    void (*spline_dot)(const double* base, const double* weights, const std::int32_t* span,
                       const double* coeff, int width, double* out, std::size_t n);

    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sumsq)(const double* x, std::size_t n);
};

const Kernels& scalar_kernels();

// Currently selected backend.  Default: the best one this CPU supports,
// overridable with the CLAIMCAR_KERNELS environment variable (scalar | avx2 |
// neon; unknown or unsupported value -> error at first use).
const Kernels& active_kernels();

// Programmatic selection (used by tests); returns false if `name` is not
// available on this machine.
bool select_kernels(std::string_view name);

std::vector<std::string> available_kernels();

}  // namespace claimcar
