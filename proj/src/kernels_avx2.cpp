#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "claimcar/kernels.hpp"

namespace claimcar {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline __m256d pow2i(__m128i e) {
    __m256i e64 = _mm256_cvtepi32_epi64(e);
    e64 = _mm256_add_epi64(e64, _mm256_set1_epi64x(1023));
    e64 = _mm256_slli_epi64(e64, 52);
    return _mm256_castsi256_pd(e64);
}

// exp(x) = 2^n * exp(r), n = round(x/ln2), with Cody-Waite splitting of ln2
// and a degree-13 Taylor polynomial on |r| <= ln2/2.  The 2^n factor is
// applied as two half-powers so exponents near the overflow/denormal limits
// stay representable.
inline __m256d exp4(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d hi_cut = _mm256_set1_pd(709.782712893383996);
    const __m256d lo_cut = _mm256_set1_pd(-745.2);

    const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    const __m256d hi_mask = _mm256_cmp_pd(x, hi_cut, _CMP_GT_OQ);
    const __m256d lo_mask = _mm256_cmp_pd(x, lo_cut, _CMP_LT_OQ);

    const __m256d xc = _mm256_max_pd(_mm256_min_pd(x, hi_cut), lo_cut);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    __m256d p = _mm256_set1_pd(1.6059043836821613e-10);            // 1/13!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.08767569878681e-9));  // 1/12!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.505210838544172e-8));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-7));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.755731922398589e-6));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.48015873015873e-5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.984126984126984e-4));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-3));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.333333333333333e-3));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664e-2));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666666e-1));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    const __m128i k = _mm256_cvtpd_epi32(n);
    const __m128i k1 = _mm_srai_epi32(k, 1);
    const __m128i k2 = _mm_sub_epi32(k, k1);
    p = _mm256_mul_pd(_mm256_mul_pd(p, pow2i(k1)), pow2i(k2));

    p = _mm256_blendv_pd(p, _mm256_set1_pd(std::numeric_limits<double>::infinity()), hi_mask);
    p = _mm256_blendv_pd(p, _mm256_setzero_pd(), lo_mask);
    p = _mm256_blendv_pd(p, x, nan_mask);
    return p;
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

double poisson_block_avx2(const double* eta, const double* sum_y, const double* weight,
                          double* lambda, double* resid, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d e = _mm256_loadu_pd(eta + i);
        const __m256d yy = _mm256_loadu_pd(sum_y + i);
        const __m256d w = _mm256_loadu_pd(weight + i);
        const __m256d lam = exp4(e);
        _mm256_storeu_pd(lambda + i, lam);
        const __m256d wlam = _mm256_mul_pd(w, lam);
        _mm256_storeu_pd(resid + i, _mm256_sub_pd(yy, wlam));
        acc = _mm256_fmadd_pd(yy, e, _mm256_sub_pd(acc, wlam));
    }
    double total = hsum(acc);
    for (; i < n; ++i) {
        const double lam = std::exp(eta[i]);
        lambda[i] = lam;
        const double wlam = weight[i] * lam;
        resid[i] = sum_y[i] - wlam;
        total += sum_y[i] * eta[i] - wlam;
    }
    return total;
}

void gather4_add_avx2(const double* base, const double* a, const std::int32_t* ia,
                      const double* b, const std::int32_t* ib, const double* c,
                      const std::int32_t* ic, const double* d, const std::int32_t* id,
                      double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d s = _mm256_loadu_pd(base + i);
        s = _mm256_add_pd(
            s, _mm256_i32gather_pd(a, _mm_loadu_si128(reinterpret_cast<const __m128i*>(ia + i)),
                                   8));
        s = _mm256_add_pd(
            s, _mm256_i32gather_pd(b, _mm_loadu_si128(reinterpret_cast<const __m128i*>(ib + i)),
                                   8));
        s = _mm256_add_pd(
            s, _mm256_i32gather_pd(c, _mm_loadu_si128(reinterpret_cast<const __m128i*>(ic + i)),
                                   8));
        s = _mm256_add_pd(
            s, _mm256_i32gather_pd(d, _mm_loadu_si128(reinterpret_cast<const __m128i*>(id + i)),
                                   8));
        _mm256_storeu_pd(out + i, s);
    }
    for (; i < n; ++i) out[i] = base[i] + a[ia[i]] + b[ib[i]] + c[ic[i]] + d[id[i]];
}

void spline_dot_avx2(const double* base, const double* weights, const std::int32_t* span,
                     const double* coeff, int width, double* out, std::size_t n) {
    if (width != 4) {
        scalar_kernels().spline_dot(base, weights, span, coeff, width, out, n);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const __m256d w = _mm256_loadu_pd(weights + 4 * i);
        const __m256d c = _mm256_loadu_pd(coeff + span[i]);
        out[i] = base[i] + hsum(_mm256_mul_pd(w, c));
    }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double total = hsum(acc);
    for (; i < n; ++i) total += x[i] * y[i];
    return total;
}

double sumsq_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double total = hsum(acc);
    for (; i < n; ++i) total += x[i] * x[i];
    return total;
}

}  // namespace

const Kernels* avx2_kernels() {
    static const Kernels table{
        "avx2",          vexp_avx2, poisson_block_avx2, gather4_add_avx2,
        spline_dot_avx2, dot_avx2,  sumsq_avx2,
    };
    return &table;
}

}  // namespace claimcar

#endif  // x86_64
