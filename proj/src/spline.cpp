#include "claimcar/spline.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "claimcar/kernels.hpp"
#include "claimcar/numeric.hpp"

namespace claimcar {

int SplineBasis::find_span(double x) const {
    const int n = L - 1;  // highest basis index
    if (x >= knots[static_cast<std::size_t>(n) + 1]) return n;
    if (x <= knots[degree]) return degree;
    int lo = degree, hi = n + 1;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (x < knots[mid])
            hi = mid;
        else
            lo = mid;
    }
    return lo;
}

int SplineBasis::basis_window(double x, double* window) const {
    x = std::clamp(x, x_min, x_max);
    const int span = find_span(x);
    std::array<double, kMaxDegree + 1> left{}, right{};
    window[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = window[r] / (right[r + 1] + left[j - r]);
            window[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        window[j] = saved;
    }
    return span - degree;
}

std::vector<double> SplineBasis::evaluate(double x) const {
    std::vector<double> out(L, 0.0);
    std::array<double, kMaxDegree + 1> w{};
    const int first = basis_window(x, w.data());
    for (int r = 0; r <= degree; ++r) out[first + r] = w[r];
    return out;
}

SplineBasis build_basis(std::span<const double> inputs, int n_interior_knots, int degree) {
    if (inputs.empty()) throw std::invalid_argument("build_basis: empty input");
    if (n_interior_knots < 1) throw std::invalid_argument("build_basis: n_interior_knots < 1");
    if (degree < 1) throw std::invalid_argument("build_basis: degree < 1");
    if (degree > SplineBasis::kMaxDegree)
        throw std::invalid_argument("build_basis: degree too large");

    std::vector<double> sorted(inputs.begin(), inputs.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (!(hi > lo)) throw std::invalid_argument("build_basis: all inputs identical");

    std::vector<double> interior;
    for (int i = 1; i <= n_interior_knots; ++i) {
        const double q = static_cast<double>(i) / (n_interior_knots + 1);
        const double v = quantile_sorted(sorted, q);
        // Collapse duplicate percentile values and values falling on the
        // boundary; each raises a knot's multiplicity past what a valid
        // clamped basis allows.
        if (v <= lo || v >= hi) continue;
        if (!interior.empty() && v == interior.back()) continue;
        interior.push_back(v);
    }

    SplineBasis basis;
    basis.degree = degree;
    basis.x_min = lo;
    basis.x_max = hi;
    basis.knots.reserve(interior.size() + 2 * (degree + 1));
    for (int i = 0; i <= degree; ++i) basis.knots.push_back(lo);
    for (double v : interior) basis.knots.push_back(v);
    for (int i = 0; i <= degree; ++i) basis.knots.push_back(hi);
    basis.L = static_cast<int>(basis.knots.size()) - degree - 1;
    return basis;
}

void SplineDesign::apply(const double* coeff, const double* base, double* out) const {
    active_kernels().spline_dot(base, weights.data(), first.data(), coeff, width, out, rows());
}

void SplineDesign::accumulate_grad(const double* r, double* dcoeff) const {
    const std::size_t n = rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* w = weights.data() + i * width;
        double* dst = dcoeff + first[i];
        const double ri = r[i];
        for (int j = 0; j < width; ++j) dst[j] += ri * w[j];
    }
}

std::vector<double> SplineDesign::row(std::size_t i) const {
    std::vector<double> out(L, 0.0);
    for (int j = 0; j < width; ++j) out[first[i] + j] = weights[i * width + j];
    return out;
}

SplineDesign build_design(const SplineBasis& basis, std::span<const double> xs) {
    SplineDesign design;
    design.width = basis.degree + 1;
    design.L = basis.L;
    design.first.resize(xs.size());
    design.weights.resize(xs.size() * design.width);
    for (std::size_t i = 0; i < xs.size(); ++i)
        design.first[i] =
            static_cast<std::int32_t>(basis.basis_window(xs[i], design.weights.data() + i * design.width));
    return design;
}

}  // namespace claimcar
