#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace claimcar {

// Clamped B-spline basis: boundary knots at full multiplicity (degree+1),
// interior knots at evenly spaced percentiles of the training inputs.
// Evaluation clamps x to [x_min, x_max]; no extrapolation.
struct SplineBasis {
    int degree = 3;
    std::vector<double> knots;  // nondecreasing, size = L + degree + 1
    int L = 0;                  // number of basis functions
    double x_min = 0.0;
    double x_max = 0.0;

    static constexpr int kMaxDegree = 15;

    // Index of the knot span containing x (after clamping).
    int find_span(double x) const;

    // Writes the degree+1 nonzero basis values into `window` and returns the
    // index of the first active basis function (= span - degree).
    int basis_window(double x, double* window) const;

    // Dense L-vector of basis values (zero outside the active window).
    std::vector<double> evaluate(double x) const;
};

SplineBasis build_basis(std::span<const double> inputs, int n_interior_knots, int degree);

// Row-sparse design: each row stores the first active basis index and the
// degree+1 window weights, so design * coeff costs O(N * (degree+1)).
struct SplineDesign {
    int width = 0;  // degree + 1
    int L = 0;
    std::vector<std::int32_t> first;  // first active basis index per row
    std::vector<double> weights;      // row-major, n_rows x width

    std::size_t rows() const { return first.size(); }

    // out[i] = base[i] + row_i . coeff  (uses the active kernel backend)
    void apply(const double* coeff, const double* base, double* out) const;

    // dcoeff[first[i] + w] += r[i] * weights[i*width + w]
    void accumulate_grad(const double* r, double* dcoeff) const;

    // Dense row (mostly for tests).
    std::vector<double> row(std::size_t i) const;
};

SplineDesign build_design(const SplineBasis& basis, std::span<const double> xs);

}  // namespace claimcar
