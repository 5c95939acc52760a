#include "claimcar/posterior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "claimcar/kernels.hpp"
#include "claimcar/numeric.hpp"

namespace claimcar {

namespace {

constexpr std::size_t kPartitionSize = 4096;
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kLogHalfNormal = -0.22579135264472744;  // log(sqrt(2/pi))
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t exposure_bits(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;  // exposures are positive, so bit order == value order
}

}  // namespace

ModelInputs build_model_inputs(Dataset data, const SplineConfig& spline, AdjacencyGraph graph,
                               int threads, const SplineBasis* basis_override) {
    ModelInputs in;
    const std::size_t n = data.N();

    // Group key sort: city first so evaluation partitions cover contiguous
    // city ranges.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    auto key_less = [&data](std::uint32_t a, std::uint32_t b) {
        if (data.city[a] != data.city[b]) return data.city[a] < data.city[b];
        if (data.year_index[a] != data.year_index[b])
            return data.year_index[a] < data.year_index[b];
        if (data.brand[a] != data.brand[b]) return data.brand[a] < data.brand[b];
        if (data.category[a] != data.category[b]) return data.category[a] < data.category[b];
        return exposure_bits(data.exposure[a]) < exposure_bits(data.exposure[b]);
    };
    auto key_equal = [&data](std::uint32_t a, std::uint32_t b) {
        return data.city[a] == data.city[b] && data.year_index[a] == data.year_index[b] &&
               data.brand[a] == data.brand[b] && data.category[a] == data.category[b] &&
               data.exposure[a] == data.exposure[b];
    };
    std::sort(order.begin(), order.end(), key_less);

    double logfact = 0.0;
    for (std::size_t i = 0; i < n; ++i) logfact += std::lgamma(data.claims[i] + 1.0);
    in.log_factorial_sum = logfact;

    for (std::size_t s = 0; s < n;) {
        std::size_t e = s + 1;
        double sum_y = data.claims[order[s]];
        while (e < n && key_equal(order[s], order[e])) {
            sum_y += data.claims[order[e]];
            ++e;
        }
        const std::uint32_t i = order[s];
        in.log_exposure.push_back(data.log_exposure[i]);
        in.sum_y.push_back(sum_y);
        in.weight.push_back(static_cast<double>(e - s));
        in.brand.push_back(data.brand[i]);
        in.category.push_back(data.category[i]);
        in.city.push_back(data.city[i]);
        in.year.push_back(data.year_index[i]);
        s = e;
    }

    in.basis = basis_override ? *basis_override
                              : build_basis(data.log_exposure, spline.n_interior_knots, spline.degree);
    in.design = build_design(in.basis, in.log_exposure);
    in.layout = BlockLayout::make(in.basis.L, data.n_brand(), data.n_category(), data.cities.M,
                                  data.cities.J(), data.T());
    in.z = data.cities.covariates;
    if (graph.J != data.cities.J())
        throw std::invalid_argument("adjacency graph size does not match the city table");
    in.graph = std::move(graph);
    in.threads = std::max(1, threads);

    const std::size_t groups = in.log_exposure.size();
    for (std::size_t b = 0; b < groups; b += kPartitionSize) in.partition_bounds.push_back(b);
    in.partition_bounds.push_back(groups);

    in.data = std::move(data);
    return in;
}

Posterior::Posterior(const ModelInputs& inputs)
    : Posterior(std::shared_ptr<const ModelInputs>(std::shared_ptr<const void>(), &inputs)) {}

Posterior::Posterior(std::shared_ptr<const ModelInputs> inputs) : inputs_(std::move(inputs)) {
    const ModelInputs& in = *inputs_;
    const BlockLayout& b = in.layout;
    eta_.resize(in.n_groups());
    lambda_.resize(in.n_groups());
    resid_.resize(in.n_groups());
    u_.resize(b.J);
    r_.resize(b.J);
    s_.resize(b.T);
    q_.resize(b.T);
    suffix_.resize(b.T + 1);
    parts_.resize(in.n_partitions());
    for (std::size_t p = 0; p < parts_.size(); ++p) {
        PartitionAcc& acc = parts_[p];
        acc.dc.resize(b.L);
        acc.dv1.resize(b.n_brand);
        acc.dv2.resize(b.n_category);
        acc.q.resize(b.T);
        const std::size_t a = in.partition_bounds[p];
        const std::size_t e = in.partition_bounds[p + 1];
        acc.city_lo = in.city[a];
        acc.r_local.resize(in.city[e - 1] - acc.city_lo + 1);
    }
}

void Posterior::eval_partition(std::size_t p, std::span<const double> theta) {
    const ModelInputs& in = *inputs_;
    const BlockLayout& b = in.layout;
    const Kernels& ks = active_kernels();
    const std::size_t a = in.partition_bounds[p];
    const std::size_t e = in.partition_bounds[p + 1];
    const std::size_t n = e - a;

    ks.spline_dot(in.log_exposure.data() + a, in.design.weights.data() + a * in.design.width,
                  in.design.first.data() + a, theta.data() + b.c, in.design.width,
                  eta_.data() + a, n);
    ks.gather4_add(eta_.data() + a, theta.data() + b.v1, in.brand.data() + a,
                   theta.data() + b.v2, in.category.data() + a, u_.data(), in.city.data() + a,
                   s_.data(), in.year.data() + a, eta_.data() + a, n);

    PartitionAcc& acc = parts_[p];
    acc.value = ks.poisson_block(eta_.data() + a, in.sum_y.data() + a, in.weight.data() + a,
                                 lambda_.data() + a, resid_.data() + a, n);

    std::fill(acc.dc.begin(), acc.dc.end(), 0.0);
    std::fill(acc.dv1.begin(), acc.dv1.end(), 0.0);
    std::fill(acc.dv2.begin(), acc.dv2.end(), 0.0);
    std::fill(acc.q.begin(), acc.q.end(), 0.0);
    std::fill(acc.r_local.begin(), acc.r_local.end(), 0.0);

    const int width = in.design.width;
    for (std::size_t i = a; i < e; ++i) {
        const double r = resid_[i];
        const double* w = in.design.weights.data() + i * width;
        double* dst = acc.dc.data() + in.design.first[i];
        for (int j = 0; j < width; ++j) dst[j] += r * w[j];
        acc.dv1[in.brand[i]] += r;
        acc.dv2[in.category[i]] += r;
        acc.q[in.year[i]] += r;
        acc.r_local[in.city[i] - acc.city_lo] += r;
    }
}

double Posterior::value_and_grad(std::span<const double> theta, std::span<double> grad) {
    const ModelInputs& in = *inputs_;
    const BlockLayout& b = in.layout;
    const Kernels& ks = active_kernels();
    if (static_cast<int>(theta.size()) != b.d || static_cast<int>(grad.size()) != b.d)
        throw std::invalid_argument("log_posterior: theta/grad length mismatch");

    const double sigma_g = std::exp(theta[b.sigma_g]);
    const double sigma_v1 = std::exp(theta[b.sigma_v1]);
    const double sigma_v2 = std::exp(theta[b.sigma_v2]);
    const double sigma_eps = std::exp(theta[b.sigma_eps]);
    const double sigma_xi = std::exp(theta[b.sigma_xi]);
    const double phi = sigmoid(theta[b.phi]);
    const double rho = sigmoid(theta[b.rho]);
    const double sqrt_1mphi = std::sqrt(1.0 - phi);
    const double sqrt_phi = std::sqrt(phi);

    const double* gamma = theta.data() + b.gamma;
    const double* delta = theta.data() + b.delta;
    const double* eta_sp = theta.data() + b.eta;
    const double* xi_t = theta.data() + b.xi;

    // City effects u_j = z_j . gamma + sigma_eps (sqrt(1-phi) delta_j +
    // sqrt(phi) eta_j), and the year offsets S_t.
    for (int j = 0; j < b.J; ++j) {
        double acc = sigma_eps * (sqrt_1mphi * delta[j] + sqrt_phi * eta_sp[j]);
        const double* zj = in.z.data() + static_cast<std::size_t>(j) * b.M;
        for (int m = 0; m < b.M; ++m) acc += gamma[m] * zj[m];
        u_[j] = acc;
    }
    s_[0] = 0.0;
    for (int t = 1; t < b.T; ++t) s_[t] = s_[t - 1] + sigma_xi * xi_t[t - 1];

    const std::size_t n_parts = in.n_partitions();
    if (in.threads <= 1 || n_parts <= 1) {
        for (std::size_t p = 0; p < n_parts; ++p) eval_partition(p, theta);
    } else {
        const int n_threads = std::min<int>(in.threads, static_cast<int>(n_parts));
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([this, t, n_threads, n_parts, theta] {
                for (std::size_t p = t; p < n_parts; p += n_threads) eval_partition(p, theta);
            });
        for (auto& th : pool) th.join();
    }

    // Combine partition results in fixed order.
    double lik = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(r_.begin(), r_.end(), 0.0);
    std::fill(q_.begin(), q_.end(), 0.0);
    for (std::size_t p = 0; p < n_parts; ++p) {
        const PartitionAcc& acc = parts_[p];
        lik += acc.value;
        for (int l = 0; l < b.L; ++l) grad[b.c + l] += acc.dc[l];
        for (int i = 0; i < b.n_brand; ++i) grad[b.v1 + i] += acc.dv1[i];
        for (int i = 0; i < b.n_category; ++i) grad[b.v2 + i] += acc.dv2[i];
        for (int t = 0; t < b.T; ++t) q_[t] += acc.q[t];
        for (std::size_t j = 0; j < acc.r_local.size(); ++j)
            r_[acc.city_lo + j] += acc.r_local[j];
    }

    // gamma gradient and the delta/eta likelihood couplings.
    const double a_coupling = ks.dot(r_.data(), delta, b.J);   // sum_j R_j delta_j
    const double b_coupling = ks.dot(r_.data(), eta_sp, b.J);  // sum_j R_j eta_j
    for (int j = 0; j < b.J; ++j) {
        const double rj = r_[j];
        const double* zj = in.z.data() + static_cast<std::size_t>(j) * b.M;
        for (int m = 0; m < b.M; ++m) grad[b.gamma + m] += rj * zj[m];
        grad[b.delta + j] = rj * sigma_eps * sqrt_1mphi - delta[j];
        grad[b.eta + j] = rj * sigma_eps * sqrt_phi;
    }
    for (int m = 0; m < b.M; ++m) grad[b.gamma + m] -= gamma[m];

    double car_rho_acc = 0.0;
    const double car_value =
        car_logpdf_grad(in.graph, rho, eta_sp, grad.data() + b.eta, car_rho_acc);

    // Year suffix sums: suffix_[t] = sum_{t' >= t} Q_{t'}.
    suffix_[b.T] = 0.0;
    for (int t = b.T - 1; t >= 0; --t) suffix_[t] = suffix_[t + 1] + q_[t];
    double xi_dot = 0.0;  // sum_s xi~_s * suffix_{s+1}
    for (int s = 0; s < b.n_xi(); ++s) {
        grad[b.xi + s] = sigma_xi * suffix_[s + 1] - xi_t[s];
        xi_dot += xi_t[s] * suffix_[s + 1];
    }

    // Gaussian prior blocks.
    const double c_ss = ks.sumsq(theta.data() + b.c, b.L);
    const double v1_ss = ks.sumsq(theta.data() + b.v1, b.n_brand);
    const double v2_ss = ks.sumsq(theta.data() + b.v2, b.n_category);
    const double gamma_ss = ks.sumsq(gamma, b.M);
    const double delta_ss = ks.sumsq(delta, b.J);
    const double xi_ss = ks.sumsq(xi_t, b.n_xi());

    const double inv_g2 = 1.0 / (sigma_g * sigma_g);
    const double inv_v12 = 1.0 / (sigma_v1 * sigma_v1);
    const double inv_v22 = 1.0 / (sigma_v2 * sigma_v2);
    for (int l = 0; l < b.L; ++l) grad[b.c + l] -= theta[b.c + l] * inv_g2;
    for (int i = 0; i < b.n_brand; ++i) grad[b.v1 + i] -= theta[b.v1 + i] * inv_v12;
    for (int i = 0; i < b.n_category; ++i) grad[b.v2 + i] -= theta[b.v2 + i] * inv_v22;

    grad[b.sigma_g] = -b.L + c_ss * inv_g2 - sigma_g * sigma_g + 1.0;
    grad[b.sigma_v1] = -b.n_brand + v1_ss * inv_v12 - sigma_v1 * sigma_v1 + 1.0;
    grad[b.sigma_v2] = -b.n_category + v2_ss * inv_v22 - sigma_v2 * sigma_v2 + 1.0;
    grad[b.sigma_eps] =
        sigma_eps * (sqrt_1mphi * a_coupling + sqrt_phi * b_coupling) - sigma_eps * sigma_eps + 1.0;
    grad[b.sigma_xi] = sigma_xi * xi_dot - sigma_xi * sigma_xi + 1.0;
    grad[b.phi] = 0.5 * sigma_eps *
                      (-a_coupling * phi * sqrt_1mphi + b_coupling * (1.0 - phi) * sqrt_phi) +
                  (1.0 - 2.0 * phi);
    grad[b.rho] = car_rho_acc * rho * (1.0 - rho) + 2.0 * (1.0 - 2.0 * rho);

    double value = lik - in.log_factorial_sum + car_value;
    value += -b.L * theta[b.sigma_g] - 0.5 * c_ss * inv_g2 - 0.5 * b.L * kLog2Pi;
    value += -b.n_brand * theta[b.sigma_v1] - 0.5 * v1_ss * inv_v12 - 0.5 * b.n_brand * kLog2Pi;
    value +=
        -b.n_category * theta[b.sigma_v2] - 0.5 * v2_ss * inv_v22 - 0.5 * b.n_category * kLog2Pi;
    value += -0.5 * gamma_ss - 0.5 * b.M * kLog2Pi;
    value += -0.5 * delta_ss - 0.5 * b.J * kLog2Pi;
    value += -0.5 * xi_ss - 0.5 * b.n_xi() * kLog2Pi;
    value += 5.0 * kLogHalfNormal -
             0.5 * (sigma_g * sigma_g + sigma_v1 * sigma_v1 + sigma_v2 * sigma_v2 +
                    sigma_eps * sigma_eps + sigma_xi * sigma_xi);
    value += theta[b.sigma_g] + theta[b.sigma_v1] + theta[b.sigma_v2] + theta[b.sigma_eps] +
             theta[b.sigma_xi];
    value += -softplus(theta[b.phi]) - softplus(-theta[b.phi]);
    value += std::log(6.0) - 2.0 * (softplus(theta[b.rho]) + softplus(-theta[b.rho]));

    if (!std::isfinite(value)) return kNegInf;
    return value;
}

double Posterior::value(std::span<const double> theta) {
    scratch_grad_.resize(inputs_->layout.d);
    return value_and_grad(theta, scratch_grad_);
}

std::vector<double> predict_rates(const ParameterBlock& p, const ModelInputs& inputs) {
    const Dataset& data = inputs.data;
    const BlockLayout& b = inputs.layout;
    if (static_cast<int>(p.c.size()) != b.L)
        throw std::invalid_argument("predict_rates: parameter block does not match layout");

    std::vector<double> u(b.J);
    const double sqrt_1mphi = std::sqrt(1.0 - p.phi);
    const double sqrt_phi = std::sqrt(p.phi);
    for (int j = 0; j < b.J; ++j) {
        double acc = p.sigma_eps * (sqrt_1mphi * p.delta[j] + sqrt_phi * p.eta[j]);
        const double* zj = inputs.z.data() + static_cast<std::size_t>(j) * b.M;
        for (int m = 0; m < b.M; ++m) acc += p.gamma[m] * zj[m];
        u[j] = acc;
    }
    std::vector<double> s(b.T, 0.0);
    for (int t = 1; t < b.T; ++t) s[t] = s[t - 1] + p.xi[t - 1];

    std::vector<double> lambda(data.N());
    std::array<double, SplineBasis::kMaxDegree + 1> w{};
    for (std::size_t i = 0; i < data.N(); ++i) {
        const int first = inputs.basis.basis_window(data.log_exposure[i], w.data());
        double lin = data.log_exposure[i];
        for (int j = 0; j <= inputs.basis.degree; ++j) lin += w[j] * p.c[first + j];
        lin += p.v1[data.brand[i]] + p.v2[data.category[i]] + u[data.city[i]] +
               s[data.year_index[i]];
        const double lam = std::exp(lin);
        if (!std::isfinite(lam))
            throw std::runtime_error("predict_rates: rate overflow at record " +
                                     std::to_string(i));
        lambda[i] = lam;
    }
    return lambda;
}

std::string model_manifest_json(const ModelInputs& inputs) {
    const BlockLayout& b = inputs.layout;
    nlohmann::ordered_json j;
    j["d"] = b.d;
    j["cardinalities"] = {{"L", b.L},       {"n_brand", b.n_brand}, {"n_category", b.n_category},
                          {"M", b.M},       {"J", b.J},             {"T", b.T}};
    j["layout"] = {{"c", b.c},
                   {"v1", b.v1},
                   {"v2", b.v2},
                   {"gamma", b.gamma},
                   {"delta", b.delta},
                   {"eta", b.eta},
                   {"xi", b.xi},
                   {"sigma_g", b.sigma_g},
                   {"sigma_v1", b.sigma_v1},
                   {"sigma_v2", b.sigma_v2},
                   {"sigma_eps", b.sigma_eps},
                   {"sigma_xi", b.sigma_xi},
                   {"phi", b.phi},
                   {"rho", b.rho}};
    j["basis"] = {{"degree", inputs.basis.degree},
                  {"L", inputs.basis.L},
                  {"knots", inputs.basis.knots}};
    j["graph"] = {{"J", inputs.graph.J},
                  {"k", inputs.graph.k},
                  {"n_edges", inputs.graph.n_edges()},
                  {"content_hash", inputs.graph.content_hash}};
    j["records"] = {{"n_records", inputs.n_records()},
                    {"n_groups", inputs.n_groups()},
                    {"year_floor", inputs.data.year_floor},
                    {"year_max", inputs.data.year_max}};
    j["priors"] = {{"c", "normal(0, sigma_g)"},
                   {"v1", "normal(0, sigma_v1)"},
                   {"v2", "normal(0, sigma_v2)"},
                   {"gamma", "normal(0, 1)"},
                   {"delta", "normal(0, 1)"},
                   {"eta", "proper_car(rho)"},
                   {"xi", "normal(0, sigma_xi), non-centered"},
                   {"scales", "half_normal(1)"},
                   {"phi", "beta(1, 1)"},
                   {"rho", "beta(2, 2)"}};
    return j.dump(2) + "\n";
}

}  // namespace claimcar
