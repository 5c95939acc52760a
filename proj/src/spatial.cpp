#include "claimcar/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <json.hpp>

namespace claimcar {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("spatial: " + what); }

}  // namespace

void AdjacencyGraph::finalize_from_edges() {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (const auto& [a, b] : edges)
        if (a < 0 || b < 0 || a >= J || b >= J || a >= b) fail("edge endpoints out of order");

    std::vector<std::int32_t> counts(J, 0);
    for (const auto& [a, b] : edges) {
        ++counts[a];
        ++counts[b];
    }
    row_ptr.assign(J + 1, 0);
    for (int j = 0; j < J; ++j) row_ptr[j + 1] = row_ptr[j] + counts[j];
    col.resize(row_ptr[J]);
    std::vector<std::int32_t> cursor(row_ptr.begin(), row_ptr.end() - 1);
    for (const auto& [a, b] : edges) {
        col[cursor[a]++] = b;
        col[cursor[b]++] = a;
    }
    degrees.assign(counts.begin(), counts.end());
}

double haversine_angle(double lat1, double lon1, double lat2, double lon2) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double phi1 = lat1 * deg, phi2 = lat2 * deg;
    const double dphi = (lat2 - lat1) * deg;
    const double dlam = (lon2 - lon1) * deg;
    const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlam / 2.0);
    const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

AdjacencyGraph build_knn_graph(std::span<const double> lat, std::span<const double> lon, int k) {
    const int J = static_cast<int>(lat.size());
    if (lon.size() != lat.size()) fail("lat/lon length mismatch");
    if (k < 1) fail("k must be >= 1");
    if (J <= k) fail("need more cities than neighbors (J > k)");

    AdjacencyGraph graph;
    graph.J = J;
    graph.k = k;
    graph.edges.reserve(static_cast<std::size_t>(J) * k);

    bool warned_duplicates = false;
    std::vector<std::pair<double, std::int32_t>> dist(J);
    for (int i = 0; i < J; ++i) {
        for (int j = 0; j < J; ++j)
            dist[j] = {haversine_angle(lat[i], lon[i], lat[j], lon[j]), j};
        dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int m = 0; m < k; ++m) {
            const auto [d, j] = dist[m];
            if (d == 0.0 && !warned_duplicates) {
                std::fprintf(stderr,
                             "warning: duplicate coordinates (cities %d and %d); "
                             "ties broken by index\n",
                             i, j);
                warned_duplicates = true;
            }
            graph.edges.emplace_back(std::min(i, static_cast<int>(j)),
                                     std::max(i, static_cast<int>(j)));
        }
    }
    graph.finalize_from_edges();

    // Eigenvalues of D^{-1/2} W D^{-1/2}; one-time dense solve.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(J, J);
    for (const auto& [p, q] : graph.edges) {
        const double w = 1.0 / std::sqrt(graph.degrees[p] * graph.degrees[q]);
        a(p, q) = w;
        a(q, p) = w;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) fail("eigenvalue computation failed");
    graph.car_eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + J);
    graph.content_hash = graph_content_hash(lat, lon, k);
    return graph;
}

AdjacencyGraph ring_graph(int J) {
    if (J < 3) fail("ring graph needs J >= 3");
    AdjacencyGraph graph;
    graph.J = J;
    graph.edges.reserve(J);
    for (int i = 0; i + 1 < J; ++i) graph.edges.emplace_back(i, i + 1);
    graph.edges.emplace_back(0, J - 1);
    graph.finalize_from_edges();
    graph.car_eigenvalues.resize(J);
    for (int m = 0; m < J; ++m) graph.car_eigenvalues[m] = std::cos(kTwoPi * m / J);
    return graph;
}

namespace {

// Shared by value-only and fused paths. Quadratic form over unique edges:
// eta' (D - rho W) eta = sum_j D_jj eta_j^2 - 2 rho sum_{i<j in E} eta_i eta_j.
double car_core(const AdjacencyGraph& g, double rho, const double* eta, double* grad_eta,
                double* grad_rho) {
    const int J = g.J;
    if (J <= 0 || g.car_eigenvalues.size() != static_cast<std::size_t>(J))
        fail("graph not finalized");
    if (!(rho > 0.0 && rho < 1.0)) fail("rho must lie in (0,1)");

    double logdet = 0.0;
    double eig_term = 0.0;  // sum_k lambda_k / (1 - rho lambda_k)
    for (int j = 0; j < J; ++j) logdet += std::log(g.degrees[j]);
    for (double lam : g.car_eigenvalues) {
        const double m = 1.0 - rho * lam;
        if (m <= 0.0) fail("precision not positive definite at this rho");
        logdet += std::log(m);
        eig_term += lam / m;
    }

    double quad_diag = 0.0;
    for (int j = 0; j < J; ++j) quad_diag += g.degrees[j] * eta[j] * eta[j];
    double cross = 0.0;
    for (const auto& [p, q] : g.edges) cross += eta[p] * eta[q];
    const double eta_w_eta = 2.0 * cross;
    const double quad = quad_diag - rho * eta_w_eta;

    if (grad_eta) {
        for (int j = 0; j < J; ++j) {
            double nb = 0.0;
            for (std::int32_t t = g.row_ptr[j]; t < g.row_ptr[j + 1]; ++t) nb += eta[g.col[t]];
            grad_eta[j] += rho * nb - g.degrees[j] * eta[j];
        }
    }
    if (grad_rho) *grad_rho += -0.5 * eig_term + 0.5 * eta_w_eta;

    return -0.5 * J * std::log(kTwoPi) + 0.5 * logdet - 0.5 * quad;
}

}  // namespace

double car_logpdf(const AdjacencyGraph& graph, double rho, std::span<const double> eta) {
    if (static_cast<int>(eta.size()) != graph.J) fail("eta length != J");
    return car_core(graph, rho, eta.data(), nullptr, nullptr);
}

CarGrad car_grad(const AdjacencyGraph& graph, double rho, std::span<const double> eta) {
    if (static_cast<int>(eta.size()) != graph.J) fail("eta length != J");
    CarGrad out;
    out.grad_eta.assign(graph.J, 0.0);
    car_core(graph, rho, eta.data(), out.grad_eta.data(), &out.grad_rho);
    return out;
}

double car_logpdf_grad(const AdjacencyGraph& graph, double rho, const double* eta,
                       double* grad_eta, double& grad_rho) {
    return car_core(graph, rho, eta, grad_eta, &grad_rho);
}

std::vector<double> sample_car_prior(const AdjacencyGraph& graph, double rho, Rng& rng) {
    const int J = graph.J;
    using SpMat = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(graph.edges.size() * 2 + J);
    for (int j = 0; j < J; ++j) trip.emplace_back(j, j, graph.degrees[j]);
    for (const auto& [p, q] : graph.edges) {
        trip.emplace_back(p, q, -rho);
        trip.emplace_back(q, p, -rho);
    }
    SpMat precision(J, J);
    precision.setFromTriplets(trip.begin(), trip.end());

    Eigen::SimplicialLLT<SpMat> llt(precision);
    if (llt.info() != Eigen::Success) fail("sparse Cholesky factorization failed");

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(J);
    for (int j = 0; j < J; ++j) z[j] = normal(rng);

    // P Q P' = L L'  =>  Q^{-1} = (P' U^{-1}) (P' U^{-1})', so x = P' U^{-1} z.
    Eigen::VectorXd y = llt.matrixU().solve(z);
    Eigen::VectorXd x = llt.permutationPinv() * y;
    return std::vector<double>(x.data(), x.data() + J);
}

std::string graph_content_hash(std::span<const double> lat, std::span<const double> lon, int k) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix64 = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 1099511628211ull;
        }
    };
    auto mixd = [&](double d) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        mix64(bits);
    };
    mix64(static_cast<std::uint64_t>(k));
    mix64(static_cast<std::uint64_t>(lat.size()));
    for (double v : lat) mixd(v);
    for (double v : lon) mixd(v);
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xF];
    return std::string(buf, 16);
}

void save_graph_cache(const AdjacencyGraph& graph, const std::string& path) {
    nlohmann::ordered_json j;
    j["kind"] = "knn_graph_cache";
    j["content_hash"] = graph.content_hash;
    j["J"] = graph.J;
    j["k"] = graph.k;
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& [a, b] : graph.edges) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    j["degrees"] = graph.degrees;
    j["car_eigenvalues"] = graph.car_eigenvalues;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write graph cache: " + path);
    out << j.dump() << '\n';
}

AdjacencyGraph load_graph_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open graph cache: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("kind", "") != std::string("knn_graph_cache"))
        fail("not a graph cache file: " + path);
    AdjacencyGraph graph;
    graph.J = j.at("J").get<int>();
    graph.k = j.at("k").get<int>();
    graph.content_hash = j.at("content_hash").get<std::string>();
    for (const auto& e : j.at("edges"))
        graph.edges.emplace_back(e.at(0).get<std::int32_t>(), e.at(1).get<std::int32_t>());
    graph.finalize_from_edges();
    graph.car_eigenvalues = j.at("car_eigenvalues").get<std::vector<double>>();
    const auto degrees = j.at("degrees").get<std::vector<double>>();
    if (degrees != graph.degrees) fail("graph cache degrees inconsistent with edges: " + path);
    if (graph.car_eigenvalues.size() != static_cast<std::size_t>(graph.J))
        fail("graph cache eigenvalue count mismatch: " + path);
    return graph;
}

AdjacencyGraph build_or_load_graph(std::span<const double> lat, std::span<const double> lon,
                                   int k, const std::string& cache_path) {
    const std::string hash = graph_content_hash(lat, lon, k);
    if (!cache_path.empty()) {
        std::ifstream probe(cache_path);
        if (probe.good()) {
            AdjacencyGraph cached = load_graph_cache(cache_path);
            if (cached.content_hash == hash) return cached;
        }
    }
    AdjacencyGraph graph = build_knn_graph(lat, lon, k);
    if (!cache_path.empty()) save_graph_cache(graph, cache_path);
    return graph;
}

}  // namespace claimcar
