#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "claimcar/rng.hpp"

namespace claimcar {

// Symmetric 0/1 adjacency with cached degrees and eigenvalues of the
// normalized adjacency D^{-1/2} W D^{-1/2}; the cache makes the proper-CAR
// log determinant O(J) per call.
struct AdjacencyGraph {
    int J = 0;
    int k = 0;  // neighbor count the graph was built with (0 when synthetic)
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;  // i < j, unique
    std::vector<std::int32_t> row_ptr;                         // CSR over both directions
    std::vector<std::int32_t> col;
    std::vector<double> degrees;
    std::vector<double> car_eigenvalues;
    std::string content_hash;

    std::size_t n_edges() const { return edges.size(); }

    // Builds CSR + degrees from `edges`; callers then fill eigenvalues.
    void finalize_from_edges();
};

// Central angle (radians) between two lat/lon points in degrees.
double haversine_angle(double lat1, double lon1, double lat2, double lon2);

// k nearest neighbors per city by great-circle distance, then symmetrized.
// Ties broken by city index; duplicate coordinates produce a warning on
// stderr. Requires J >= k + 1.
AdjacencyGraph build_knn_graph(std::span<const double> lat, std::span<const double> lon, int k);

// Cycle graph with closed-form normalized-adjacency eigenvalues
// cos(2 pi m / J); lets tests build very large graphs with no eigensolver.
AdjacencyGraph ring_graph(int J);

// log N(eta; 0, (D - rho W)^{-1}) using the cached eigenvalues:
// -(J/2) log 2pi + (1/2)[sum_j log D_jj + sum_k log(1 - rho lambda_k)]
// - (1/2) eta' (D - rho W) eta.  Throws if 1 - rho lambda_k <= 0.
double car_logpdf(const AdjacencyGraph& graph, double rho, std::span<const double> eta);

// grad_eta = -(D - rho W) eta; grad_rho = -(1/2) sum_k lambda_k/(1 - rho
// lambda_k) + (1/2) eta' W eta.
struct CarGrad {
    std::vector<double> grad_eta;
    double grad_rho = 0.0;
};
CarGrad car_grad(const AdjacencyGraph& graph, double rho, std::span<const double> eta);

// Fused value + gradient for the posterior hot path: adds the eta gradient
// into `grad_eta` (length J), returns the log density, and adds the rho
// gradient into `grad_rho`.
double car_logpdf_grad(const AdjacencyGraph& graph, double rho, const double* eta,
                       double* grad_eta, double& grad_rho);

// Exact draw from N(0, (D - rho W)^{-1}) via sparse Cholesky.
std::vector<double> sample_car_prior(const AdjacencyGraph& graph, double rho, Rng& rng);

// Disk cache: JSON with J, k, edges, degrees, eigenvalues, content hash.
std::string graph_content_hash(std::span<const double> lat, std::span<const double> lon, int k);
void save_graph_cache(const AdjacencyGraph& graph, const std::string& path);
AdjacencyGraph load_graph_cache(const std::string& path);

// Loads the cache when present and its hash matches; otherwise builds and
// (if cache_path nonempty) writes it.
AdjacencyGraph build_or_load_graph(std::span<const double> lat, std::span<const double> lon,
                                   int k, const std::string& cache_path);

}  // namespace claimcar
