#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "claimcar/rng.hpp"
#include "claimcar/spatial.hpp"

using namespace claimcar;
namespace fs = std::filesystem;

namespace {

struct Coords {
    std::vector<double> lat, lon;
};

Coords random_coords(int J, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ulat(25.0, 48.0), ulon(-120.0, -70.0);
    Coords c;
    for (int j = 0; j < J; ++j) {
        c.lat.push_back(ulat(rng));
        c.lon.push_back(ulon(rng));
    }
    return c;
}

Eigen::MatrixXd precision_matrix(const AdjacencyGraph& g, double rho) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(g.J, g.J);
    for (int j = 0; j < g.J; ++j) q(j, j) = g.degrees[j];
    for (const auto& [i, j] : g.edges) {
        q(i, j) = -rho;
        q(j, i) = -rho;
    }
    return q;
}

double dense_car_logpdf(const AdjacencyGraph& g, double rho, const std::vector<double>& eta) {
    const Eigen::MatrixXd q = precision_matrix(g, rho);
    const Eigen::Map<const Eigen::VectorXd> e(eta.data(), g.J);
    const Eigen::LLT<Eigen::MatrixXd> llt(q);
    REQUIRE(llt.info() == Eigen::Success);
    double logdet = 0.0;
    for (int j = 0; j < g.J; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
    return -0.5 * g.J * std::log(2.0 * std::numbers::pi) + 0.5 * logdet -
           0.5 * e.dot(q * e);
}

std::vector<double> random_eta(int J, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> eta(J);
    for (auto& v : eta) v = z(rng);
    return eta;
}

}  // namespace

TEST_CASE("knn graph shape and symmetry") {
    const auto c = random_coords(40, 21);
    const AdjacencyGraph g = build_knn_graph(c.lat, c.lon, 5);
    CHECK(g.J == 40);
    CHECK(g.k == 5);
    CHECK(g.car_eigenvalues.size() == 40);
    std::vector<int> degree(40, 0);
    for (const auto& [i, j] : g.edges) {
        CHECK(i < j);
        ++degree[i];
        ++degree[j];
    }
    // symmetrized kNN: every city keeps at least its own k neighbors
    for (int j = 0; j < g.J; ++j) {
        CHECK(degree[j] >= 5);
        CHECK(g.degrees[j] == doctest::Approx(double(degree[j])));
    }
    // CSR covers each edge in both directions
    CHECK(g.col.size() == 2 * g.n_edges());
    CHECK_THROWS(build_knn_graph(std::vector<double>(4, 1.0), std::vector<double>(4, 2.0), 5));
}

TEST_CASE("complete graph eigenvalues") {
    // 4 cities all mutually nearest: normalized adjacency eigenvalues {1, -1/3 x3}
    const auto c = random_coords(4, 22);
    const AdjacencyGraph g = build_knn_graph(c.lat, c.lon, 3);
    REQUIRE(g.n_edges() == 6);
    std::vector<double> ev = g.car_eigenvalues;
    std::sort(ev.begin(), ev.end());
    CHECK(ev[0] == doctest::Approx(-1.0 / 3.0));
    CHECK(ev[1] == doctest::Approx(-1.0 / 3.0));
    CHECK(ev[2] == doctest::Approx(-1.0 / 3.0));
    CHECK(ev[3] == doctest::Approx(1.0));
}

TEST_CASE("ring graph closed-form eigenvalues") {
    const AdjacencyGraph g = ring_graph(8);
    CHECK(g.n_edges() == 8);
    std::vector<double> want;
    for (int m = 0; m < 8; ++m) want.push_back(std::cos(2.0 * std::numbers::pi * m / 8.0));
    std::vector<double> got = g.car_eigenvalues;
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    for (int m = 0; m < 8; ++m) CHECK(got[m] == doctest::Approx(want[m]));
}

TEST_CASE("car_logpdf matches the dense oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = random_coords(30, 100 + seed);
        const AdjacencyGraph g = build_knn_graph(c.lat, c.lon, 4);
        const auto eta = random_eta(g.J, 200 + seed);
        for (double rho : {0.05, 0.5, 0.95}) {
            const double got = car_logpdf(g, rho, eta);
            const double want = dense_car_logpdf(g, rho, eta);
            CHECK(std::fabs(got - want) <= 1e-8 * std::max(1.0, std::fabs(want)));
        }
    }
}

TEST_CASE("car_logpdf on a large ring agrees with the dense oracle") {
    const AdjacencyGraph g = ring_graph(400);
    const auto eta = random_eta(g.J, 31);
    const double got = car_logpdf(g, 0.8, eta);
    const double want = dense_car_logpdf(g, 0.8, eta);
    CHECK(std::fabs(got - want) <= 1e-8 * std::fabs(want));
}

TEST_CASE("car gradients match finite differences") {
    const auto c = random_coords(25, 33);
    const AdjacencyGraph g = build_knn_graph(c.lat, c.lon, 4);
    std::vector<double> eta = random_eta(g.J, 34);
    const double rho = 0.65;
    const CarGrad grad = car_grad(g, rho, eta);

    const double h = 1e-6;
    for (int j = 0; j < g.J; j += 5) {
        std::vector<double> ep = eta, em = eta;
        ep[j] += h;
        em[j] -= h;
        const double fd = (car_logpdf(g, rho, ep) - car_logpdf(g, rho, em)) / (2.0 * h);
        CHECK(grad.grad_eta[j] == doctest::Approx(fd).epsilon(1e-6));
    }
    const double fd_rho = (car_logpdf(g, rho + h, eta) - car_logpdf(g, rho - h, eta)) / (2.0 * h);
    CHECK(grad.grad_rho == doctest::Approx(fd_rho).epsilon(1e-6));

    // fused variant adds into provided buffers
    std::vector<double> acc(g.J, 1.0);
    double acc_rho = 1.0;
    const double value = car_logpdf_grad(g, rho, eta.data(), acc.data(), acc_rho);
    CHECK(value == doctest::Approx(car_logpdf(g, rho, eta)));
    CHECK(acc_rho == doctest::Approx(1.0 + grad.grad_rho));
    for (int j = 0; j < g.J; j += 7)
        CHECK(acc[j] == doctest::Approx(1.0 + grad.grad_eta[j]));
}

TEST_CASE("rho at the eigenvalue boundary is rejected") {
    const AdjacencyGraph g = ring_graph(16);
    const auto eta = random_eta(16, 35);
    CHECK_THROWS(car_logpdf(g, 1.0, eta));  // 1 - rho*lambda_max = 0
}

TEST_CASE("prior sampler covariance matches the CAR precision") {
    const AdjacencyGraph g = ring_graph(10);
    const double rho = 0.6;
    const Eigen::MatrixXd cov = precision_matrix(g, rho).inverse();

    Rng rng = make_rng(99, 0);
    const int n = 40000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(g.J, g.J);
    for (int i = 0; i < n; ++i) {
        const std::vector<double> x = sample_car_prior(g, rho, rng);
        const Eigen::Map<const Eigen::VectorXd> v(x.data(), g.J);
        acc += v * v.transpose();
    }
    acc /= double(n);
    const double scale = cov.diagonal().maxCoeff();
    CHECK(((acc - cov).array().abs().maxCoeff()) <= 0.05 * scale);
}

TEST_CASE("graph cache round-trip and staleness") {
    const auto c = random_coords(35, 55);
    const AdjacencyGraph g = build_knn_graph(c.lat, c.lon, 5);
    const fs::path path = fs::temp_directory_path() / "claimcar_graph_cache.json";
    save_graph_cache(g, path.string());
    const AdjacencyGraph loaded = load_graph_cache(path.string());
    CHECK(loaded.J == g.J);
    CHECK(loaded.k == g.k);
    CHECK(loaded.edges == g.edges);
    CHECK(loaded.degrees == g.degrees);
    CHECK(loaded.car_eigenvalues == g.car_eigenvalues);
    CHECK(loaded.content_hash == g.content_hash);

    // matching hash -> loaded, not rebuilt
    const AdjacencyGraph via_cache = build_or_load_graph(c.lat, c.lon, 5, path.string());
    CHECK(via_cache.edges == g.edges);

    // different k -> stale hash -> rebuilt and rewritten
    const AdjacencyGraph rebuilt = build_or_load_graph(c.lat, c.lon, 6, path.string());
    CHECK(rebuilt.content_hash == graph_content_hash(c.lat, c.lon, 6));
    CHECK(load_graph_cache(path.string()).content_hash == rebuilt.content_hash);
    fs::remove(path);
}

TEST_CASE("haversine angles") {
    CHECK(haversine_angle(40.0, -75.0, 40.0, -75.0) == doctest::Approx(0.0));
    CHECK(haversine_angle(0.0, 0.0, 0.0, 90.0) == doctest::Approx(std::numbers::pi / 2));
    CHECK(haversine_angle(90.0, 0.0, -90.0, 0.0) == doctest::Approx(std::numbers::pi));
}
