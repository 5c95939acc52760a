#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "claimcar/config.hpp"
#include "claimcar/synthetic.hpp"

using namespace claimcar;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("claimcar_syn_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_records = 20000;
    spec.n_cities = 30;
    spec.n_brand = 3;
    spec.n_category = 2;
    spec.n_covariates = 2;
    spec.n_years = 5;
    spec.knn_k = 4;
    spec.seed = 71;
    return spec;
}

ConfigMap map_of(std::initializer_list<std::pair<std::string, std::string>> kv) {
    ConfigMap map;
    map.context = "(test)";
    std::size_t line = 1;
    for (const auto& [k, v] : kv) map.entries[k] = ConfigEntry{v, line++};
    return map;
}

}  // namespace

TEST_CASE("all-zero truth with unit exposure simulates a unit-rate Poisson") {
    TempDir dir("zero");
    SyntheticSpec spec = small_spec();
    spec.truth_from_priors = false;  // empty blocks mean all-zero effects
    spec.exposure_log_mean = 0.0;
    spec.exposure_log_sd = 0.0;

    const SyntheticResult res = generate(spec, dir.str());
    REQUIRE(res.dataset.N() == spec.n_records);
    CHECK(res.dataset.cities.J() == spec.n_cities);
    CHECK(res.dataset.n_brand() == spec.n_brand);
    CHECK(res.dataset.n_category() == spec.n_category);
    CHECK(res.dataset.T() == spec.n_years);

    for (std::size_t i = 0; i < res.rates.size(); i += 997) CHECK(res.rates[i] == 1.0);

    const double n = static_cast<double>(spec.n_records);
    const double mean_y = std::accumulate(res.dataset.claims.begin(), res.dataset.claims.end(),
                                          0.0) / n;
    CHECK(std::abs(mean_y - 1.0) < 3.0 / std::sqrt(n));
}

TEST_CASE("fixed category effect shifts rates by the prescribed ratio") {
    TempDir dir("cat");
    SyntheticSpec spec = small_spec();
    spec.n_records = 40000;
    spec.truth_from_priors = false;
    spec.exposure_log_mean = 0.0;
    spec.exposure_log_sd = 0.0;
    spec.truth.v2 = {std::log(2.0), 0.0};

    const SyntheticResult res = generate(spec, dir.str());
    double sum[2] = {0.0, 0.0};
    double cnt[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < res.dataset.N(); ++i) {
        sum[res.dataset.category[i]] += res.dataset.claims[i];
        cnt[res.dataset.category[i]] += 1.0;
    }
    REQUIRE(cnt[0] > 0.0);
    REQUIRE(cnt[1] > 0.0);
    const double ratio = (sum[0] / cnt[0]) / (sum[1] / cnt[1]);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.08));
    for (std::size_t i = 0; i < res.dataset.N(); i += 1013)
        CHECK(res.rates[i] == doctest::Approx(res.dataset.category[i] == 0 ? 2.0 : 1.0));
}

TEST_CASE("total claims track total simulated intensity") {
    TempDir dir("mass");
    SyntheticSpec spec = small_spec();
    spec.truth_scale_multiplier = 0.4;

    const SyntheticResult res = generate(spec, dir.str());
    const double total_rate = std::accumulate(res.rates.begin(), res.rates.end(), 0.0);
    const double total_y = std::accumulate(res.dataset.claims.begin(), res.dataset.claims.end(),
                                           0.0);
    REQUIRE(total_rate > 0.0);
    CHECK(std::abs(total_y - total_rate) < 4.0 * std::sqrt(total_rate));
}

TEST_CASE("generation is reproducible per seed") {
    SyntheticSpec spec = small_spec();
    spec.n_records = 2000;

    TempDir a("rep_a"), b("rep_b"), c("rep_c");
    const SyntheticResult ra = generate(spec, a.str());
    const SyntheticResult rb = generate(spec, b.str());
    CHECK(slurp(ra.claims_path) == slurp(rb.claims_path));
    CHECK(slurp(ra.cities_path) == slurp(rb.cities_path));
    CHECK(slurp(ra.truth_path) == slurp(rb.truth_path));

    spec.seed = 72;
    const SyntheticResult rc = generate(spec, c.str());
    CHECK(slurp(ra.claims_path) != slurp(rc.claims_path));
}

TEST_CASE("truth file records the full parameter vector in layout order") {
    TempDir dir("truth");
    SyntheticSpec spec = small_spec();
    spec.n_records = 3000;
    const SyntheticResult res = generate(spec, dir.str());

    const auto j = nlohmann::json::parse(slurp(res.truth_path));
    CHECK(j.at("kind") == "synthetic_truth");
    CHECK(j.at("seed") == spec.seed);
    CHECK(j.at("n_cities") == spec.n_cities);
    CHECK(j.at("n_years") == spec.n_years);

    const auto names = j.at("names").get<std::vector<std::string>>();
    const auto values = j.at("values").get<std::vector<double>>();
    REQUIRE(names.size() == values.size());
    CHECK(names.front() == "c[0]");
    CHECK(names.back() == "rho");
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "phi") CHECK(values[i] == doctest::Approx(res.truth.phi));
        if (names[i] == "rho") CHECK(values[i] == doctest::Approx(res.truth.rho));
        if (names[i] == "sigma_eps") CHECK(values[i] == doctest::Approx(res.truth.sigma_eps));
        if (names[i] == "v1[0]") CHECK(values[i] == doctest::Approx(res.truth.v1.at(0)));
    }
}

TEST_CASE("spec reader consumes the synthetic and spline sections") {
    SyntheticSpec spec = synthetic_spec_from_map(map_of({{"synthetic.n_records", "5000"},
                                                         {"synthetic.n_cities", "40"},
                                                         {"synthetic.n_brand", "6"},
                                                         {"synthetic.seed", "99"},
                                                         {"synthetic.truth_scale_multiplier", "0.5"},
                                                         {"synthetic.truth_from_priors", "false"},
                                                         {"spline.degree", "2"}}));
    CHECK(spec.n_records == 5000);
    CHECK(spec.n_cities == 40);
    CHECK(spec.n_brand == 6);
    CHECK(spec.seed == 99);
    CHECK(spec.truth_scale_multiplier == 0.5);
    CHECK_FALSE(spec.truth_from_priors);
    CHECK(spec.spline.degree == 2);
    CHECK(spec.n_category == 4);  // untouched default

    CHECK_THROWS_AS(synthetic_spec_from_map(map_of({{"synthetic.bogus", "1"}})),
                    std::runtime_error);
}

TEST_CASE("spec validation rejects degenerate settings") {
    CHECK_THROWS_WITH_AS(synthetic_spec_from_map(map_of({{"synthetic.n_records", "0"}})),
                         "synthetic: n_records must be >= 1", std::invalid_argument);
    CHECK_THROWS_AS(synthetic_spec_from_map(map_of({{"synthetic.n_cities", "4"}})),
                    std::invalid_argument);  // k-NN degree needs n_cities > k
    CHECK_THROWS_AS(
        synthetic_spec_from_map(map_of({{"synthetic.truth_scale_multiplier", "0"}})),
        std::invalid_argument);
    CHECK_THROWS_AS(synthetic_spec_from_map(map_of({{"synthetic.exposure_log_sd", "-1"}})),
                    std::invalid_argument);

    SyntheticSpec bad = small_spec();
    bad.truth_from_priors = false;
    bad.truth.v1 = {0.1};  // n_brand is 3
    TempDir dir("badblock");
    CHECK_THROWS_AS(generate(bad, dir.str()), std::invalid_argument);
}

TEST_CASE("sbc smoke run produces ranks in range") {
    TempDir dir("sbc");
    SyntheticSpec spec;
    spec.n_records = 600;
    spec.n_cities = 12;
    spec.n_brand = 3;
    spec.n_category = 2;
    spec.n_covariates = 1;
    spec.n_years = 5;
    spec.knn_k = 3;
    spec.seed = 5;
    spec.truth_scale_multiplier = 0.3;

    SamplerConfig cfg;
    cfg.algorithm = SamplerKind::Nuts;
    cfg.n_warmup = 150;
    cfg.n_samples = 99;
    cfg.thin = 1;
    cfg.n_chains = 1;
    cfg.init = InitKind::Zeros;

    DiagnosticsConfig diag;
    diag.rhat_max = 1e6;  // keep the smoke run from excluding replicates
    diag.ess_min = 0.0;

    const SbcResult res = sbc_run(spec, 2, cfg, diag, dir.str());
    CHECK(res.n_replicates == 2);
    CHECK(res.n_excluded == 0);
    REQUIRE(!res.names.empty());
    CHECK(res.names.front() == "c[0]");
    CHECK(res.n_ranks == 100);
    REQUIRE(res.ranks.size() == res.names.size());
    for (const auto& ranks : res.ranks) {
        REQUIRE(ranks.size() == 2);
        for (int r : ranks) {
            CHECK(r >= 0);
            CHECK(r < res.n_ranks);
        }
    }
    REQUIRE(res.p_values.size() == res.names.size());
    for (double p : res.p_values) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    CHECK(res.frac_below_05 >= 0.0);
    CHECK(res.frac_below_05 <= 1.0);

    const SbcResult empty = sbc_run(spec, 0, cfg, diag, dir.str());
    CHECK(empty.n_replicates == 0);
    CHECK(empty.ranks.empty());
}
