#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>
#include <string>

#include "claimcar/config.hpp"

using namespace claimcar;

TEST_CASE("config grammar: sections, comments, quotes") {
    const ConfigMap map = parse_config_text("# claim model\n"
                                            "seed = 7\n"
                                            "[data]\n"
                                            "claims = \"a b.csv\"  # path with space\n"
                                            "cities = cities.csv\n"
                                            "[sampler]\n"
                                            "n_chains = 2\n",
                                            "test");
    CHECK(map.entries.at("seed").value == "7");
    CHECK(map.entries.at("data.claims").value == "a b.csv");
    CHECK(map.entries.at("data.cities").value == "cities.csv");
    CHECK(map.entries.at("sampler.n_chains").value == "2");
    CHECK(map.entries.at("sampler.n_chains").line == 7);
}

TEST_CASE("config grammar rejects malformed lines") {
    CHECK_THROWS_AS(parse_config_text("seed", "t"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("[unclosed\nseed = 1", "t"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("bad key = 1", "t"), std::runtime_error);
    CHECK_THROWS_AS(parse_config_text("seed = 1\nseed = 2", "t"), std::runtime_error);
}

TEST_CASE("overrides replace and extend the map") {
    ConfigMap map = parse_config_text("seed = 1\n", "t");
    apply_override(map, "seed=9");
    apply_override(map, "sampler.thin = 5");
    apply_override(map, "data.claims=\"x.csv\"");
    CHECK(map.entries.at("seed").value == "9");
    CHECK(map.entries.at("sampler.thin").value == "5");
    CHECK(map.entries.at("data.claims").value == "x.csv");
    CHECK_THROWS_AS(apply_override(map, "no_equals"), std::runtime_error);
    CHECK_THROWS_AS(apply_override(map, "bad key=1"), std::runtime_error);
}

TEST_CASE("run_config_from_map applies defaults and validates") {
    RunConfig cfg = run_config_from_map(parse_config_text("", "t"));
    CHECK(cfg.seed == 1);
    CHECK(cfg.spline.n_interior_knots == 7);
    CHECK(cfg.spline.degree == 3);
    CHECK(cfg.spatial.k == 5);
    CHECK(cfg.sampler.algorithm == SamplerKind::Nuts);
    CHECK(cfg.sampler.n_warmup == 2000);
    CHECK(cfg.sampler.n_samples == 2000);
    CHECK(cfg.sampler.thin == 20);
    CHECK(cfg.sampler.n_chains == 4);
    CHECK(cfg.sampler.target_accept == 0.8);
    CHECK(cfg.sampler.init == InitKind::Optimize);
    CHECK(cfg.data.year_floor == 1971);
    CHECK(cfg.diagnostics.rhat_max == doctest::Approx(1.10));
    CHECK(cfg.diagnostics.ess_min == doctest::Approx(35.0));
    CHECK(cfg.diagnostics.gate_required);

    cfg = run_config_from_map(parse_config_text("seed = 42\n[sampler]\nalgorithm = mala\n"
                                                "[diagnostics]\ngate_required = false\n",
                                                "t"));
    CHECK(cfg.sampler.algorithm == SamplerKind::Mala);
    CHECK(cfg.seed == 42);
    CHECK(cfg.sampler.seed == 42);  // sampler inherits the run seed
    CHECK_FALSE(cfg.diagnostics.gate_required);
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("sede = 1\n", "t")),
                    std::runtime_error);
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("[sampler]\nchains = 4\n", "t")),
                    std::runtime_error);
}

TEST_CASE("invalid values are rejected with the key name") {
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("[sampler]\nthin = 0\n", "t")),
                    std::runtime_error);
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("[sampler]\ntarget_accept = 1.5\n", "t")),
                    std::runtime_error);
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("[sampler]\nalgorithm = gibbs\n", "t")),
                    std::runtime_error);
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("seed = -1\n", "t")),
                    std::runtime_error);
    CHECK_THROWS_AS(run_config_from_map(parse_config_text("[sampler]\nn_warmup = abc\n", "t")),
                    std::runtime_error);
}

TEST_CASE("fingerprint ignores output_dir and threads") {
    ConfigMap a = parse_config_text("seed = 3\noutput_dir = x\nthreads = 1\n", "t");
    ConfigMap b = parse_config_text("seed = 3\noutput_dir = y\nthreads = 8\n", "t");
    CHECK(config_fingerprint(a) == config_fingerprint(b));
    apply_override(b, "seed=4");
    CHECK(config_fingerprint(a) != config_fingerprint(b));
}
