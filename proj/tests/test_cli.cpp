#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef CLAIMCAR_EXE
#error "CLAIMCAR_EXE must point at the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunResult run(const fs::path& dir, const std::string& args) {
    const fs::path out_path = dir / "stdout.txt";
    const fs::path err_path = dir / "stderr.txt";
    const std::string cmd = std::string(CLAIMCAR_EXE) + " " + args + " >" + out_path.string() +
                            " 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

// One simulated dataset plus a fast fit config, shared across the cases.
// simulate and fit read different sections, so each gets its own file.
struct Workspace {
    fs::path root;
    fs::path sim_config;
    fs::path config;
    fs::path out_dir;

    Workspace() {
        root = fs::temp_directory_path() / "claimcar_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        out_dir = root / "fit_out";

        sim_config = root / "sim.cfg";
        std::ofstream sim(sim_config);
        sim << "output_dir = " << (root / "sim").string() << "\n"
            << "[synthetic]\n"
            << "n_records = 1500\n"
            << "n_cities = 15\n"
            << "n_brand = 3\n"
            << "n_category = 2\n"
            << "n_covariates = 1\n"
            << "n_years = 5\n"
            << "k = 3\n"
            << "seed = 31\n"
            << "truth_scale_multiplier = 0.3\n";
        sim.close();

        config = root / "run.cfg";
        std::ofstream cfg(config);
        cfg << "output_dir = " << out_dir.string() << "\n"
            << "threads = 1\n"
            << "seed = 9\n"
            << "[data]\n"
            << "claims = " << (root / "sim" / "claims.csv").string() << "\n"
            << "cities = " << (root / "sim" / "cities.csv").string() << "\n"
            << "[spatial]\n"
            << "k = 3\n"
            << "[sampler]\n"
            << "algorithm = nuts\n"
            << "n_warmup = 150\n"
            << "n_samples = 60\n"
            << "thin = 6\n"
            << "n_chains = 2\n"
            << "init = zeros\n"
            << "[diagnostics]\n"
            << "gate_required = false\n";
        cfg.close();
    }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    auto& w = ws();
    CHECK(run(w.root, "").exit_code == 1);
    CHECK(run(w.root, "frobnicate").exit_code == 1);
    CHECK(run(w.root, "fit").exit_code == 1);         // --config is required
    CHECK(run(w.root, "fit --bogus x").exit_code == 1);
    const RunResult help = run(w.root, "--help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("fit") != std::string::npos);
}

TEST_CASE("simulate writes the dataset named by the config") {
    auto& w = ws();
    const RunResult r = run(w.root, "simulate -c " + q(w.sim_config));
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(r.out.find("generated") != std::string::npos);
    CHECK(fs::exists(w.root / "sim" / "claims.csv"));
    CHECK(fs::exists(w.root / "sim" / "cities.csv"));
    CHECK(fs::exists(w.root / "sim" / "truth.json"));
}

TEST_CASE("ingest summarizes the dataset") {
    auto& w = ws();
    const RunResult r = run(w.root, "ingest -c " + q(w.config));
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("rows_kept") == 1500);
    CHECK(j.at("cardinalities").at("n_brand") == 3);
}

TEST_CASE("fit writes draws, manifest, and report") {
    auto& w = ws();
    const RunResult r = run(w.root, "fit -c " + q(w.config) + " --set output_dir=" +
                                        q(w.out_dir) + " --set seed=7");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(r.out.find("gate") != std::string::npos);

    for (const char* name : {"manifest.json", "chain_1.csv", "chain_2.csv", "predictions.csv",
                             "report.json", "report.txt", "quantiles.csv", "residuals.csv"})
        CHECK_MESSAGE(fs::exists(w.out_dir / name), std::string(name));

    const auto manifest = nlohmann::json::parse(slurp(w.out_dir / "manifest.json"));
    CHECK(manifest.at("kind") == "fit_manifest");
    CHECK(manifest.at("sampler").at("seed") == 7);  // --set override landed
    CHECK(manifest.at("sampler").at("n_chains") == 2);
    CHECK(manifest.at("draws").at("n_kept_per_chain") == 10);
    CHECK(manifest.at("timings_seconds").contains("sample"));

    const std::string chain_text = slurp(w.out_dir / "chain_1.csv");
    const std::string header = chain_text.substr(0, chain_text.find('\n'));
    CHECK(header.find("c[0]") == 0);
    CHECK(header.find("energy") != std::string::npos);
}

TEST_CASE("diagnose reproduces the fit report byte for byte") {
    auto& w = ws();
    REQUIRE(fs::exists(w.out_dir / "report.json"));
    const std::string before_json = slurp(w.out_dir / "report.json");
    const std::string before_text = slurp(w.out_dir / "report.txt");

    const RunResult r = run(w.root, "diagnose " + q(w.out_dir));
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(slurp(w.out_dir / "report.json") == before_json);
    CHECK(slurp(w.out_dir / "report.txt") == before_text);
}

TEST_CASE("refitting with the same config is deterministic") {
    auto& w = ws();
    const std::string chain_before = slurp(w.out_dir / "chain_1.csv");
    REQUIRE(!chain_before.empty());
    const fs::path out2 = w.root / "fit_out2";
    const RunResult r = run(w.root, "fit -c " + q(w.config) + " --set output_dir=" + q(out2) +
                                        " --set seed=7");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(slurp(out2 / "chain_1.csv") == chain_before);
    CHECK(slurp(out2 / "report.json") == slurp(w.out_dir / "report.json"));
}

TEST_CASE("a failed convergence gate exits with code 2 when required") {
    auto& w = ws();
    const fs::path out = w.root / "fit_gate";
    const RunResult r = run(w.root, "fit -c " + q(w.config) + " --set output_dir=" + q(out) +
                                        " --set diagnostics.gate_required=true" +
                                        " --set diagnostics.ess_min=1000000");
    CHECK(r.exit_code == 2);
    CHECK(fs::exists(out / "report.json"));  // report still written
    const auto report = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(report.at("gate").at("pass") == false);
}

TEST_CASE("missing data files are reported with the offending path") {
    auto& w = ws();
    const RunResult r = run(w.root, "fit -c " + q(w.config) + " --set data.claims=" +
                                        q(w.root / "nope.csv"));
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("error:") != std::string::npos);
    CHECK(r.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("diagnose rejects a directory without a manifest") {
    auto& w = ws();
    const fs::path empty = w.root / "empty";
    fs::create_directories(empty);
    const RunResult r = run(w.root, "diagnose " + q(empty));
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("manifest.json") != std::string::npos);
}

TEST_CASE("bad config values are rejected before any work starts") {
    auto& w = ws();
    const RunResult r =
        run(w.root, "fit -c " + q(w.config) + " --set sampler.algorithm=gibbs");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("gibbs") != std::string::npos);
}

TEST_CASE("bench-grad reports evaluation timings") {
    auto& w = ws();
    const RunResult r = run(w.root, "bench-grad -c " + q(w.config) + " --repeats 3");
    REQUIRE_MESSAGE(r.exit_code == 0, r.err);
    CHECK(r.out.find("value_and_grad") != std::string::npos);
    CHECK(r.out.find("records") != std::string::npos);
}
