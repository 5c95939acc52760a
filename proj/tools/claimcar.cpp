#include <CLI11.hpp>

#include <string>
#include <vector>

#include "claimcar/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"hierarchical Bayesian claim-count model"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    std::string draws_dir;
    int repeats = 100;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("-c,--config", config, "key = value configuration file");
        if (config_required) opt->required();
        sub->add_option("--set", overrides, "override a config key (key=value, repeatable)");
    };

    CLI::App* fit = app.add_subcommand("fit", "fit the model; writes draws, manifest, report");
    add_common(fit, true);
    CLI::App* diagnose =
        app.add_subcommand("diagnose", "recompute the report from a fit output directory");
    diagnose->add_option("dir", draws_dir, "fit output directory")->required();
    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    add_common(simulate, false);
    CLI::App* ingest = app.add_subcommand("ingest", "ingest the data and print a summary");
    add_common(ingest, true);
    CLI::App* bench_grad =
        app.add_subcommand("bench-grad", "time posterior value+gradient evaluations");
    add_common(bench_grad, true);
    bench_grad->add_option("--repeats", repeats, "timed repetitions")->check(CLI::PositiveNumber);
    CLI::App* bench_scaling =
        app.add_subcommand("bench-scaling", "sampler cost-scaling benchmark");
    add_common(bench_scaling, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // collapse CLI11's usage-error codes
    }

    if (fit->parsed()) return claimcar::cmd_fit(config, overrides);
    if (diagnose->parsed()) return claimcar::cmd_diagnose(draws_dir);
    if (simulate->parsed()) return claimcar::cmd_simulate(config, overrides);
    if (ingest->parsed()) return claimcar::cmd_ingest(config, overrides);
    if (bench_grad->parsed()) return claimcar::cmd_bench_grad(config, overrides, repeats);
    if (bench_scaling->parsed()) return claimcar::cmd_bench_scaling(config, overrides);
    return 1;
}
