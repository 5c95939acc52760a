#include "claimcar/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "claimcar/config.hpp"
#include "claimcar/csv.hpp"
#include "claimcar/data.hpp"
#include "claimcar/diagnostics.hpp"
#include "claimcar/fit.hpp"
#include "claimcar/kernels.hpp"
#include "claimcar/parameters.hpp"
#include "claimcar/posterior.hpp"
#include "claimcar/sampler.hpp"
#include "claimcar/spatial.hpp"
#include "claimcar/synthetic.hpp"

namespace claimcar {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using StageTimings = std::vector<std::pair<std::string, double>>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one named pipeline stage: times it and tags any error with the stage.
template <typename F>
auto staged(const char* name, StageTimings& timings, F&& f) -> std::invoke_result_t<F> {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
            f();
            timings.emplace_back(name, seconds_since(t0));
        } else {
            auto result = f();
            timings.emplace_back(name, seconds_since(t0));
            return result;
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("[" + std::string(name) + "] " + e.what());
    }
}

ConfigMap load_map(const std::string& config_path, const std::vector<std::string>& overrides) {
    ConfigMap map;
    if (config_path.empty())
        map.context = "(no config file)";
    else
        map = parse_config_file(config_path);
    for (const std::string& assignment : overrides) apply_override(map, assignment);
    return map;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset run_ingest(const DataConfig& data) {
    if (data.claims_path.empty()) throw std::runtime_error("data.claims is required");
    if (data.cities_path.empty()) throw std::runtime_error("data.cities is required");
    ModelMap model_map;
    const ModelMap* map_ptr = nullptr;
    if (!data.model_map_path.empty()) {
        model_map = load_model_map(data.model_map_path);
        map_ptr = &model_map;
    }
    CityTable cities =
        ingest_city_covariates(data.cities_path, data.columns, data.standardize_covariates);
    return ingest_policies(data.claims_path, data.columns, data.year_floor, std::move(cities),
                           data.on_bad_cell, map_ptr);
}

ordered_json timings_json(const StageTimings& timings) {
    ordered_json j = ordered_json::object();
    for (const auto& [stage, secs] : timings) j[stage] = secs;
    return j;
}

ordered_json make_manifest(const std::string& fingerprint, const RunConfig& cfg,
                           const ModelInputs& inputs, const PosteriorDraws& draws,
                           const std::vector<std::string>& files, const StageTimings& timings) {
    ordered_json j;
    j["kind"] = "fit_manifest";
    j["config_hash"] = fingerprint;
    j["versions"] = {{"claimcar", "0.1.0"}, {"compiler", __VERSION__}};
    j["kernels"] = active_kernels().name;
    j["threads"] = cfg.threads;

    const SamplerConfig& s = cfg.sampler;
    ordered_json sampler;
    sampler["algorithm"] = to_string(s.algorithm);
    sampler["n_warmup"] = s.n_warmup;
    sampler["n_samples"] = s.n_samples;
    sampler["thin"] = s.thin;
    sampler["n_chains"] = s.n_chains;
    sampler["target_accept"] = s.target_accept;
    sampler["max_tree_depth"] = s.max_tree_depth;
    sampler["seed"] = s.seed;
    sampler["init"] = to_string(s.init);
    sampler["init_steps"] = s.init_steps;
    sampler["init_learning_rate"] = s.init_learning_rate;
    sampler["parallel_chains"] = s.parallel_chains;
    ordered_json step_sizes = ordered_json::array();
    ordered_json mean_accept = ordered_json::array();
    for (const ChainDraws& ch : draws.chains) {
        step_sizes.push_back(ch.step_size);
        mean_accept.push_back(ch.mean_accept);
    }
    sampler["step_sizes"] = std::move(step_sizes);
    sampler["mean_accept"] = std::move(mean_accept);
    j["sampler"] = std::move(sampler);

    j["diagnostics"] = {{"rhat_max", cfg.diagnostics.rhat_max},
                        {"ess_min", cfg.diagnostics.ess_min},
                        {"gate_required", cfg.diagnostics.gate_required}};
    j["draws"] = {{"n_kept_per_chain", draws.n_kept_per_chain()}, {"files", files}};
    j["model"] = ordered_json::parse(model_manifest_json(inputs));
    j["timings_seconds"] = timings_json(timings);
    return j;
}

// Writes chain_<id>.csv (constrained draws plus per-draw sampler stats) and
// predictions.csv (observed count and posterior-mean rate per record).
// Returns the chain file names.
std::vector<std::string> persist_draws(const std::string& out_dir, const ModelInputs& inputs,
                                       const PosteriorDraws& draws) {
    const BlockLayout& layout = inputs.layout;
    std::string header;
    for (const std::string& name : draws.names) {
        header += name;
        header += ',';
    }
    header += "energy,tree_depth,divergent,step_size";

    std::vector<std::string> files;
    for (const ChainDraws& ch : draws.chains) {
        std::string file = "chain_" + std::to_string(ch.chain_id + 1) + ".csv";
        const fs::path path = fs::path(out_dir) / file;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        out << header << '\n';
        std::string line;
        for (std::size_t i = 0; i < ch.draws.size(); ++i) {
            const std::vector<double> values = constrained_values(ch.draws[i], layout);
            line.clear();
            line.reserve(values.size() * 18 + 48);
            for (double v : values) {
                line += csv::format_double(v);
                line += ',';
            }
            const DrawStats& st = ch.stats[i];
            line += csv::format_double(st.energy);
            line += ',';
            line += std::to_string(st.tree_depth);
            line += ',';
            line += st.divergent ? '1' : '0';
            line += ',';
            line += csv::format_double(st.step_size);
            out << line << '\n';
        }
        if (!out) throw std::runtime_error("failed writing " + path.string());
        files.push_back(std::move(file));
    }

    const std::size_t n_records = inputs.n_records();
    std::vector<double> mean_rate(n_records, 0.0);
    std::size_t n_draws = 0;
    for (const ChainDraws& ch : draws.chains)
        for (const std::vector<double>& theta : ch.draws) {
            const ParameterBlock p = to_constrained(theta, layout);
            const std::vector<double> rates = predict_rates(p, inputs);
            for (std::size_t i = 0; i < n_records; ++i) mean_rate[i] += rates[i];
            ++n_draws;
        }
    if (n_draws == 0) throw std::runtime_error("no kept draws to persist");
    for (double& r : mean_rate) r /= static_cast<double>(n_draws);

    const fs::path pred_path = fs::path(out_dir) / "predictions.csv";
    std::ofstream pred(pred_path, std::ios::binary);
    if (!pred) throw std::runtime_error("cannot open " + pred_path.string() + " for writing");
    pred << "observed,predicted\n";
    for (std::size_t i = 0; i < n_records; ++i)
        pred << csv::format_double(inputs.data.claims[i]) << ','
             << csv::format_double(mean_rate[i]) << '\n';
    if (!pred) throw std::runtime_error("failed writing " + pred_path.string());
    return files;
}

struct DiagnoseOutcome {
    DiagnosticsReport report;
    bool gate_required = true;
};

double parse_cell(const std::string& cell, const fs::path& path, std::size_t row,
                  const std::string& column) {
    const auto v = csv::parse_double(cell);
    if (!v)
        throw std::runtime_error(path.string() + ":" + std::to_string(row + 2) +
                                 ": bad numeric value in column " + column);
    return *v;
}

// Rebuilds the diagnostics report for a fit output directory from its
// persisted files alone, and rewrites report.json / report.txt and the plot
// CSVs.  Both `fit` and `diagnose` go through here, so their reports are
// byte-identical by construction.
DiagnoseOutcome diagnose_core(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path))
        throw std::runtime_error("no manifest.json in " + dir +
                                 " (expected a fit output directory)");
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot read " + manifest_path.string());
    const ordered_json manifest = ordered_json::parse(in);

    const auto& card = manifest.at("model").at("cardinalities");
    const BlockLayout layout = BlockLayout::make(
        card.at("L").get<int>(), card.at("n_brand").get<int>(), card.at("n_category").get<int>(),
        card.at("M").get<int>(), card.at("J").get<int>(), card.at("T").get<int>());
    const std::vector<std::string> names = layout.parameter_names();
    const std::size_t d = names.size();

    std::vector<std::string> expected = names;
    expected.insert(expected.end(), {"energy", "tree_depth", "divergent", "step_size"});

    const auto& draws_info = manifest.at("draws");
    const std::size_t n_kept = draws_info.at("n_kept_per_chain").get<std::size_t>();
    const auto files = draws_info.at("files").get<std::vector<std::string>>();

    std::vector<std::vector<std::vector<double>>> unconstrained;
    std::vector<std::vector<std::vector<double>>> constrained;
    std::size_t n_divergent = 0;
    for (const std::string& file : files) {
        const fs::path path = root / file;
        const csv::Table table = csv::read_file(path.string());
        if (table.header != expected)
            throw std::runtime_error(path.string() +
                                     ": columns do not match the manifest model layout");
        if (table.rows.size() != n_kept)
            throw std::runtime_error(path.string() + ": " + std::to_string(table.rows.size()) +
                                     " draws but manifest says " + std::to_string(n_kept));
        std::vector<std::vector<double>> unc;
        std::vector<std::vector<double>> con;
        unc.reserve(table.rows.size());
        con.reserve(table.rows.size());
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            std::vector<double> values(d);
            for (std::size_t j = 0; j < d; ++j)
                values[j] = parse_cell(row[j], path, r, expected[j]);
            if (parse_cell(row[d + 2], path, r, "divergent") != 0.0) ++n_divergent;
            unc.push_back(unconstrained_from_values(values, layout));
            con.push_back(std::move(values));
        }
        unconstrained.push_back(std::move(unc));
        constrained.push_back(std::move(con));
    }

    const fs::path pred_path = root / "predictions.csv";
    const csv::Table pred = csv::read_file(pred_path.string());
    const std::size_t col_y = pred.require_column("observed", pred_path.string());
    const std::size_t col_rate = pred.require_column("predicted", pred_path.string());
    std::vector<double> y(pred.rows.size());
    std::vector<double> lambda(pred.rows.size());
    for (std::size_t r = 0; r < pred.rows.size(); ++r) {
        y[r] = parse_cell(pred.rows[r][col_y], pred_path, r, "observed");
        lambda[r] = parse_cell(pred.rows[r][col_rate], pred_path, r, "predicted");
    }

    const auto& diag = manifest.at("diagnostics");
    DiagnosticsConfig dc;
    dc.rhat_max = diag.at("rhat_max").get<double>();
    dc.ess_min = diag.at("ess_min").get<double>();
    dc.gate_required = diag.at("gate_required").get<bool>();

    DiagnoseOutcome out;
    out.gate_required = dc.gate_required;
    out.report = build_report(names, unconstrained, constrained, n_divergent, y, lambda,
                              manifest.at("model").at("d").get<std::size_t>(), dc);

    write_text_file(root / "report.json", report_json(out.report));
    write_text_file(root / "report.txt", report_text(out.report));
    write_prediction_plots((root / "quantiles.csv").string(), (root / "residuals.csv").string(),
                           y, lambda);
    return out;
}

int gate_exit_code(const DiagnoseOutcome& out) {
    if (out.report.gate_pass || !out.gate_required) return 0;
    return 2;
}

int fail(const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
}

}  // namespace

int cmd_fit(const std::string& config_path, const std::vector<std::string>& overrides) {
    try {
        ConfigMap map = load_map(config_path, overrides);
        const std::string fingerprint = config_fingerprint(map);
        const RunConfig cfg = run_config_from_map(std::move(map));
        if (cfg.sampler.n_samples / cfg.sampler.thin < 1)
            throw std::runtime_error(
                "config: sampler.thin exceeds sampler.n_samples (no draws would be kept)");
        fs::create_directories(cfg.output_dir);

        StageTimings timings;
        Dataset dataset = staged("ingest", timings, [&] { return run_ingest(cfg.data); });
        AdjacencyGraph graph = staged("graph", timings, [&] {
            return build_or_load_graph(dataset.cities.latitude, dataset.cities.longitude,
                                       cfg.spatial.k, cfg.spatial.graph_cache);
        });
        const ModelInputs inputs = staged("inputs", timings, [&] {
            return build_model_inputs(std::move(dataset), cfg.spline, std::move(graph),
                                      cfg.threads);
        });
        const std::vector<double> init =
            staged("init", timings, [&] { return initial_point(inputs, cfg.sampler); });
        const PosteriorDraws draws = staged("sample", timings, [&] {
            const DensityFactory factory = posterior_density_factory(inputs);
            PosteriorDraws out;
            switch (cfg.sampler.algorithm) {
                case SamplerKind::Nuts: out = nuts_sample(factory, cfg.sampler, init); break;
                case SamplerKind::Mala: out = mala_sample(factory, cfg.sampler, init); break;
                case SamplerKind::Rwm: out = rwm_sample(factory, cfg.sampler, init); break;
            }
            out.names = inputs.layout.parameter_names();
            return out;
        });
        const std::vector<std::string> files = staged(
            "persist", timings, [&] { return persist_draws(cfg.output_dir, inputs, draws); });

        // The report stage reads the manifest back, so write it now and again
        // once the report timing is known.
        ordered_json manifest = make_manifest(fingerprint, cfg, inputs, draws, files, timings);
        const fs::path manifest_path = fs::path(cfg.output_dir) / "manifest.json";
        write_text_file(manifest_path, manifest.dump(2) + "\n");

        const DiagnoseOutcome out =
            staged("report", timings, [&] { return diagnose_core(cfg.output_dir); });
        manifest["timings_seconds"] = timings_json(timings);
        write_text_file(manifest_path, manifest.dump(2) + "\n");

        std::cout << report_text(out.report);
        return gate_exit_code(out);
    } catch (const std::exception& e) {
        return fail(e);
    }
}

int cmd_diagnose(const std::string& draws_dir) {
    try {
        const DiagnoseOutcome out = diagnose_core(draws_dir);
        std::cout << report_text(out.report);
        return gate_exit_code(out);
    } catch (const std::exception& e) {
        return fail(e);
    }
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides) {
    try {
        ConfigMap map = load_map(config_path, overrides);
        std::string out_dir = "out";
        if (auto it = map.entries.find("output_dir"); it != map.entries.end()) {
            out_dir = it->second.value;
            map.entries.erase(it);
        }
        const SyntheticSpec spec = synthetic_spec_from_map(std::move(map));
        const SyntheticResult res = generate(spec, out_dir);
        std::cout << "generated " << res.dataset.N() << " records over "
                  << res.dataset.cities.J() << " cities\n"
                  << "claims: " << res.claims_path << "\n"
                  << "cities: " << res.cities_path << "\n"
                  << "truth:  " << res.truth_path << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}

int cmd_ingest(const std::string& config_path, const std::vector<std::string>& overrides) {
    try {
        const RunConfig cfg = run_config_from_map(load_map(config_path, overrides));
        const Dataset dataset = run_ingest(cfg.data);
        std::cout << ingest_report_json(dataset);
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}

int cmd_bench_grad(const std::string& config_path, const std::vector<std::string>& overrides,
                   int repeats) {
    try {
        if (repeats < 1) throw std::runtime_error("repeats must be >= 1");
        const RunConfig cfg = run_config_from_map(load_map(config_path, overrides));
        Dataset dataset = run_ingest(cfg.data);
        AdjacencyGraph graph = build_or_load_graph(dataset.cities.latitude,
                                                   dataset.cities.longitude, cfg.spatial.k,
                                                   cfg.spatial.graph_cache);
        const ModelInputs inputs =
            build_model_inputs(std::move(dataset), cfg.spline, std::move(graph), cfg.threads);
        Posterior posterior(inputs);

        const std::size_t d = static_cast<std::size_t>(inputs.layout.d);
        const std::vector<double> theta(d, 0.0);
        std::vector<double> grad(d);
        double logp = 0.0;
        for (int i = 0; i < 3; ++i) logp = posterior.value_and_grad(theta, grad);

        std::vector<double> ms(static_cast<std::size_t>(repeats));
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            logp = posterior.value_and_grad(theta, grad);
            ms[static_cast<std::size_t>(r)] = seconds_since(t0) * 1e3;
        }
        std::sort(ms.begin(), ms.end());
        auto pct = [&](double q) {
            const double pos = q * static_cast<double>(ms.size() - 1);
            return ms[static_cast<std::size_t>(pos + 0.5)];
        };
        const double median = pct(0.5);

        auto fmt = [](double v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4g", v);
            return std::string(buf);
        };
        std::cout << "kernels: " << active_kernels().name << "\n"
                  << "records: " << inputs.n_records() << "  groups: " << inputs.n_groups()
                  << "  parameters: " << inputs.layout.d << "\n"
                  << "value_and_grad: median " << fmt(median) << " ms";
        if (repeats > 1)
            std::cout << "  (p10 " << fmt(pct(0.10)) << ", p90 " << fmt(pct(0.90))
                      << ", n=" << repeats << ")";
        std::cout << "\n"
                  << "per record: "
                  << fmt(median * 1e6 / static_cast<double>(inputs.n_records())) << " ns\n"
                  << "log_posterior at zero: " << csv::format_double(logp) << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}

int cmd_bench_scaling(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
    try {
        ConfigReader reader(load_map(config_path, overrides));
        const std::string out_dir = reader.get_string("output_dir", "out");
        const std::uint64_t seed = reader.get_u64("seed", 1);
        const std::string dims_str =
            reader.get_string("bench.dims", "16,32,64,128,256,512,1024");
        reader.finish();

        std::vector<int> dims;
        std::size_t pos = 0;
        while (pos <= dims_str.size()) {
            std::size_t comma = dims_str.find(',', pos);
            if (comma == std::string::npos) comma = dims_str.size();
            const auto v = csv::parse_int(dims_str.substr(pos, comma - pos));
            if (!v || *v < 1)
                throw std::runtime_error("bench.dims must be a comma-separated list of"
                                         " positive integers");
            dims.push_back(static_cast<int>(*v));
            pos = comma + 1;
        }

        fs::create_directories(out_dir);
        const fs::path csv_path = fs::path(out_dir) / "scaling.csv";
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
        out << "sampler,dim,n_evals,ess,cost,excluded\n";
        for (const SamplerKind kind : {SamplerKind::Rwm, SamplerKind::Mala, SamplerKind::Nuts}) {
            const ScalingResult res = scaling_benchmark(kind, dims, seed);
            for (const ScalingPoint& p : res.points)
                out << to_string(kind) << ',' << p.dim << ',' << p.n_evals << ','
                    << csv::format_double(p.ess) << ',' << csv::format_double(p.cost) << ','
                    << (p.excluded ? '1' : '0') << '\n';
            char slope[32];
            std::snprintf(slope, sizeof slope, "%.3f", res.slope);
            std::cout << to_string(kind) << ": cost ~ d^" << slope << "\n";
        }
        if (!out) throw std::runtime_error("failed writing " + csv_path.string());
        std::cout << "points: " << csv_path.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}

}  // namespace claimcar
