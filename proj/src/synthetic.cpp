#include "claimcar/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "claimcar/csv.hpp"
#include "claimcar/diagnostics.hpp"
#include "claimcar/fit.hpp"
#include "claimcar/posterior.hpp"
#include "claimcar/rng.hpp"
#include "claimcar/spatial.hpp"
#include "claimcar/spline.hpp"

namespace claimcar {

namespace {

void validate_spec(const SyntheticSpec& spec) {
    if (spec.n_records < 1) throw std::invalid_argument("synthetic: n_records must be >= 1");
    if (spec.n_cities < 1) throw std::invalid_argument("synthetic: n_cities must be >= 1");
    if (spec.n_cities <= spec.knn_k)
        throw std::invalid_argument("synthetic: n_cities must exceed the k-NN degree");
    if (spec.n_brand < 1 || spec.n_category < 1)
        throw std::invalid_argument("synthetic: brand/category cardinalities must be >= 1");
    if (spec.n_covariates < 0) throw std::invalid_argument("synthetic: n_covariates must be >= 0");
    if (spec.n_years < 1) throw std::invalid_argument("synthetic: n_years must be >= 1");
    if (!(spec.exposure_log_sd >= 0.0))
        throw std::invalid_argument("synthetic: exposure_log_sd must be >= 0");
    if (!(spec.truth_scale_multiplier > 0.0))
        throw std::invalid_argument("synthetic: truth_scale_multiplier must be > 0");
}

std::string label(const char* prefix, int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%s%05d", prefix, index);
    return buf;
}

void fill_block(std::vector<double>& dst, const std::vector<double>& src, int n, const char* name) {
    if (src.empty()) {
        dst.assign(static_cast<std::size_t>(n), 0.0);
    } else if (static_cast<int>(src.size()) == n) {
        dst = src;
    } else {
        throw std::invalid_argument(std::string("synthetic: fixed truth block ") + name +
                                    " has size " + std::to_string(src.size()) + ", expected " +
                                    std::to_string(n));
    }
}

ParameterBlock make_truth(const SyntheticSpec& spec, const ModelInputs& inputs, Rng& rng) {
    const BlockLayout& b = inputs.layout;
    ParameterBlock t;
    if (!spec.truth_from_priors) {
        t = spec.truth;
        fill_block(t.c, spec.truth.c, b.L, "c");
        fill_block(t.v1, spec.truth.v1, b.n_brand, "v1");
        fill_block(t.v2, spec.truth.v2, b.n_category, "v2");
        fill_block(t.gamma, spec.truth.gamma, b.M, "gamma");
        fill_block(t.delta, spec.truth.delta, b.J, "delta");
        fill_block(t.eta, spec.truth.eta, b.J, "eta");
        fill_block(t.xi, spec.truth.xi, b.n_xi(), "xi");
        return t;
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::gamma_distribution<double> gamma2(2.0, 1.0);
    auto half_normal = [&] { return std::abs(normal(rng)) * spec.truth_scale_multiplier; };

    t.sigma_g = half_normal();
    t.sigma_v1 = half_normal();
    t.sigma_v2 = half_normal();
    t.sigma_eps = half_normal();
    t.sigma_xi = half_normal();
    t.phi = std::clamp(unif(rng), 1e-6, 1.0 - 1e-6);
    const double g1 = gamma2(rng), g2 = gamma2(rng);
    t.rho = std::clamp(g1 / (g1 + g2), 1e-6, 1.0 - 1e-6);

    t.c.resize(static_cast<std::size_t>(b.L));
    for (auto& v : t.c) v = t.sigma_g * normal(rng);
    t.v1.resize(static_cast<std::size_t>(b.n_brand));
    for (auto& v : t.v1) v = t.sigma_v1 * normal(rng);
    t.v2.resize(static_cast<std::size_t>(b.n_category));
    for (auto& v : t.v2) v = t.sigma_v2 * normal(rng);
    t.gamma.resize(static_cast<std::size_t>(b.M));
    for (auto& v : t.gamma) v = normal(rng);
    t.delta.resize(static_cast<std::size_t>(b.J));
    for (auto& v : t.delta) v = normal(rng);
    t.eta = sample_car_prior(inputs.graph, t.rho, rng);
    t.xi.resize(static_cast<std::size_t>(b.n_xi()));
    for (auto& v : t.xi) v = t.sigma_xi * normal(rng);
    return t;
}

// Constrained values in layout order, without the unconstrained round trip
// (fixed truths may sit on transform boundaries, e.g. sigma = 0).
std::vector<double> truth_values(const ParameterBlock& t) {
    std::vector<double> out;
    out.reserve(t.c.size() + t.v1.size() + t.v2.size() + t.gamma.size() + t.delta.size() +
                t.eta.size() + t.xi.size() + 7);
    auto append = [&out](const std::vector<double>& v) { out.insert(out.end(), v.begin(), v.end()); };
    append(t.c);
    append(t.v1);
    append(t.v2);
    append(t.gamma);
    append(t.delta);
    append(t.eta);
    append(t.xi);
    out.push_back(t.sigma_g);
    out.push_back(t.sigma_v1);
    out.push_back(t.sigma_v2);
    out.push_back(t.sigma_eps);
    out.push_back(t.sigma_xi);
    out.push_back(t.phi);
    out.push_back(t.rho);
    return out;
}

struct RawRecords {
    std::vector<std::string> city;
    std::vector<int> year;
    std::vector<std::string> brand;
    std::vector<std::string> category;
    std::vector<double> exposure;
};

void write_claims(const std::string& path, const RawRecords& rec, const std::vector<long>& counts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "city,state,vehicle_year,brand,category,exposure,claims\n";
    for (std::size_t i = 0; i < rec.city.size(); ++i) {
        out << rec.city[i] << ",ZZ," << rec.year[i] << ',' << rec.brand[i] << ',' << rec.category[i]
            << ',' << csv::format_double(rec.exposure[i]) << ','
            << (counts.empty() ? 0L : counts[i]) << '\n';
    }
}

int pick_bins(int n_ranks) {
    for (int b : {20, 10, 5, 4, 2})
        if (n_ranks % b == 0 && n_ranks > b) return b;
    return std::min(n_ranks, 20);
}

}  // namespace

SyntheticSpec synthetic_spec_from_map(ConfigMap map) {
    ConfigReader reader(std::move(map));
    SyntheticSpec spec;
    spec.n_records = static_cast<std::size_t>(reader.get_int("synthetic.n_records",
                                                             static_cast<std::int64_t>(spec.n_records)));
    spec.n_cities = static_cast<int>(reader.get_int("synthetic.n_cities", spec.n_cities));
    spec.n_brand = static_cast<int>(reader.get_int("synthetic.n_brand", spec.n_brand));
    spec.n_category = static_cast<int>(reader.get_int("synthetic.n_category", spec.n_category));
    spec.n_covariates = static_cast<int>(reader.get_int("synthetic.n_covariates", spec.n_covariates));
    spec.n_years = static_cast<int>(reader.get_int("synthetic.n_years", spec.n_years));
    spec.knn_k = static_cast<int>(reader.get_int("synthetic.k", spec.knn_k));
    spec.year_floor = static_cast<int>(reader.get_int("synthetic.year_floor", spec.year_floor));
    spec.exposure_log_mean = reader.get_real("synthetic.exposure_log_mean", spec.exposure_log_mean);
    spec.exposure_log_sd = reader.get_real("synthetic.exposure_log_sd", spec.exposure_log_sd);
    spec.seed = reader.get_u64("synthetic.seed", spec.seed);
    spec.truth_from_priors = reader.get_bool("synthetic.truth_from_priors", spec.truth_from_priors);
    spec.truth_scale_multiplier =
        reader.get_real("synthetic.truth_scale_multiplier", spec.truth_scale_multiplier);
    spec.spline.n_interior_knots =
        static_cast<int>(reader.get_int("spline.n_interior_knots", spec.spline.n_interior_knots));
    spec.spline.degree = static_cast<int>(reader.get_int("spline.degree", spec.spline.degree));
    reader.finish();
    validate_spec(spec);
    return spec;
}

SyntheticResult generate(const SyntheticSpec& spec, const std::string& out_dir) {
    validate_spec(spec);
    std::filesystem::create_directories(out_dir);

    SyntheticResult res;
    res.cities_path = out_dir + "/cities.csv";
    res.claims_path = out_dir + "/claims.csv";
    res.truth_path = out_dir + "/truth.json";

    // Cities: coordinates uniform on a rectangle, covariates standard normal.
    Rng rng_city = make_rng(spec.seed, 11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    {
        std::ofstream out(res.cities_path);
        if (!out) throw std::runtime_error("cannot write " + res.cities_path);
        out << "city,state,latitude,longitude";
        for (int m = 0; m < spec.n_covariates; ++m) out << ",x" << (m + 1);
        out << '\n';
        for (int j = 0; j < spec.n_cities; ++j) {
            const double lat = 30.0 + 15.0 * unif(rng_city);
            const double lon = -100.0 + 20.0 * unif(rng_city);
            out << label("c", j) << ",ZZ," << csv::format_double(lat) << ',' << csv::format_double(lon);
            for (int m = 0; m < spec.n_covariates; ++m) out << ',' << csv::format_double(normal(rng_city));
            out << '\n';
        }
    }

    // Records, claims deferred until rates are known.
    Rng rng_rec = make_rng(spec.seed, 12);
    std::uniform_int_distribution<int> pick_city(0, spec.n_cities - 1);
    std::uniform_int_distribution<int> pick_year(spec.year_floor, spec.year_floor + spec.n_years - 1);
    std::uniform_int_distribution<int> pick_brand(0, spec.n_brand - 1);
    std::uniform_int_distribution<int> pick_category(0, spec.n_category - 1);
    RawRecords rec;
    rec.city.reserve(spec.n_records);
    for (std::size_t i = 0; i < spec.n_records; ++i) {
        rec.city.push_back(label("c", pick_city(rng_rec)));
        rec.year.push_back(pick_year(rng_rec));
        rec.brand.push_back(label("b", pick_brand(rng_rec)));
        rec.category.push_back(label("k", pick_category(rng_rec)));
        rec.exposure.push_back(std::exp(spec.exposure_log_mean + spec.exposure_log_sd * normal(rng_rec)));
    }
    write_claims(res.claims_path, rec, {});

    // Dogfood the ingestion path, then compute rates with the shared
    // implementation.
    ColumnMapping cols;
    CityTable cities = ingest_city_covariates(res.cities_path, cols, /*standardize=*/true);
    Dataset ds = ingest_policies(res.claims_path, cols, spec.year_floor, std::move(cities),
                                 BadCellPolicy::Abort, nullptr);
    AdjacencyGraph graph =
        build_knn_graph(ds.cities.latitude, ds.cities.longitude, spec.knn_k);

    SplineBasis widened;
    const SplineBasis* basis_override = nullptr;
    const auto [lo, hi] = std::minmax_element(ds.log_exposure.begin(), ds.log_exposure.end());
    if (*lo == *hi) {
        const std::vector<double> support = {*lo - 0.5, *hi + 0.5};
        widened = build_basis(support, spec.spline.n_interior_knots, spec.spline.degree);
        basis_override = &widened;
    }
    ModelInputs inputs = build_model_inputs(std::move(ds), spec.spline, std::move(graph), 1,
                                            basis_override);

    Rng rng_truth = make_rng(spec.seed, 13);
    res.truth = make_truth(spec, inputs, rng_truth);
    res.rates = predict_rates(res.truth, inputs);

    Rng rng_y = make_rng(spec.seed, 14);
    std::poisson_distribution<long> poisson;
    std::vector<long> counts(spec.n_records);
    for (std::size_t i = 0; i < spec.n_records; ++i)
        counts[i] = poisson(rng_y, std::poisson_distribution<long>::param_type(res.rates[i]));
    write_claims(res.claims_path, rec, counts);

    res.dataset = inputs.data;
    for (std::size_t i = 0; i < spec.n_records; ++i)
        res.dataset.claims[i] = static_cast<double>(counts[i]);

    nlohmann::ordered_json truth_json;
    truth_json["kind"] = "synthetic_truth";
    truth_json["seed"] = spec.seed;
    truth_json["n_records"] = spec.n_records;
    truth_json["n_cities"] = spec.n_cities;
    truth_json["n_brand"] = spec.n_brand;
    truth_json["n_category"] = spec.n_category;
    truth_json["n_covariates"] = spec.n_covariates;
    truth_json["n_years"] = res.dataset.T();
    truth_json["names"] = inputs.layout.parameter_names();
    truth_json["values"] = truth_values(res.truth);
    std::ofstream tj(res.truth_path);
    if (!tj) throw std::runtime_error("cannot write " + res.truth_path);
    tj << truth_json.dump(2) << '\n';

    return res;
}

SbcResult sbc_run(const SyntheticSpec& spec, int n_replicates, const SamplerConfig& sampler_cfg,
                  const DiagnosticsConfig& diag_cfg, const std::string& work_dir) {
    SbcResult res;
    if (n_replicates <= 0) return res;
    res.n_replicates = static_cast<std::size_t>(n_replicates);

    for (int r = 0; r < n_replicates; ++r) {
        SyntheticSpec rep = spec;
        rep.truth_from_priors = true;
        rep.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r));
        const SyntheticResult gen = generate(rep, work_dir + "/rep" + std::to_string(r));

        AdjacencyGraph graph =
            build_knn_graph(gen.dataset.cities.latitude, gen.dataset.cities.longitude, rep.knn_k);
        ModelInputs inputs = build_model_inputs(gen.dataset, rep.spline, std::move(graph));

        SamplerConfig cfg = sampler_cfg;
        cfg.seed = derive_seed(rep.seed, 0x5bc);
        const PosteriorDraws draws = run_fit(inputs, cfg);

        std::vector<ParameterDiagnostic> params(draws.names.size());
        ScalarChains scalar(draws.chains.size());
        for (std::size_t p = 0; p < draws.names.size(); ++p) {
            for (std::size_t c = 0; c < draws.chains.size(); ++c) {
                scalar[c].resize(draws.chains[c].draws.size());
                for (std::size_t i = 0; i < scalar[c].size(); ++i)
                    scalar[c][i] = draws.chains[c].draws[i][p];
            }
            params[p].name = draws.names[p];
            params[p].rhat = split_rhat(scalar);
            params[p].ess = ess(scalar);
        }
        if (!convergence_gate(params, diag_cfg.rhat_max, diag_cfg.ess_min).pass) {
            ++res.n_excluded;
            continue;
        }

        const std::vector<double> theta_truth = to_unconstrained(gen.truth, inputs.layout);
        if (res.names.empty()) {
            res.names = draws.names;
            res.ranks.resize(res.names.size());
            std::size_t kept = 0;
            for (const auto& c : draws.chains) kept += c.draws.size();
            res.n_ranks = static_cast<int>(kept) + 1;
        }
        for (std::size_t p = 0; p < res.names.size(); ++p) {
            int rank = 0;
            for (const auto& chain : draws.chains)
                for (const auto& draw : chain.draws)
                    if (draw[p] < theta_truth[p]) ++rank;
            res.ranks[p].push_back(rank);
        }
    }

    const std::size_t n_valid = res.ranks.empty() ? 0 : res.ranks.front().size();
    if (n_valid == 0) return res;

    const int bins = pick_bins(res.n_ranks);
    std::vector<double> bin_prob(static_cast<std::size_t>(bins), 0.0);
    for (int v = 0; v < res.n_ranks; ++v)
        bin_prob[static_cast<std::size_t>(static_cast<long>(v) * bins / res.n_ranks)] +=
            1.0 / res.n_ranks;

    const boost::math::chi_squared chi2(bins - 1);
    std::size_t below = 0;
    for (const auto& ranks : res.ranks) {
        std::vector<double> observed(static_cast<std::size_t>(bins), 0.0);
        for (const int v : ranks)
            observed[static_cast<std::size_t>(static_cast<long>(v) * bins / res.n_ranks)] += 1.0;
        double stat = 0.0;
        for (int b = 0; b < bins; ++b) {
            const double expected = static_cast<double>(n_valid) * bin_prob[static_cast<std::size_t>(b)];
            const double diff = observed[static_cast<std::size_t>(b)] - expected;
            stat += diff * diff / expected;
        }
        const double p = boost::math::cdf(boost::math::complement(chi2, stat));
        res.p_values.push_back(p);
        if (p < 0.05) ++below;
    }
    res.frac_below_05 = static_cast<double>(below) / static_cast<double>(res.p_values.size());
    return res;
}

}  // namespace claimcar
