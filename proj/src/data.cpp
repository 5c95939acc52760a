#include "claimcar/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "claimcar/csv.hpp"
#include "claimcar/numeric.hpp"

namespace claimcar {

namespace {

std::string city_key(const std::string& city, const std::string& state) {
    return state.empty() ? city : city + "|" + state;
}

[[noreturn]] void cell_error(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

ModelMap load_model_map(const std::string& path) {
    const csv::Table table = csv::read_file(path);
    const auto c_model = table.require_column("model", path);
    const auto c_brand = table.require_column("brand", path);
    const auto c_category = table.require_column("category", path);
    ModelMap map;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (!map.emplace(row[c_model], std::make_pair(row[c_brand], row[c_category])).second)
            cell_error(path, r + 2, "duplicate model '" + row[c_model] + "'");
    }
    return map;
}

CityTable ingest_city_covariates(const std::string& path, const ColumnMapping& columns,
                                 bool standardize) {
    const csv::Table table = csv::read_file(path);
    const auto c_city = table.require_column(columns.city, path);
    const int c_state = columns.state.empty() ? -1 : static_cast<int>(table.require_column(columns.state, path));
    const auto c_lat = table.require_column(columns.latitude, path);
    const auto c_lon = table.require_column(columns.longitude, path);

    CityTable cities;
    std::vector<std::size_t> covariate_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == c_city || static_cast<int>(c) == c_state || c == c_lat || c == c_lon) continue;
        covariate_cols.push_back(c);
        cities.covariate_names.push_back(table.header[c]);
    }
    cities.M = static_cast<int>(covariate_cols.size());

    const std::size_t J = table.rows.size();
    cities.keys.reserve(J);
    cities.latitude.reserve(J);
    cities.longitude.reserve(J);
    cities.covariates.resize(J * cities.M);
    for (std::size_t r = 0; r < J; ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = r + 2;
        const std::string key = city_key(row[c_city], c_state < 0 ? "" : row[c_state]);
        if (!cities.index.emplace(key, static_cast<std::int32_t>(r)).second)
            cell_error(path, line, "duplicate city '" + key + "'");
        cities.keys.push_back(key);
        const auto lat = csv::parse_double(row[c_lat]);
        const auto lon = csv::parse_double(row[c_lon]);
        if (!lat || !lon) cell_error(path, line, "unparseable coordinate");
        cities.latitude.push_back(*lat);
        cities.longitude.push_back(*lon);
        for (int m = 0; m < cities.M; ++m) {
            const auto v = csv::parse_double(row[covariate_cols[m]]);
            if (!v)
                cell_error(path, line,
                           "unparseable covariate '" + cities.covariate_names[m] + "'");
            cities.covariates[r * cities.M + m] = *v;
        }
    }
    if (J == 0) throw std::runtime_error(path + ": no city rows");

    if (standardize) {
        for (int m = 0; m < cities.M; ++m) {
            Welford w;
            for (std::size_t j = 0; j < J; ++j) w.add(cities.covariates[j * cities.M + m]);
            const double sd = std::sqrt(w.variance());
            if (!(sd > 0.0))
                throw std::runtime_error(path + ": covariate column '" +
                                         cities.covariate_names[m] +
                                         "' is constant; cannot standardize");
            const double mean = w.mean();
            for (std::size_t j = 0; j < J; ++j) {
                double& v = cities.covariates[j * cities.M + m];
                v = (v - mean) / sd;
            }
        }
    }
    return cities;
}

Dataset ingest_policies(const std::string& path, const ColumnMapping& columns, int year_floor,
                        CityTable cities, BadCellPolicy on_bad_cell, const ModelMap* model_map) {
    const csv::Table table = csv::read_file(path);
    const auto c_city = table.require_column(columns.city, path);
    const int c_state =
        columns.state.empty() ? -1 : static_cast<int>(table.require_column(columns.state, path));
    const auto c_year = table.require_column(columns.year, path);
    const auto c_exposure = table.require_column(columns.exposure, path);
    const auto c_claims = table.require_column(columns.claims, path);
    int c_brand = -1, c_category = -1, c_model = -1;
    if (model_map) {
        c_model = static_cast<int>(table.require_column(columns.model, path));
    } else {
        c_brand = static_cast<int>(table.require_column(columns.brand, path));
        c_category = static_cast<int>(table.require_column(columns.category, path));
    }

    Dataset ds;
    ds.cities = std::move(cities);
    ds.year_floor = year_floor;
    ds.report.rows_in = table.rows.size();

    std::unordered_map<std::string, std::int32_t> brand_ix, category_ix;
    auto intern = [](std::unordered_map<std::string, std::int32_t>& ix,
                     std::vector<std::string>& levels, const std::string& s) {
        auto [it, inserted] = ix.emplace(s, static_cast<std::int32_t>(levels.size()));
        if (inserted) levels.push_back(s);
        return it->second;
    };

    int year_max = year_floor;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = r + 2;

        const auto year = csv::parse_int(row[c_year]);
        const auto exposure = csv::parse_double(row[c_exposure]);
        const auto claims = csv::parse_int(row[c_claims]);
        const bool bad = !year || !exposure || !claims || *claims < 0 ||
                         (*exposure != 0.0 && !(*exposure > 0.0));
        if (bad) {
            if (on_bad_cell == BadCellPolicy::Abort)
                cell_error(path, line, "unparseable or invalid numeric cell");
            ++ds.report.dropped_bad_cell;
            continue;
        }
        if (*year < year_floor) {
            ++ds.report.dropped_year;
            continue;
        }
        if (*exposure == 0.0) {
            ++ds.report.dropped_exposure;
            continue;
        }

        std::string brand, category;
        if (model_map) {
            const auto it = model_map->find(row[c_model]);
            if (it == model_map->end()) {
                ++ds.report.dropped_vehicle_type;
                continue;
            }
            brand = it->second.first;
            category = it->second.second;
        } else {
            brand = row[c_brand];
            category = row[c_category];
        }
        if (brand.empty() || category.empty()) {
            ++ds.report.dropped_vehicle_type;
            continue;
        }

        const std::string key = city_key(row[c_city], c_state < 0 ? "" : row[c_state]);
        const auto city_it = ds.cities.index.find(key);
        if (city_it == ds.cities.index.end())
            cell_error(path, line, "city '" + key + "' not present in the city table");

        ds.exposure.push_back(*exposure);
        ds.log_exposure.push_back(std::log(*exposure));
        ds.claims.push_back(static_cast<double>(*claims));
        ds.brand.push_back(intern(brand_ix, ds.brand_levels, brand));
        ds.category.push_back(intern(category_ix, ds.category_levels, category));
        ds.city.push_back(city_it->second);
        ds.year_index.push_back(static_cast<std::int32_t>(*year - year_floor));
        year_max = std::max(year_max, static_cast<int>(*year));
    }
    ds.year_max = year_max;
    ds.report.rows_kept = ds.N();
    if (ds.N() == 0) throw std::runtime_error(path + ": no records survive the row filters");
    return ds;
}

DatasetSummary summarize(const Dataset& dataset) {
    DatasetSummary s;
    s.n_records = dataset.N();

    std::vector<std::size_t> brand_counts(dataset.n_brand(), 0);
    std::vector<std::size_t> category_counts(dataset.n_category(), 0);
    std::map<std::int64_t, std::size_t> hist;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < dataset.N(); ++i) {
        ++brand_counts[dataset.brand[i]];
        ++category_counts[dataset.category[i]];
        const auto y = static_cast<std::int64_t>(dataset.claims[i]);
        ++hist[y];
        if (y == 0) ++zeros;
    }
    s.zero_claim_fraction = static_cast<double>(zeros) / static_cast<double>(dataset.N());
    for (int b = 0; b < dataset.n_brand(); ++b)
        s.brand_counts.emplace_back(dataset.brand_levels[b], brand_counts[b]);
    for (int c = 0; c < dataset.n_category(); ++c)
        s.category_counts.emplace_back(dataset.category_levels[c], category_counts[c]);
    for (const auto& [y, n] : hist) s.claim_histogram.emplace_back(y, n);

    std::vector<double> sorted(dataset.exposure);
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0})
        s.exposure_quantiles.push_back(quantile_sorted(sorted, q));
    return s;
}

std::string ingest_report_json(const Dataset& dataset) {
    const IngestReport& r = dataset.report;
    nlohmann::ordered_json j;
    j["rows_in"] = r.rows_in;
    j["rows_kept"] = r.rows_kept;
    j["dropped"] = {
        {"bad_cell", r.dropped_bad_cell},
        {"year_before_floor", r.dropped_year},
        {"zero_exposure", r.dropped_exposure},
        {"missing_vehicle_type", r.dropped_vehicle_type},
    };
    j["cardinalities"] = {
        {"n_brand", dataset.n_brand()},
        {"n_category", dataset.n_category()},
        {"J", dataset.cities.J()},
        {"M", dataset.cities.M},
    };
    j["year_range"] = {dataset.year_floor, dataset.year_max};
    const DatasetSummary s = summarize(dataset);
    j["zero_claim_fraction"] = s.zero_claim_fraction;
    return j.dump(2) + "\n";
}

}  // namespace claimcar
