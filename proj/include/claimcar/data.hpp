#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "claimcar/config.hpp"

namespace claimcar {

// One row per city; covariates standardized column-wise (mean 0, sample
// variance 1) unless standardization is disabled.
struct CityTable {
    std::vector<std::string> keys;  // "city" or "city|state"
    std::vector<double> latitude;
    std::vector<double> longitude;
    std::vector<std::string> covariate_names;
    int M = 0;
    std::vector<double> covariates;  // J x M, row-major
    std::unordered_map<std::string, std::int32_t> index;

    int J() const { return static_cast<int>(keys.size()); }
    double z(int j, int m) const { return covariates[static_cast<std::size_t>(j) * M + m]; }
};

struct IngestReport {
    std::size_t rows_in = 0;
    std::size_t rows_kept = 0;
    std::size_t dropped_bad_cell = 0;
    std::size_t dropped_year = 0;
    std::size_t dropped_exposure = 0;
    std::size_t dropped_vehicle_type = 0;
};

// Policy records in structure-of-arrays form, plus the categorical level
// tables (dense indices in first-appearance order over kept rows).
struct Dataset {
    std::vector<double> exposure;
    std::vector<double> log_exposure;
    std::vector<double> claims;  // counts, stored as doubles for the kernels
    std::vector<std::int32_t> brand;
    std::vector<std::int32_t> category;
    std::vector<std::int32_t> city;
    std::vector<std::int32_t> year_index;  // vehicle_year - year_floor

    std::vector<std::string> brand_levels;
    std::vector<std::string> category_levels;

    CityTable cities;
    int year_floor = 0;
    int year_max = 0;
    IngestReport report;

    std::size_t N() const { return exposure.size(); }
    int T() const { return year_max - year_floor + 1; }
    int n_brand() const { return static_cast<int>(brand_levels.size()); }
    int n_category() const { return static_cast<int>(category_levels.size()); }
};

// model string -> (brand, category); loaded from a CSV with columns
// model,brand,category.  Rows whose model is absent from the table count as
// missing vehicle type.
using ModelMap = std::unordered_map<std::string, std::pair<std::string, std::string>>;
ModelMap load_model_map(const std::string& path);

CityTable ingest_city_covariates(const std::string& path, const ColumnMapping& columns,
                                 bool standardize);

// Reads the claims CSV and applies the row filters in the documented order:
// unparseable cell (policy-dependent), year < year_floor, exposure == 0,
// missing vehicle type.  Every kept record must reference a known city.
Dataset ingest_policies(const std::string& path, const ColumnMapping& columns, int year_floor,
                        CityTable cities, BadCellPolicy on_bad_cell,
                        const ModelMap* model_map = nullptr);

struct DatasetSummary {
    std::size_t n_records = 0;
    double zero_claim_fraction = 0.0;
    std::vector<std::pair<std::string, std::size_t>> brand_counts;
    std::vector<std::pair<std::string, std::size_t>> category_counts;
    std::vector<std::pair<std::int64_t, std::size_t>> claim_histogram;
    std::vector<double> exposure_quantiles;  // min, q25, median, q75, max
};

DatasetSummary summarize(const Dataset& dataset);

// JSON document with drop counts, cardinalities, and the year range.
std::string ingest_report_json(const Dataset& dataset);

}  // namespace claimcar
