#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace claimcar {

enum class BadCellPolicy { Abort, Drop };
enum class InitKind { Zeros, Random, Optimize };
enum class SamplerKind { Nuts, Mala, Rwm };

std::string to_string(BadCellPolicy p);
std::string to_string(InitKind k);
std::string to_string(SamplerKind k);

// Column names in the claims and city CSV files.  `state` may be empty, in
// which case the city name alone identifies a city.  If `model` is set (with
// data.model_map), brand/category are derived from the raw model string.
struct ColumnMapping {
    std::string city = "city";
    std::string state = "state";
    std::string year = "vehicle_year";
    std::string brand = "brand";
    std::string category = "category";
    std::string model;
    std::string exposure = "exposure";
    std::string claims = "claims";
    std::string latitude = "latitude";
    std::string longitude = "longitude";
};

struct DataConfig {
    std::string claims_path;
    std::string cities_path;
    std::string model_map_path;
    ColumnMapping columns;
    int year_floor = 1971;
    BadCellPolicy on_bad_cell = BadCellPolicy::Abort;
    bool standardize_covariates = true;
};

struct SplineConfig {
    int n_interior_knots = 7;
    int degree = 3;
};

struct SpatialConfig {
    int k = 5;
    std::string graph_cache;
};

struct SamplerConfig {
    SamplerKind algorithm = SamplerKind::Nuts;
    int n_warmup = 2000;
    int n_samples = 2000;
    int thin = 20;
    int n_chains = 4;
    double target_accept = 0.8;
    int max_tree_depth = 10;
    std::uint64_t seed = 1;
    InitKind init = InitKind::Optimize;
    int init_steps = 200000;
    double init_learning_rate = 1e-3;
    bool parallel_chains = false;
};

struct DiagnosticsConfig {
    double rhat_max = 1.10;
    double ess_min = 35.0;
    bool gate_required = true;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    int threads = 1;
    DataConfig data;
    SplineConfig spline;
    SpatialConfig spatial;
    SamplerConfig sampler;
    DiagnosticsConfig diagnostics;
};

// Raw parsed config: "section.key" (or bare "key" for the top level) -> value
// string, plus the source line for error messages.
struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
};

struct ConfigMap {
    std::map<std::string, ConfigEntry> entries;
    std::string context;

    bool contains(const std::string& key) const { return entries.count(key) != 0; }
};

// Parses the key = value / [section] grammar.  '#' starts a comment outside
// quotes; values may be double-quoted (no escape sequences).
ConfigMap parse_config_text(std::string_view text, const std::string& context);
ConfigMap parse_config_file(const std::string& path);

// Applies a command-line override of the form "section.key=value" or
// "key=value"; the value side is taken verbatim (quotes optional).
void apply_override(ConfigMap& map, std::string_view assignment);

// Typed accessor that tracks consumed keys so finish() can reject unknown
// ones.  All getters throw on malformed values, naming key and line.
class ConfigReader {
public:
    explicit ConfigReader(ConfigMap map);

    std::string get_string(const std::string& key, std::string fallback);
    double get_real(const std::string& key, double fallback);
    std::int64_t get_int(const std::string& key, std::int64_t fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    bool get_bool(const std::string& key, bool fallback);
    bool has(const std::string& key) const { return map_.contains(key); }

    // Throws if any parsed key was never consumed.
    void finish() const;

private:
    const ConfigEntry* take(const std::string& key);

    ConfigMap map_;
    std::map<std::string, bool> consumed_;
};

// Loads, applies overrides, validates invariants, and rejects unknown keys.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig run_config_from_map(ConfigMap map);

// FNV-1a hash over the canonical sorted key=value listing, excluding keys
// that cannot affect results (output_dir, threads).  Stored in the manifest.
std::string config_fingerprint(const ConfigMap& map);

}  // namespace claimcar
