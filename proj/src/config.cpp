#include "claimcar/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace claimcar {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

bool valid_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

[[noreturn]] void fail(const std::string& context, std::size_t line, const std::string& what) {
    throw std::runtime_error(context + ":" + std::to_string(line) + ": " + what);
}

// Strips an unquoted trailing comment and surrounding whitespace; unwraps one
// level of double quotes.
std::string parse_value(std::string_view raw, const std::string& context, std::size_t line) {
    std::string v = trim(raw);
    if (v.empty()) fail(context, line, "empty value");
    if (v.front() == '"') {
        const auto close = v.find('"', 1);
        if (close == std::string::npos) fail(context, line, "unterminated quoted value");
        const std::string rest = trim(std::string_view(v).substr(close + 1));
        if (!rest.empty() && rest.front() != '#')
            fail(context, line, "trailing content after quoted value");
        return v.substr(1, close - 1);
    }
    const auto hash = v.find('#');
    if (hash != std::string::npos) v = trim(std::string_view(v).substr(0, hash));
    if (v.empty()) fail(context, line, "empty value");
    return v;
}

}  // namespace

std::string to_string(BadCellPolicy p) { return p == BadCellPolicy::Abort ? "abort" : "drop"; }

std::string to_string(InitKind k) {
    switch (k) {
        case InitKind::Zeros: return "zeros";
        case InitKind::Random: return "random";
        default: return "optimize";
    }
}

std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::Mala: return "mala";
        case SamplerKind::Rwm: return "rwm";
        default: return "nuts";
    }
}

ConfigMap parse_config_text(std::string_view text, const std::string& context) {
    ConfigMap map;
    map.context = context;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                              : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(context, line_no, "malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty() || !std::all_of(section.begin(), section.end(), valid_key_char))
                fail(context, line_no, "malformed section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(context, line_no, "expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty() || !std::all_of(key.begin(), key.end(), valid_key_char))
            fail(context, line_no, "malformed key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (map.contains(full)) fail(context, line_no, "duplicate key '" + full + "'");
        map.entries[full] = {parse_value(std::string_view(line).substr(eq + 1), context, line_no),
                             line_no};
    }
    return map;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

void apply_override(ConfigMap& map, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw std::runtime_error("override must be key=value: " + std::string(assignment));
    const std::string key = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("override has empty key");
    for (char c : key)
        if (!valid_key_char(c) && c != '.')
            throw std::runtime_error("malformed override key '" + key + "'");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
    map.entries[key] = {value, 0};
}

ConfigReader::ConfigReader(ConfigMap map) : map_(std::move(map)) {
    for (const auto& [key, entry] : map_.entries) consumed_[key] = false;
}

const ConfigEntry* ConfigReader::take(const std::string& key) {
    auto it = map_.entries.find(key);
    if (it == map_.entries.end()) return nullptr;
    consumed_[key] = true;
    return &it->second;
}

std::string ConfigReader::get_string(const std::string& key, std::string fallback) {
    const ConfigEntry* e = take(key);
    return e ? e->value : std::move(fallback);
}

double ConfigReader::get_real(const std::string& key, double fallback) {
    const ConfigEntry* e = take(key);
    if (!e) return fallback;
    double v = 0.0;
    const char* first = e->value.data();
    const char* last = first + e->value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        fail(map_.context, e->line, "key '" + key + "': expected a real number, got '" +
                                        e->value + "'");
    return v;
}

std::int64_t ConfigReader::get_int(const std::string& key, std::int64_t fallback) {
    const ConfigEntry* e = take(key);
    if (!e) return fallback;
    std::int64_t v = 0;
    const char* first = e->value.data();
    const char* last = first + e->value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        fail(map_.context, e->line, "key '" + key + "': expected an integer, got '" +
                                        e->value + "'");
    return v;
}

std::uint64_t ConfigReader::get_u64(const std::string& key, std::uint64_t fallback) {
    const ConfigEntry* e = take(key);
    if (!e) return fallback;
    std::uint64_t v = 0;
    const char* first = e->value.data();
    const char* last = first + e->value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        fail(map_.context, e->line, "key '" + key + "': expected an unsigned integer, got '" +
                                        e->value + "'");
    return v;
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
    const ConfigEntry* e = take(key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    fail(map_.context, e->line, "key '" + key + "': expected true or false, got '" +
                                    e->value + "'");
}

void ConfigReader::finish() const {
    std::string unknown;
    for (const auto& [key, used] : consumed_) {
        if (!used) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty())
        throw std::runtime_error(map_.context + ": unknown config key(s): " + unknown);
}

namespace {

BadCellPolicy parse_bad_cell(const std::string& s) {
    if (s == "abort") return BadCellPolicy::Abort;
    if (s == "drop") return BadCellPolicy::Drop;
    throw std::runtime_error("data.on_bad_cell must be abort or drop, got '" + s + "'");
}

InitKind parse_init(const std::string& s) {
    if (s == "zeros") return InitKind::Zeros;
    if (s == "random") return InitKind::Random;
    if (s == "optimize") return InitKind::Optimize;
    throw std::runtime_error("sampler.init must be zeros, random, or optimize, got '" + s + "'");
}

SamplerKind parse_sampler(const std::string& s) {
    if (s == "nuts") return SamplerKind::Nuts;
    if (s == "mala") return SamplerKind::Mala;
    if (s == "rwm") return SamplerKind::Rwm;
    throw std::runtime_error("sampler.algorithm must be nuts, mala, or rwm, got '" + s + "'");
}

void check(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error("config: " + what);
}

}  // namespace

RunConfig run_config_from_map(ConfigMap map) {
    ConfigReader r(std::move(map));
    RunConfig cfg;

    cfg.seed = r.get_u64("seed", cfg.seed);
    cfg.output_dir = r.get_string("output_dir", cfg.output_dir);
    cfg.threads = static_cast<int>(r.get_int("threads", cfg.threads));

    DataConfig& d = cfg.data;
    d.claims_path = r.get_string("data.claims", "");
    d.cities_path = r.get_string("data.cities", "");
    d.model_map_path = r.get_string("data.model_map", "");
    d.year_floor = static_cast<int>(r.get_int("data.year_floor", d.year_floor));
    d.on_bad_cell = parse_bad_cell(r.get_string("data.on_bad_cell", to_string(d.on_bad_cell)));
    d.standardize_covariates =
        r.get_bool("data.standardize_covariates", d.standardize_covariates);
    ColumnMapping& c = d.columns;
    c.city = r.get_string("data.col_city", c.city);
    c.state = r.get_string("data.col_state", c.state);
    c.year = r.get_string("data.col_year", c.year);
    c.brand = r.get_string("data.col_brand", c.brand);
    c.category = r.get_string("data.col_category", c.category);
    c.model = r.get_string("data.col_model", c.model);
    c.exposure = r.get_string("data.col_exposure", c.exposure);
    c.claims = r.get_string("data.col_claims", c.claims);
    c.latitude = r.get_string("data.col_latitude", c.latitude);
    c.longitude = r.get_string("data.col_longitude", c.longitude);

    cfg.spline.n_interior_knots =
        static_cast<int>(r.get_int("spline.n_interior_knots", cfg.spline.n_interior_knots));
    cfg.spline.degree = static_cast<int>(r.get_int("spline.degree", cfg.spline.degree));

    cfg.spatial.k = static_cast<int>(r.get_int("spatial.k", cfg.spatial.k));
    cfg.spatial.graph_cache = r.get_string("spatial.graph_cache", "");

    SamplerConfig& s = cfg.sampler;
    s.algorithm = parse_sampler(r.get_string("sampler.algorithm", to_string(s.algorithm)));
    s.n_warmup = static_cast<int>(r.get_int("sampler.n_warmup", s.n_warmup));
    s.n_samples = static_cast<int>(r.get_int("sampler.n_samples", s.n_samples));
    s.thin = static_cast<int>(r.get_int("sampler.thin", s.thin));
    s.n_chains = static_cast<int>(r.get_int("sampler.n_chains", s.n_chains));
    s.target_accept = r.get_real("sampler.target_accept", s.target_accept);
    s.max_tree_depth = static_cast<int>(r.get_int("sampler.max_tree_depth", s.max_tree_depth));
    s.init = parse_init(r.get_string("sampler.init", to_string(s.init)));
    s.init_steps = static_cast<int>(r.get_int("sampler.init_steps", s.init_steps));
    s.init_learning_rate = r.get_real("sampler.init_learning_rate", s.init_learning_rate);
    s.parallel_chains = r.get_bool("sampler.parallel_chains", s.parallel_chains);
    s.seed = cfg.seed;

    DiagnosticsConfig& g = cfg.diagnostics;
    g.rhat_max = r.get_real("diagnostics.rhat_max", g.rhat_max);
    g.ess_min = r.get_real("diagnostics.ess_min", g.ess_min);
    g.gate_required = r.get_bool("diagnostics.gate_required", g.gate_required);

    r.finish();

    check(cfg.threads >= 1, "threads must be >= 1");
    check(cfg.spline.n_interior_knots >= 1, "spline.n_interior_knots must be >= 1");
    check(cfg.spline.degree >= 1, "spline.degree must be >= 1");
    check(cfg.spatial.k >= 1, "spatial.k must be >= 1");
    check(s.n_warmup >= 1, "sampler.n_warmup must be >= 1");
    check(s.n_samples >= 1, "sampler.n_samples must be >= 1");
    check(s.thin >= 1, "sampler.thin must be >= 1");
    check(s.n_chains >= 1, "sampler.n_chains must be >= 1");
    check(s.target_accept > 0.0 && s.target_accept < 1.0,
          "sampler.target_accept must be in (0,1)");
    check(s.max_tree_depth >= 1 && s.max_tree_depth <= 15,
          "sampler.max_tree_depth must be in [1,15]");
    check(s.init_steps >= 0, "sampler.init_steps must be >= 0");
    check(s.init_learning_rate >= 0.0, "sampler.init_learning_rate must be >= 0");
    check(g.rhat_max > 1.0, "diagnostics.rhat_max must exceed 1");
    check(g.ess_min > 0.0, "diagnostics.ess_min must be positive");
    return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    ConfigMap map = parse_config_file(path);
    for (const auto& o : overrides) apply_override(map, o);
    return run_config_from_map(std::move(map));
}

std::string config_fingerprint(const ConfigMap& map) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [key, entry] : map.entries) {
        if (key == "output_dir" || key == "threads") continue;
        mix(key);
        mix("=");
        mix(entry.value);
        mix("\n");
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xF];
    buf[16] = '\0';
    return std::string(buf, 16);
}

}  // namespace claimcar
