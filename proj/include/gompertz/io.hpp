#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gompertz/bootstrap.hpp"
#include "gompertz/error.hpp"
#include "gompertz/inference.hpp"
#include "gompertz/model.hpp"
#include "gompertz/numeric/kde.hpp"
#include "gompertz/simulate.hpp"
#include "gompertz/therapy.hpp"

namespace gompertz::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting and parsing
// ---------------------------------------------------------------------------

/// Decimal with 17 significant digits; parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t k = line.find(sep, start);
        if (k == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, k - start));
        start = k + 1;
    }
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

/// Provenance lines written as '#' comments at the top of every artifact.
struct Provenance {
    std::uint64_t seed = 0;
    std::string config;  // effective configuration, compact JSON

    void write(std::ostream& os) const {
        os << "# seed = " << seed << '\n';
        if (!config.empty()) os << "# config = " << config << '\n';
    }
};

// ---------------------------------------------------------------------------
// Panel CSV: header time,subject_1,...,subject_d; one row per time
// ---------------------------------------------------------------------------

inline void write_panel_csv(std::ostream& os, const PathPanel& panel, const Provenance* prov = nullptr) {
    if (prov) prov->write(os);
    os << "time";
    for (std::size_t i = 0; i < panel.subjects(); ++i) os << ",subject_" << i + 1;
    os << '\n';
    for (std::size_t j = 0; j < panel.times(); ++j) {
        os << format_double(panel.design.grid[j]);
        for (std::size_t i = 0; i < panel.subjects(); ++i) os << ',' << format_double(panel.values[i][j]);
        os << '\n';
    }
}

inline PathPanel read_panel_csv(std::istream& is, const std::string& source = "panel") {
    auto fail = [&](std::size_t line, std::size_t col, const std::string& what) {
        std::ostringstream os;
        os << source << ": line " << line;
        if (col > 0) os << ", column " << col;
        os << ": " << what;
        throw ValidationError(os.str());
    };
    std::string line;
    std::size_t lineno = 0;
    std::size_t d = 0;
    bool have_header = false;
    PathPanel panel;
    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split(line, ',');
        if (!have_header) {
            if (trim(cells[0]) != "time") fail(lineno, 1, "header must start with 'time'");
            if (cells.size() < 2) fail(lineno, 0, "header names no subjects");
            for (std::size_t k = 1; k < cells.size(); ++k)
                if (trim(cells[k]) != "subject_" + std::to_string(k))
                    fail(lineno, k + 1, "expected header 'subject_" + std::to_string(k) + "'");
            d = cells.size() - 1;
            have_header = true;
            continue;
        }
        if (cells.size() != d + 1) {
            std::ostringstream os;
            os << "ragged row: expected " << d + 1 << " cells, found " << cells.size();
            fail(lineno, 0, os.str());
        }
        const auto t = parse_double(cells[0]);
        if (!t || !std::isfinite(*t)) fail(lineno, 1, "time is not a finite number");
        if (!times.empty() && !(*t > times.back())) fail(lineno, 1, "times must be strictly increasing");
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) {
            const auto v = parse_double(cells[k + 1]);
            if (!v || !std::isfinite(*v) || !(*v > 0.0))
                fail(lineno, k + 2, "value of subject_" + std::to_string(k + 1) + " is not a finite positive number");
            row[k] = *v;
        }
        times.push_back(*t);
        rows.push_back(std::move(row));
    }
    if (!have_header) fail(lineno, 0, "missing header");
    if (times.size() < 2) fail(lineno, 0, "at least two observation times are required");
    const double x0 = rows[0][0];
    for (std::size_t k = 1; k < d; ++k)
        if (rows[0][k] != x0) fail(0, k + 2, "all subjects must share the initial value (degenerate initial law)");
    panel.design.grid = std::move(times);
    panel.design.x0 = x0;
    panel.values.assign(d, std::vector<double>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t i = 0; i < d; ++i) panel.values[i][j] = rows[j][i];
    panel.label = source;
    panel.validate();
    return panel;
}

inline PathPanel read_panel_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open panel file: " + path.string());
    return read_panel_csv(in, path.string());
}

inline void write_panel_csv(const std::filesystem::path& path, const PathPanel& panel,
                            const Provenance* prov = nullptr) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write panel file: " + path.string());
    write_panel_csv(out, panel, prov);
}

// ---------------------------------------------------------------------------
// Key = value files and numeric tables
// ---------------------------------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline void write_key_values(std::ostream& os, const KeyValues& kv, const Provenance* prov = nullptr) {
    if (prov) prov->write(os);
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

inline KeyValues read_key_values(std::istream& is, const std::string& source = "key-value file") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line.front() == '#') continue;
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos)
            throw ValidationError(source + ": line " + std::to_string(lineno) + ": expected 'key = value'");
        kv.emplace_back(trim(std::string_view(line).substr(0, eq)), std::string(line.substr(eq + 3)));
    }
    return kv;
}

inline std::optional<std::string> lookup(const KeyValues& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    return std::nullopt;
}

/// Numeric table with named columns.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::vector<double> column(const std::string& name) const {
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == name) {
                std::vector<double> out;
                out.reserve(rows.size());
                for (const auto& r : rows) out.push_back(r[c]);
                return out;
            }
        throw ValidationError("table has no column '" + name + "'");
    }
};

inline void write_table(std::ostream& os, const Table& t, const Provenance* prov = nullptr) {
    if (prov) prov->write(os);
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_double(r[c]);
        os << '\n';
    }
}

/// Reads a table; cells may be "nan".
inline Table read_table(std::istream& is, const std::string& source = "table") {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split(line, ',');
        if (t.columns.empty()) {
            for (auto c : cells) t.columns.push_back(trim(c));
            continue;
        }
        if (cells.size() != t.columns.size())
            throw ValidationError(source + ": line " + std::to_string(lineno) + ": ragged row");
        std::vector<double> r;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string cell = trim(cells[c]);
            if (cell == "nan" || cell == "-nan") {
                r.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            const auto v = parse_double(cell);
            if (!v)
                throw ValidationError(source + ": line " + std::to_string(lineno) + ", column " +
                                      std::to_string(c + 1) + ": not a number");
            r.push_back(*v);
        }
        t.rows.push_back(std::move(r));
    }
    if (t.columns.empty()) throw ValidationError(source + ": missing header");
    return t;
}

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& w) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    w(out);
    if (!out) throw NumericError("write failed: " + path.string());
}

template <typename Reader>
auto read_file(const std::filesystem::path& path, Reader&& r) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return r(in, path.string());
}

// ---------------------------------------------------------------------------
// Test result files
// ---------------------------------------------------------------------------

inline KeyValues test_result_fields(const TestResult& t) {
    std::ostringstream reps;
    for (std::size_t l = 0; l < t.replicates.size(); ++l) reps << (l ? " " : "") << format_double(t.replicates[l]);
    return {{"target", to_string(t.hypothesis.target)},
            {"group", std::to_string(t.hypothesis.group)},
            {"h", t.hypothesis.h.describe()},
            {"statistic", format_double(t.statistic)},
            {"p_value", format_double(t.p_value)},
            {"m", std::to_string(t.m)},
            {"test_seed", std::to_string(t.seed)},
            {"level", format_double(t.level)},
            {"decision", t.rejected ? "reject" : "accept"},
            {"retries", std::to_string(t.retries)},
            {"replicates", reps.str()}};
}

/// Replicate statistics stored in a test result file.
inline std::vector<double> parse_replicates(const KeyValues& kv) {
    const auto s = lookup(kv, "replicates");
    if (!s) throw ValidationError("test result has no replicates");
    std::vector<double> out;
    std::istringstream is(*s);
    std::string tok;
    while (is >> tok) {
        const auto v = parse_double(tok);
        if (!v) throw ValidationError("test result: bad replicate value '" + tok + "'");
        out.push_back(*v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration (JSON)
// ---------------------------------------------------------------------------

struct GroupConfig {
    std::optional<std::filesystem::path> panel;  // ingest from CSV ...
    std::size_t paths = 25;                      // ... or simulate this many paths
    TherapyProfile C = TherapyProfile::zero(Role::C);
    TherapyProfile D = TherapyProfile::zero(Role::D);
    TherapyProfile V = TherapyProfile::one(Role::V);
};

struct RunConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    StudyDesign design = StudyDesign::uniform(0.0, 50.0, 51, 1.0);
    ModelParams params{0.5, 0.2, 0.01};
    GroupConfig control, g1, g2;
    Scheme scheme = Scheme::ExactTransition;
    int euler_substeps = 16;
    FitOptions fit{};
    std::size_t bootstrap_m = 1500;
    double level = 0.05;
    numeric::BandwidthRule bandwidth = numeric::BandwidthRule::Silverman;
    std::size_t replications = 10;

    [[nodiscard]] const GroupConfig& group(int k) const { return k == 0 ? control : k == 1 ? g1 : g2; }
    [[nodiscard]] bool simulated() const { return !control.panel && !g1.panel && !g2.panel; }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
}

inline double number(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
    if (!j.at(key).is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
    return j.at(key).get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
    return j.contains(key) ? number(j, key, where) : fallback;
}

inline std::size_t count_or(const json& j, const std::string& key, std::size_t fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError(where + ": '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace detail

inline TherapyProfile profile_from_json(const json& j, Role role, const std::string& where) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "zero") return TherapyProfile::zero(role);
        if (s == "one") return TherapyProfile::one(role);
        throw ValidationError(where + ": unknown profile '" + s + "'");
    }
    if (j.is_number()) return TherapyProfile::constant(role, j.get<double>());
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw ValidationError(where + ": profile needs a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    using detail::check_keys;
    using detail::number;
    if (kind == "zero" || kind == "one") {
        check_keys(j, where, {"kind"});
        return kind == "zero" ? TherapyProfile::zero(role) : TherapyProfile::one(role);
    }
    if (kind == "constant") {
        check_keys(j, where, {"kind", "value"});
        return TherapyProfile::constant(role, number(j, "value", where));
    }
    if (kind == "linear") {
        check_keys(j, where, {"kind", "slope", "intercept"});
        return TherapyProfile::linear(role, number(j, "slope", where), detail::number_or(j, "intercept", 0.0, where));
    }
    if (kind == "rational_bump") {
        check_keys(j, where, {"kind", "p", "q", "r"});
        return TherapyProfile::rational_bump(role, number(j, "p", where), number(j, "q", where), number(j, "r", where));
    }
    if (kind == "lognormal_offset_squared") {
        check_keys(j, where, {"kind", "a", "b", "mu", "s2"});
        return TherapyProfile::lognormal_offset_squared(role, number(j, "a", where), number(j, "b", where),
                                                        number(j, "mu", where), number(j, "s2", where));
    }
    if (kind == "grid_spline") {
        check_keys(j, where, {"kind", "knots", "values"});
        const auto k = j.at("knots").get<std::vector<double>>();
        const auto v = j.at("values").get<std::vector<double>>();
        return TherapyProfile::grid_spline(role, k, v);
    }
    throw ValidationError(where + ": unknown profile kind '" + kind + "'");
}

inline json profile_to_json(const TherapyProfile& p) {
    return std::visit(
        [](const auto& k) -> json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, profile::Zero>) return {{"kind", "zero"}};
            else if constexpr (std::is_same_v<K, profile::One>) return {{"kind", "one"}};
            else if constexpr (std::is_same_v<K, profile::Constant>) return {{"kind", "constant"}, {"value", k.value}};
            else if constexpr (std::is_same_v<K, profile::Linear>)
                return {{"kind", "linear"}, {"slope", k.slope}, {"intercept", k.intercept}};
            else if constexpr (std::is_same_v<K, profile::RationalBump>)
                return {{"kind", "rational_bump"}, {"p", k.p}, {"q", k.q}, {"r", k.r}};
            else if constexpr (std::is_same_v<K, profile::LognormalOffsetSquared>)
                return {{"kind", "lognormal_offset_squared"}, {"a", k.a}, {"b", k.b}, {"mu", k.mu}, {"s2", k.s2}};
            else
                return {{"kind", "grid_spline"}, {"knots", k.spline.knots()}, {"values", k.spline.values()}};
        },
        p.kind());
}

inline Ordering parse_ordering(const std::string& s) {
    if (s == "apf") return Ordering::AntiProliferativeFirst;
    if (s == "dif") return Ordering::DeathInducedFirst;
    throw ValidationError("ordering must be 'apf' or 'dif', got '" + s + "'");
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "exact") return Scheme::ExactTransition;
    if (s == "euler") return Scheme::EulerMaruyama;
    throw ValidationError("scheme must be 'exact' or 'euler', got '" + s + "'");
}

inline RelationForm parse_relation_form(const std::string& s) {
    if (s == "m2") return RelationForm::M2;
    if (s == "m1u") return RelationForm::M1U;
    throw ValidationError("relation form must be 'm2' or 'm1u', got '" + s + "'");
}

inline numeric::BandwidthRule parse_bandwidth(const std::string& s) {
    if (s == "silverman") return numeric::BandwidthRule::Silverman;
    if (s == "sheather-jones") return numeric::BandwidthRule::SheatherJones;
    throw ValidationError("bandwidth must be 'silverman' or 'sheather-jones', got '" + s + "'");
}

namespace detail {

inline SeriesSmoothing series_from_json(const json& j, SeriesSmoothing base, const std::string& where) {
    check_keys(j, where, {"span", "degree", "robustness_iterations", "gcv_span"});
    base.loess.span = number_or(j, "span", base.loess.span, where);
    base.loess.degree = static_cast<int>(count_or(j, "degree", static_cast<std::size_t>(base.loess.degree), where));
    base.loess.robustness_iterations = static_cast<int>(
        count_or(j, "robustness_iterations", static_cast<std::size_t>(base.loess.robustness_iterations), where));
    if (j.contains("gcv_span")) base.gcv_span = j.at("gcv_span").get<bool>();
    if (!(base.loess.span > 0.0 && base.loess.span <= 1.0)) throw ValidationError(where + ": span must lie in (0, 1]");
    if (base.loess.degree != 1 && base.loess.degree != 2) throw ValidationError(where + ": degree must be 1 or 2");
    return base;
}

inline json series_to_json(const SeriesSmoothing& s) {
    return {{"span", s.loess.span},
            {"degree", s.loess.degree},
            {"robustness_iterations", s.loess.robustness_iterations},
            {"gcv_span", s.gcv_span}};
}

inline GroupConfig group_from_json(const json& j, const std::string& where, const std::filesystem::path& base,
                                   bool control) {
    if (control) check_keys(j, where, {"panel", "paths"});
    else check_keys(j, where, {"panel", "paths", "C", "D", "V"});
    GroupConfig g;
    if (j.contains("panel")) {
        if (j.contains("paths") || j.contains("C") || j.contains("D") || j.contains("V"))
            throw ValidationError(where + ": give either 'panel' or simulation inputs, not both");
        std::filesystem::path p = j.at("panel").get<std::string>();
        if (p.is_relative()) p = base / p;
        if (!std::filesystem::exists(p)) throw ValidationError(where + ": panel file does not exist: " + p.string());
        g.panel = p;
        return g;
    }
    g.paths = count_or(j, "paths", 25, where);
    if (g.paths < 2) throw ValidationError(where + ": at least two paths are required");
    if (j.contains("C")) g.C = profile_from_json(j.at("C"), Role::C, where + ".C");
    if (j.contains("D")) g.D = profile_from_json(j.at("D"), Role::D, where + ".D");
    if (j.contains("V")) g.V = profile_from_json(j.at("V"), Role::V, where + ".V");
    return g;
}

inline json group_to_json(const GroupConfig& g, bool control) {
    if (g.panel) return {{"panel", g.panel->generic_string()}};
    json j{{"paths", g.paths}};
    if (!control) {
        j["C"] = profile_to_json(g.C);
        j["D"] = profile_to_json(g.D);
        j["V"] = profile_to_json(g.V);
    }
    return j;
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = ".") {
    using namespace detail;
    check_keys(j, "config", {"name", "seed", "ordering", "design", "params", "groups", "simulation", "smoothing",
                             "bootstrap", "study"});
    RunConfig c;
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    c.seed = count_or(j, "seed", 1, "config");
    if (j.contains("ordering")) c.fit.ordering = parse_ordering(j.at("ordering").get<std::string>());
    if (j.contains("design")) {
        const json& d = j.at("design");
        check_keys(d, "design", {"t0", "T", "points", "x0", "grid"});
        const double x0 = number_or(d, "x0", 1.0, "design");
        if (d.contains("grid")) {
            if (d.contains("t0") || d.contains("T") || d.contains("points"))
                throw ValidationError("design: give either 'grid' or 't0'/'T'/'points'");
            c.design = StudyDesign{d.at("grid").get<std::vector<double>>(), x0};
        } else {
            c.design = StudyDesign::uniform(number_or(d, "t0", 0.0, "design"), number_or(d, "T", 50.0, "design"),
                                            count_or(d, "points", 51, "design"), x0);
        }
    }
    c.design.validate();
    if (j.contains("params")) {
        const json& p = j.at("params");
        check_keys(p, "params", {"alpha", "beta", "sigma"});
        c.params = {number(p, "alpha", "params"), number(p, "beta", "params"), number(p, "sigma", "params")};
    }
    c.params.validate();
    if (j.contains("groups")) {
        const json& g = j.at("groups");
        check_keys(g, "groups", {"control", "g1", "g2"});
        if (g.contains("control")) c.control = group_from_json(g.at("control"), "groups.control", base_dir, true);
        if (g.contains("g1")) c.g1 = group_from_json(g.at("g1"), "groups.g1", base_dir, false);
        if (g.contains("g2")) c.g2 = group_from_json(g.at("g2"), "groups.g2", base_dir, false);
    }
    for (const GroupConfig* g : {&c.g1, &c.g2}) {
        if (g->panel) continue;
        g->C.validate(c.design.grid);
        g->D.validate(c.design.grid);
        g->V.validate(c.design.grid);
    }
    if (j.contains("simulation")) {
        const json& s = j.at("simulation");
        check_keys(s, "simulation", {"scheme", "euler_substeps"});
        if (s.contains("scheme")) c.scheme = parse_scheme(s.at("scheme").get<std::string>());
        c.euler_substeps = static_cast<int>(count_or(s, "euler_substeps", 16, "simulation"));
        if (c.euler_substeps < 1) throw ValidationError("simulation: euler_substeps must be >= 1");
    }
    if (j.contains("smoothing")) {
        const json& s = j.at("smoothing");
        check_keys(s, "smoothing", {"smooth", "relation_form", "rate", "variance", "span_candidates",
                                    "denominator_guard", "variance_floor"});
        if (s.contains("smooth")) c.fit.smoothing.smooth = s.at("smooth").get<bool>();
        if (s.contains("relation_form"))
            c.fit.relation.form = parse_relation_form(s.at("relation_form").get<std::string>());
        if (s.contains("rate")) c.fit.smoothing.rate = series_from_json(s.at("rate"), c.fit.smoothing.rate, "smoothing.rate");
        if (s.contains("variance"))
            c.fit.smoothing.variance = series_from_json(s.at("variance"), c.fit.smoothing.variance, "smoothing.variance");
        if (s.contains("span_candidates"))
            c.fit.smoothing.span_candidates = s.at("span_candidates").get<std::vector<double>>();
        c.fit.relation.denominator_guard = number_or(s, "denominator_guard", c.fit.relation.denominator_guard, "smoothing");
        c.fit.relation.variance_floor = number_or(s, "variance_floor", c.fit.relation.variance_floor, "smoothing");
    }
    if (j.contains("bootstrap")) {
        const json& b = j.at("bootstrap");
        check_keys(b, "bootstrap", {"m", "level", "bandwidth"});
        c.bootstrap_m = count_or(b, "m", c.bootstrap_m, "bootstrap");
        c.level = number_or(b, "level", c.level, "bootstrap");
        if (b.contains("bandwidth")) c.bandwidth = parse_bandwidth(b.at("bandwidth").get<std::string>());
    }
    if (c.bootstrap_m < 1) throw ValidationError("bootstrap: m must be positive");
    if (!(c.level > 0.0 && c.level < 1.0)) throw ValidationError("bootstrap: level must lie in (0, 1)");
    if (j.contains("study")) {
        const json& s = j.at("study");
        check_keys(s, "study", {"replications"});
        c.replications = count_or(s, "replications", c.replications, "study");
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    try {
        return parse_run_config(j, path.parent_path());
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
}

/// Effective configuration as JSON (round-trips through parse_run_config).
inline json to_json(const RunConfig& c) {
    json groups{{"control", detail::group_to_json(c.control, true)},
                {"g1", detail::group_to_json(c.g1, false)},
                {"g2", detail::group_to_json(c.g2, false)}};
    return {{"name", c.name},
            {"seed", c.seed},
            {"ordering", to_string(c.fit.ordering)},
            {"design", {{"grid", c.design.grid}, {"x0", c.design.x0}}},
            {"params", {{"alpha", c.params.alpha}, {"beta", c.params.beta}, {"sigma", c.params.sigma}}},
            {"groups", groups},
            {"simulation",
             {{"scheme", c.scheme == Scheme::ExactTransition ? "exact" : "euler"}, {"euler_substeps", c.euler_substeps}}},
            {"smoothing",
             {{"smooth", c.fit.smoothing.smooth},
              {"relation_form", c.fit.relation.form == RelationForm::M2 ? "m2" : "m1u"},
              {"rate", detail::series_to_json(c.fit.smoothing.rate)},
              {"variance", detail::series_to_json(c.fit.smoothing.variance)},
              {"span_candidates", c.fit.smoothing.span_candidates},
              {"denominator_guard", c.fit.relation.denominator_guard},
              {"variance_floor", c.fit.relation.variance_floor}}},
            {"bootstrap",
             {{"m", c.bootstrap_m},
              {"level", c.level},
              {"bandwidth", c.bandwidth == numeric::BandwidthRule::Silverman ? "silverman" : "sheather-jones"}}},
            {"study", {{"replications", c.replications}}}};
}

/// Model that generates group k (0 = control) under the configured truth.
inline ModelSpec group_truth(const RunConfig& c, int k) {
    ModelSpec m{c.params};
    if (k > 0) {
        const GroupConfig& g = c.group(k);
        m.C = g.C;
        m.D = g.D;
        m.V = g.V;
    }
    return m;
}

/// Panel for group k: read from its file, or simulated from substream
/// (seed, k) of the given base seed.
inline PathPanel group_panel(const RunConfig& c, int k, std::uint64_t seed) {
    const GroupConfig& g = c.group(k);
    static const char* labels[] = {"control", "g1", "g2"};
    if (g.panel) {
        PathPanel p = read_panel_csv(*g.panel);
        p.label = labels[k];
        return p;
    }
    SimulationConfig sc;
    sc.n_paths = g.paths;
    sc.scheme = c.scheme;
    sc.euler_substeps = c.euler_substeps;
    sc.seed = derive_seed(seed, {static_cast<std::uint64_t>(k)});
    PathPanel p = simulate(group_truth(c, k), c.design, sc);
    p.label = labels[k];
    return p;
}

/// Grid MSEs of the fitted functions and of the fitted mean/variance curves of
/// X against the configured truth, in the order of kMseNames.
inline const std::vector<std::string> kMseNames{"C", "V1", "D", "V2", "E_X1", "Var_X1", "E_X2", "Var_X2"};

inline std::vector<double> fit_mse(const RunConfig& c, const FitResult& f) {
    gompertz::detail::require(c.simulated(), "fit_mse: needs a simulated design");
    const auto& g = c.design.grid;
    const bool apf = c.fit.ordering == Ordering::AntiProliferativeFirst;
    const TherapyProfile& trueC = apf ? c.g1.C : c.g2.C;
    const TherapyProfile& trueD = apf ? c.g2.D : c.g1.D;
    const auto [e1, v1] = mean_variance_X(theoretical_moments(group_truth(c, 1), c.design));
    const auto [e2, v2] = mean_variance_X(theoretical_moments(group_truth(c, 2), c.design));
    const auto [fe1, fv1] = mean_variance_X(theoretical_moments(f.group_model(1), c.design));
    const auto [fe2, fv2] = mean_variance_X(theoretical_moments(f.group_model(2), c.design));
    return {mse_curve(f.series(Role::C).smoothed, trueC.sample(g)),
            mse_curve(f.g1.variance.smoothed, c.g1.V.sample(g)),
            mse_curve(f.series(Role::D).smoothed, trueD.sample(g)),
            mse_curve(f.g2.variance.smoothed, c.g2.V.sample(g)),
            mse_curve(fe1, e1),
            mse_curve(fv1, v1),
            mse_curve(fe2, e2),
            mse_curve(fv2, v2)};
}

}  // namespace gompertz::io
