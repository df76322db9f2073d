#pragma once

#include "hodi/market.hpp"
#include "hodi/system_case.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hodi {

using Json = nlohmann::ordered_json;

/// Parsed case plus the defaults that were filled in (for the provenance header).
struct ParsedCase {
    SystemCase system;
    std::vector<std::string> defaults_applied;
};

namespace detail {

/// Object reader that tracks the field path and rejects unknown keys.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j.is_object()) {
            fail("expected an object");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw Error(ErrorKind::InvalidInput, "case file: " + (path_.empty() ? std::string("<root>") : path_) + ": " + msg);
    }
    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const
    {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    const Json& raw(const std::string& key) const
    {
        used_.insert(key);
        if (!j_.contains(key)) {
            fail("missing required field '" + key + "'");
        }
        return j_.at(key);
    }
    double number(const std::string& key) const
    {
        const Json& v = raw(key);
        if (!v.is_number()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected a number");
        }
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
    int integer(const std::string& key) const
    {
        const Json& v = raw(key);
        if (!v.is_number_integer()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected an integer");
        }
        return v.get<int>();
    }
    std::string string(const std::string& key) const
    {
        const Json& v = raw(key);
        if (!v.is_string()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected a string");
        }
        return v.get<std::string>();
    }
    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key)) {
            return fallback;
        }
        const Json& v = raw(key);
        if (!v.is_boolean()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected true or false");
        }
        return v.get<bool>();
    }
    const Json& array(const std::string& key) const
    {
        const Json& v = raw(key);
        if (!v.is_array()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected an array");
        }
        return v;
    }
    Range range(const std::string& key) const
    {
        const Json& v = raw(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw Error(ErrorKind::InvalidInput, "case file: " + at(key) + ": expected [min, max]");
        }
        return {v[0].get<double>(), v[1].get<double>()};
    }
    /// Call after reading: any key not consumed is a schema violation.
    void finish() const
    {
        for (const auto& [k, v] : j_.items()) {
            if (!used_.count(k)) {
                fail("unknown field '" + k + "'");
            }
        }
    }

private:
    const Json& j_;
    std::string path_;
    mutable std::set<std::string> used_;
};

inline std::string indexed(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline Bus parse_bus(const Json& j, const std::string& path)
{
    Fields f(j, path);
    Bus b;
    b.id = f.integer("id");
    const std::string kind = f.string("type");
    if (kind == "generator") {
        b.kind = BusKind::Generator;
    } else if (kind == "load") {
        b.kind = BusKind::Load;
    } else {
        f.fail("type must be 'generator' or 'load'");
    }
    b.voltage = f.number("voltage", 1.0);
    b.angle = f.number("angle_rad", 0.0);
    b.load = f.number("load_mw", 0.0);
    f.finish();
    return b;
}

inline Json bus_json(const Bus& b)
{
    return Json{{"id", b.id}, {"type", to_string(b.kind)}, {"voltage", b.voltage}, {"angle_rad", b.angle}, {"load_mw", b.load}};
}

inline UnitKind parse_kind(const Fields& f, const std::string& s)
{
    if (s == "SG") {
        return UnitKind::SG;
    }
    if (s == "GFM") {
        return UnitKind::GFM;
    }
    if (s == "GFL") {
        return UnitKind::GFL;
    }
    f.fail("type must be SG, GFM or GFL");
}

inline GeneratorUnit parse_unit(const Json& j, const std::string& path)
{
    Fields f(j, path);
    GeneratorUnit u;
    u.id = f.string("id");
    u.bus = f.integer("bus");
    u.kind = parse_kind(f, f.string("type"));
    if (u.kind == UnitKind::SG) {
        u.fixed_inertia = f.number("inertia");
        u.fixed_damping = f.number("damping", 0.0);
        u.turbine_droop_inverse = f.number("droop_inverse", 0.0);
        u.turbine_time_constant = f.number("time_constant", 0.0);
        // SG parameters are fixed: the ranges collapse to the fixed values.
        u.m_range = {u.fixed_inertia, u.fixed_inertia};
        u.d_range = {u.fixed_damping, u.fixed_damping};
    } else {
        u.m_range = f.range("m_range");
        u.d_range = f.range("d_range");
    }
    if (u.kind == UnitKind::GFL) {
        u.pll_coupling = f.boolean("pll_coupling", true);
        u.pll_damping_ratio = f.number("pll_damping_ratio", 0.0);
        u.pll_bandwidth = f.number("pll_bandwidth", 0.0);
    }
    if (f.has("cost")) {
        Fields c(f.raw("cost"), f.at("cost"));
        u.cost = CostCoefficients{c.number("rho_m", 0.0), c.number("mu_m", 0.0), c.number("rho_d", 0.0), c.number("mu_d", 0.0)};
        c.finish();
    }
    f.finish();
    return u;
}

inline Json unit_json(const GeneratorUnit& u)
{
    Json j{{"id", u.id}, {"bus", u.bus}, {"type", to_string(u.kind)}};
    if (u.kind == UnitKind::SG) {
        j["inertia"] = u.fixed_inertia;
        j["damping"] = u.fixed_damping;
        j["droop_inverse"] = u.turbine_droop_inverse;
        j["time_constant"] = u.turbine_time_constant;
    } else {
        j["m_range"] = Json::array({u.m_range.min, u.m_range.max});
        j["d_range"] = Json::array({u.d_range.min, u.d_range.max});
    }
    if (u.kind == UnitKind::GFL) {
        j["pll_coupling"] = u.pll_coupling;
        j["pll_damping_ratio"] = u.pll_damping_ratio;
        j["pll_bandwidth"] = u.pll_bandwidth;
    }
    if (u.cost) {
        j["cost"] = Json{{"rho_m", u.cost->rho_m}, {"mu_m", u.cost->mu_m}, {"rho_d", u.cost->rho_d}, {"mu_d", u.cost->mu_d}};
    }
    return j;
}

/// A limit given either in rad units under `key` or in Hz under `key_hz`.
inline double limit(const Fields& f, const std::string& key, double fallback, std::vector<std::string>& defaults)
{
    const bool rad = f.has(key);
    const bool hz = f.has(key + "_hz");
    if (rad && hz) {
        f.fail("give either '" + key + "' or '" + key + "_hz', not both");
    }
    if (rad) {
        return f.number(key);
    }
    if (hz) {
        return hz_to_rad(f.number(key + "_hz"));
    }
    defaults.push_back(key + " = " + format_double(fallback) + " (default)");
    return fallback;
}

inline ConstraintParams parse_params(const Json& j, std::vector<std::string>& defaults)
{
    Fields f(j, "constraints");
    ConstraintParams p;
    p.beta = f.number("beta");
    p.cos_zeta = f.number("cos_zeta");
    p.rocof_limit = limit(f, "rocof_limit", p.rocof_limit, defaults);
    p.sync_limit = limit(f, "sync_limit", p.sync_limit, defaults);
    p.nadir_limit = limit(f, "nadir_limit", p.nadir_limit, defaults);
    p.disturbance_magnitude = f.number("disturbance_mw");
    if (f.has("expansion_point")) {
        const Range r = f.range("expansion_point");
        p.expansion_m = r.min;
        p.expansion_d = r.max;
    } else {
        defaults.push_back("expansion_point = (200, 200) (default)");
    }
    if (f.has("turbine_aggregation")) {
        const std::string a = f.string("turbine_aggregation");
        if (a == "literal") {
            p.aggregation = TurbineAggregation::Literal;
        } else if (a == "capacity_weighted") {
            p.aggregation = TurbineAggregation::CapacityWeighted;
        } else {
            f.fail("turbine_aggregation must be 'literal' or 'capacity_weighted'");
        }
    } else {
        defaults.push_back("turbine_aggregation = literal (default)");
    }
    f.finish();
    return p;
}

inline std::vector<BusBox> parse_boxes(const Fields& f, const std::string& key)
{
    std::vector<BusBox> out;
    if (!f.has(key)) {
        return out;
    }
    const Json& a = f.array(key);
    for (std::size_t i = 0; i < a.size(); ++i) {
        Fields b(a[i], indexed(f.at(key), i));
        out.push_back({b.integer("bus"), b.number("lo"), b.number("hi")});
        b.finish();
    }
    return out;
}

inline Json boxes_json(const std::vector<BusBox>& boxes)
{
    Json a = Json::array();
    for (const auto& b : boxes) {
        a.push_back(Json{{"bus", b.bus}, {"lo", b.lo}, {"hi", b.hi}});
    }
    return a;
}

inline UncertaintySpec parse_uncertainty(const Json& j)
{
    Fields f(j, "uncertainty");
    UncertaintySpec u;
    u.line_scaling_percent = f.number("line_scaling_percent", 0.0);
    u.inertia_box = parse_boxes(f, "inertia_box");
    u.damping_box = parse_boxes(f, "damping_box");
    u.vertex_enumeration = f.boolean("vertex_enumeration", false);
    if (f.has("load_cases")) {
        const Json& a = f.array("load_cases");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string path = indexed("uncertainty.load_cases", i);
            Fields lc(a[i], path);
            LoadCase c;
            c.name = lc.string("name");
            if (lc.has("buses")) {
                const Json& b = lc.array("buses");
                for (std::size_t k = 0; k < b.size(); ++k) {
                    c.bus_overrides.push_back(parse_bus(b[k], indexed(path + ".buses", k)));
                }
            }
            if (lc.has("reduced_matrix")) {
                const Json& rows = lc.array("reduced_matrix");
                const auto n = static_cast<Eigen::Index>(rows.size());
                Matrix m(n, n);
                for (Eigen::Index r = 0; r < n; ++r) {
                    const Json& row = rows[static_cast<std::size_t>(r)];
                    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
                        lc.fail("reduced_matrix must be square");
                    }
                    for (Eigen::Index col = 0; col < n; ++col) {
                        if (!row[static_cast<std::size_t>(col)].is_number()) {
                            lc.fail("reduced_matrix entries must be numbers");
                        }
                        m(r, col) = row[static_cast<std::size_t>(col)].get<double>();
                    }
                }
                c.reduced_matrix = m;
            }
            lc.finish();
            u.load_cases.push_back(std::move(c));
        }
    }
    f.finish();
    return u;
}

} // namespace detail

/// Parses the JSON case text; `source` names the origin in diagnostics.
inline ParsedCase parse_case_text(const std::string& text, const std::string& source = "<string>")
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Byte offset to line number for the diagnostic.
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
            line += text[i] == '\n' ? 1 : 0;
        }
        throw Error(ErrorKind::InvalidInput, source + ":" + std::to_string(line) + ": malformed case file: " + e.what());
    }
    ParsedCase out;
    SystemCase& c = out.system;
    auto& defaults = out.defaults_applied;
    detail::Fields f(j, "");
    if (f.has("format") && f.string("format") != "hodi-case") {
        f.fail("format must be 'hodi-case'");
    }
    if (f.has("version") && f.integer("version") != 1) {
        f.fail("unsupported version (expected 1)");
    }
    if (f.has("provenance")) {
        f.raw("provenance");  // written by the serializer, informational only
    }
    c.name = f.has("name") ? f.string("name") : std::string();
    c.base_mva = f.number("base_mva", 100.0);
    if (!f.has("base_mva")) {
        defaults.push_back("base_mva = 100 (default)");
    }
    const Json& buses = f.array("buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        c.buses.push_back(detail::parse_bus(buses[i], detail::indexed("buses", i)));
    }
    const Json& lines = f.array("lines");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        detail::Fields l(lines[i], detail::indexed("lines", i));
        c.lines.push_back({l.integer("from"), l.integer("to"), l.number("susceptance")});
        l.finish();
    }
    const Json& units = f.array("units");
    for (std::size_t i = 0; i < units.size(); ++i) {
        c.units.push_back(detail::parse_unit(units[i], detail::indexed("units", i)));
    }
    if (f.has("constraints")) {
        c.params = detail::parse_params(f.raw("constraints"), defaults);
    }
    if (f.has("uncertainty")) {
        c.uncertainty = detail::parse_uncertainty(f.raw("uncertainty"));
    }
    if (f.has("disturbances")) {
        const Json& a = f.array("disturbances");
        for (std::size_t i = 0; i < a.size(); ++i) {
            detail::Fields d(a[i], detail::indexed("disturbances", i));
            c.disturbances.push_back({d.integer("bus"), d.number("mw")});
            d.finish();
        }
    }
    if (f.has("market")) {
        detail::Fields m(f.raw("market"), "market");
        MarketConfig mc;
        if (m.has("seed")) {
            const int seed = m.integer("seed");
            if (seed < 0) {
                m.fail("seed must be non-negative");
            }
            mc.seed = static_cast<unsigned>(seed);
        }
        mc.price_min = m.number("price_min", mc.price_min);
        mc.price_max = m.number("price_max", mc.price_max);
        mc.quadratic_divisor = m.number("quadratic_divisor", mc.quadratic_divisor);
        if (m.has("payment_cap")) {
            mc.payment_cap = m.number("payment_cap");
        }
        if (!(mc.price_min > 0.0 && mc.price_max >= mc.price_min && mc.quadratic_divisor > 0.0)) {
            m.fail("need 0 < price_min <= price_max and quadratic_divisor > 0");
        }
        m.finish();
        c.market = mc;
    }
    if (f.has("simulation")) {
        detail::Fields s(f.raw("simulation"), "simulation");
        auto& sim = c.simulation;
        sim.dt = s.number("dt", sim.dt);
        sim.horizon = s.number("horizon", sim.horizon);
        if (!s.has("rocof_window")) {
            defaults.push_back("simulation.rocof_window = 0.1 s (default)");
        }
        sim.rocof_window = s.number("rocof_window", sim.rocof_window);
        sim.reserve_duration = s.number("reserve_duration", sim.reserve_duration);
        s.finish();
    } else {
        defaults.push_back("simulation = dt 1e-3 s, horizon 60 s, rocof_window 0.1 s (default)");
    }
    c.strict_operating_point = f.boolean("strict_operating_point", false);
    f.finish();
    validate(c);
    return out;
}

inline ParsedCase parse_case(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::InvalidInput, "cannot open case file " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_case_text(ss.str(), path);
}

/// Canonical JSON form; limits are written in rad units so that parsing it back is exact.
inline Json case_to_json(const SystemCase& c, const std::vector<std::string>& provenance = {})
{
    Json j;
    j["format"] = "hodi-case";
    j["version"] = 1;
    if (!provenance.empty()) {
        j["provenance"] = provenance;
    }
    j["name"] = c.name;
    j["base_mva"] = c.base_mva;
    j["buses"] = Json::array();
    for (const auto& b : c.buses) {
        j["buses"].push_back(detail::bus_json(b));
    }
    j["lines"] = Json::array();
    for (const auto& l : c.lines) {
        j["lines"].push_back(Json{{"from", l.from}, {"to", l.to}, {"susceptance", l.susceptance}});
    }
    j["units"] = Json::array();
    for (const auto& u : c.units) {
        j["units"].push_back(detail::unit_json(u));
    }
    if (c.params) {
        const auto& p = *c.params;
        j["constraints"] = Json{{"beta", p.beta},
                                {"cos_zeta", p.cos_zeta},
                                {"rocof_limit", p.rocof_limit},
                                {"sync_limit", p.sync_limit},
                                {"nadir_limit", p.nadir_limit},
                                {"disturbance_mw", p.disturbance_magnitude},
                                {"expansion_point", Json::array({p.expansion_m, p.expansion_d})},
                                {"turbine_aggregation", p.aggregation == TurbineAggregation::Literal ? "literal" : "capacity_weighted"}};
    }
    if (c.uncertainty) {
        const auto& u = *c.uncertainty;
        Json ju{{"line_scaling_percent", u.line_scaling_percent},
                {"inertia_box", detail::boxes_json(u.inertia_box)},
                {"damping_box", detail::boxes_json(u.damping_box)},
                {"vertex_enumeration", u.vertex_enumeration}};
        Json cases = Json::array();
        for (const auto& lc : u.load_cases) {
            Json jc{{"name", lc.name}};
            if (!lc.bus_overrides.empty()) {
                jc["buses"] = Json::array();
                for (const auto& b : lc.bus_overrides) {
                    jc["buses"].push_back(detail::bus_json(b));
                }
            }
            if (lc.reduced_matrix) {
                Json rows = Json::array();
                for (Eigen::Index r = 0; r < lc.reduced_matrix->rows(); ++r) {
                    Json row = Json::array();
                    for (Eigen::Index col = 0; col < lc.reduced_matrix->cols(); ++col) {
                        row.push_back((*lc.reduced_matrix)(r, col));
                    }
                    rows.push_back(row);
                }
                jc["reduced_matrix"] = rows;
            }
            cases.push_back(jc);
        }
        ju["load_cases"] = cases;
        j["uncertainty"] = ju;
    }
    j["disturbances"] = Json::array();
    for (const auto& d : c.disturbances) {
        j["disturbances"].push_back(Json{{"bus", d.bus}, {"mw", d.mw}});
    }
    if (c.market) {
        const auto& m = *c.market;
        j["market"] = Json{{"seed", m.seed}, {"price_min", m.price_min}, {"price_max", m.price_max}, {"quadratic_divisor", m.quadratic_divisor}};
        if (m.payment_cap) {
            j["market"]["payment_cap"] = *m.payment_cap;
        }
    }
    j["simulation"] = Json{{"dt", c.simulation.dt},
                           {"horizon", c.simulation.horizon},
                           {"rocof_window", c.simulation.rocof_window},
                           {"reserve_duration", c.simulation.reserve_duration}};
    j["strict_operating_point"] = c.strict_operating_point;
    return j;
}

inline std::string serialize_case(const SystemCase& c, const std::vector<std::string>& provenance = {})
{
    return case_to_json(c, provenance).dump(2) + "\n";
}

// ---- CSV ------------------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto a = cell.find_first_not_of(" \t\r");
        const auto b = cell.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

inline double csv_number(const std::string& s, const std::string& where)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidInput, where + ": '" + s + "' is not a number");
    }
}

} // namespace detail

/// Bids CSV: header `unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max`, one row per unit.
inline std::vector<Bid> parse_bids_csv(std::istream& in, const std::string& source = "<bids>")
{
    static const std::vector<std::string> header{"unit", "rho_m", "mu_m", "rho_d", "mu_d", "m_min", "m_max", "d_min", "d_max"};
    std::string line;
    std::size_t lineno = 0;
    std::vector<Bid> out;
    bool seen_header = false;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (!seen_header) {
            if (cells != header) {
                throw Error(ErrorKind::InvalidInput, where + ": expected header unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max");
            }
            seen_header = true;
            continue;
        }
        if (cells.size() != header.size()) {
            throw Error(ErrorKind::InvalidInput, where + ": expected 9 columns");
        }
        Bid b;
        b.unit = cells[0];
        double v[8];
        for (int k = 0; k < 8; ++k) {
            v[k] = detail::csv_number(cells[static_cast<std::size_t>(k + 1)], where);
        }
        b.cost = {v[0], v[1], v[2], v[3]};
        b.m_range = {v[4], v[5]};
        b.d_range = {v[6], v[7]};
        if (b.cost.rho_m < 0 || b.cost.mu_m < 0 || b.cost.rho_d < 0 || b.cost.mu_d < 0) {
            throw Error(ErrorKind::InvalidInput, where + ": bid coefficients must be non-negative");
        }
        if (b.m_range.min < 0 || b.m_range.min > b.m_range.max || b.d_range.min < 0 || b.d_range.min > b.d_range.max) {
            throw Error(ErrorKind::InvalidInput, where + ": bid ranges must satisfy 0 <= min <= max");
        }
        if (!ids.insert(b.unit).second) {
            throw Error(ErrorKind::InvalidInput, where + ": duplicate bid for unit " + b.unit);
        }
        out.push_back(b);
    }
    if (!seen_header) {
        throw Error(ErrorKind::InvalidInput, source + ": empty bids file");
    }
    return out;
}

inline void write_bids_csv(std::ostream& os, const std::vector<Bid>& bids)
{
    os << "unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max\n";
    for (const auto& b : bids) {
        os << b.unit;
        for (double v : {b.cost.rho_m, b.cost.mu_m, b.cost.rho_d, b.cost.mu_d, b.m_range.min, b.m_range.max, b.d_range.min,
                         b.d_range.max}) {
            os << ',' << format_double(v);
        }
        os << '\n';
    }
}

} // namespace hodi
