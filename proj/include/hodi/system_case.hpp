#pragma once

#include "hodi/core.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hodi {

enum class BusKind { Generator, Load };
enum class UnitKind { SG, GFM, GFL };

inline const char* to_string(BusKind k) { return k == BusKind::Generator ? "generator" : "load"; }

inline const char* to_string(UnitKind k)
{
    switch (k) {
    case UnitKind::SG: return "SG";
    case UnitKind::GFM: return "GFM";
    case UnitKind::GFL: return "GFL";
    }
    return "?";
}

struct Range {
    double min = 0.0;
    double max = 0.0;

    bool fixed() const { return max - min <= 0.0; }
    bool contains(double x, double tol = 1e-9) const { return x >= min - tol && x <= max + tol; }
    bool operator==(const Range&) const = default;
};

struct Bus {
    int id = 0;
    BusKind kind = BusKind::Load;
    double voltage = 1.0;     // per-unit
    double angle = 0.0;       // rad
    double load = 0.0;        // MW
    bool operator==(const Bus&) const = default;
};

struct Line {
    int from = 0;
    int to = 0;
    double susceptance = 0.0; // per-unit on the case base
    bool operator==(const Line&) const = default;
};

/// Quadratic reserve cost C(m, d) = rho_m m^2 + mu_m m + rho_d d^2 + mu_d d.
struct CostCoefficients {
    double rho_m = 0.0;
    double mu_m = 0.0;
    double rho_d = 0.0;
    double mu_d = 0.0;

    double evaluate(double m, double d) const { return rho_m * m * m + mu_m * m + rho_d * d * d + mu_d * d; }
    bool operator==(const CostCoefficients&) const = default;
};

struct GeneratorUnit {
    std::string id;
    int bus = 0;
    UnitKind kind = UnitKind::GFM;
    // SG only.
    double fixed_inertia = 0.0;         // MW s^2/rad
    double fixed_damping = 0.0;         // MW s/rad
    double turbine_droop_inverse = 0.0; // MW s/rad
    double turbine_time_constant = 0.0; // s
    // GFL only: m = d * zeta / omega_pll when coupled.
    double pll_damping_ratio = 0.0;
    double pll_bandwidth = 0.0;         // rad/s
    bool pll_coupling = true;
    Range m_range;
    Range d_range;
    std::optional<CostCoefficients> cost;

    bool adjustable() const { return kind != UnitKind::SG; }
    bool coupled() const { return kind == UnitKind::GFL && pll_coupling; }
    double coupling_ratio() const { return pll_damping_ratio / pll_bandwidth; }
    bool operator==(const GeneratorUnit&) const = default;
};

enum class TurbineAggregation {
    Literal,          // r = sum r_i, tau = (sum tau_i)^-1
    CapacityWeighted, // r^-1 = sum r_i^-1, tau = r^-1-weighted mean of tau_i
};

struct ConstraintParams {
    double beta = 3.0;                 // 1/s
    double cos_zeta = 0.1;
    double rocof_limit = hz_to_rad(1.0);  // rad/s^2
    double sync_limit = hz_to_rad(0.1);   // rad/s
    double nadir_limit = hz_to_rad(0.3);  // rad/s
    double disturbance_magnitude = 300.0; // MW
    double expansion_m = 200.0;
    double expansion_d = 200.0;
    TurbineAggregation aggregation = TurbineAggregation::Literal;
    bool operator==(const ConstraintParams&) const = default;
};

struct BusBox {
    int bus = 0;
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const BusBox&) const = default;
};

/// Alternative operating condition: either a full override of the reduced matrix or
/// new (V, theta) values at some buses from which the matrix is rebuilt.
struct LoadCase {
    std::string name;
    std::vector<Bus> bus_overrides;
    std::optional<Matrix> reduced_matrix;
    bool operator==(const LoadCase& o) const
    {
        if (name != o.name || bus_overrides != o.bus_overrides || reduced_matrix.has_value() != o.reduced_matrix.has_value()) {
            return false;
        }
        if (!reduced_matrix) {
            return true;
        }
        return reduced_matrix->rows() == o.reduced_matrix->rows() && reduced_matrix->cols() == o.reduced_matrix->cols()
            && *reduced_matrix == *o.reduced_matrix;
    }
};

struct UncertaintySpec {
    std::vector<LoadCase> load_cases;
    double line_scaling_percent = 0.0;
    std::vector<BusBox> inertia_box;
    std::vector<BusBox> damping_box;
    bool vertex_enumeration = false;

    bool empty() const
    {
        auto zero = [](const std::vector<BusBox>& b) {
            return std::all_of(b.begin(), b.end(), [](const BusBox& x) { return x.lo == 0.0 && x.hi == 0.0; });
        };
        return load_cases.empty() && line_scaling_percent == 0.0 && zero(inertia_box) && zero(damping_box);
    }
    bool operator==(const UncertaintySpec&) const = default;
};

struct Disturbance {
    int bus = 0;
    double mw = 0.0;
    bool operator==(const Disturbance&) const = default;
};

struct MarketConfig {
    unsigned seed = 7;
    double price_min = 20.0;
    double price_max = 50.0;
    double quadratic_divisor = 50.0;
    std::optional<double> payment_cap;
    bool operator==(const MarketConfig&) const = default;
};

struct SimulationConfig {
    double dt = 1e-3;
    double horizon = 60.0;
    double rocof_window = 0.1;
    double reserve_duration = 20.0;
    bool operator==(const SimulationConfig&) const = default;
};

struct SystemCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<GeneratorUnit> units;
    std::optional<ConstraintParams> params;
    std::optional<UncertaintySpec> uncertainty;
    std::vector<Disturbance> disturbances;
    std::optional<MarketConfig> market;
    SimulationConfig simulation;
    bool strict_operating_point = false;

    const Bus& bus(int id) const
    {
        for (const auto& b : buses) {
            if (b.id == id) {
                return b;
            }
        }
        throw Error(ErrorKind::InvalidInput, "unknown bus id " + std::to_string(id));
    }
    bool has_bus(int id) const
    {
        return std::any_of(buses.begin(), buses.end(), [id](const Bus& b) { return b.id == id; });
    }
    std::vector<int> generator_bus_ids() const
    {
        std::vector<int> out;
        for (const auto& b : buses) {
            if (b.kind == BusKind::Generator) {
                out.push_back(b.id);
            }
        }
        return out;
    }
    bool operator==(const SystemCase&) const = default;
};

/// Referential integrity and field-range checks. Throws Error(InvalidInput) naming the
/// violated invariant. Connectivity is checked by the network builder.
inline void validate(const SystemCase& c)
{
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidInput, msg); };
    if (c.base_mva <= 0.0) {
        fail("base_mva must be positive");
    }
    if (c.buses.empty()) {
        fail("case has no buses");
    }
    std::set<int> ids;
    for (const auto& b : c.buses) {
        if (!ids.insert(b.id).second) {
            fail("duplicate bus id " + std::to_string(b.id));
        }
        if (!(b.voltage > 0.0)) {
            fail("bus " + std::to_string(b.id) + ": voltage_magnitude must be > 0");
        }
    }
    std::set<std::pair<int, int>> pairs;
    for (const auto& l : c.lines) {
        if (!ids.count(l.from) || !ids.count(l.to)) {
            fail("line " + std::to_string(l.from) + "-" + std::to_string(l.to) + " references an unknown bus (referential integrity)");
        }
        if (l.from == l.to) {
            fail("line endpoints must differ (bus " + std::to_string(l.from) + ")");
        }
        if (!(l.susceptance > 0.0)) {
            fail("line " + std::to_string(l.from) + "-" + std::to_string(l.to) + ": susceptance must be > 0");
        }
        if (!pairs.insert({std::min(l.from, l.to), std::max(l.from, l.to)}).second) {
            fail("parallel lines between " + std::to_string(l.from) + " and " + std::to_string(l.to) + " must be pre-merged");
        }
    }
    std::set<std::string> unit_ids;
    std::set<int> hosting;
    for (const auto& u : c.units) {
        if (!unit_ids.insert(u.id).second) {
            fail("duplicate unit id " + u.id);
        }
        if (!ids.count(u.bus)) {
            fail("unit " + u.id + " references unknown bus " + std::to_string(u.bus) + " (referential integrity)");
        }
        if (c.bus(u.bus).kind != BusKind::Generator) {
            fail("unit " + u.id + " sits on load-only bus " + std::to_string(u.bus));
        }
        hosting.insert(u.bus);
        for (const Range* r : {&u.m_range, &u.d_range}) {
            if (r->min < 0.0 || r->min > r->max) {
                fail("unit " + u.id + ": ranges must be non-negative with min <= max");
            }
        }
        if (u.kind == UnitKind::SG) {
            if (!u.m_range.fixed() || !u.d_range.fixed()) {
                fail("unit " + u.id + ": SG ranges must have zero width");
            }
            if (u.fixed_inertia < 0.0 || u.fixed_damping < 0.0 || u.turbine_droop_inverse < 0.0) {
                fail("unit " + u.id + ": SG parameters must be non-negative");
            }
            if (u.turbine_droop_inverse > 0.0 && !(u.turbine_time_constant > 0.0)) {
                fail("unit " + u.id + ": turbine time constant must be positive");
            }
        }
        if (u.coupled() && !(u.pll_damping_ratio > 0.0 && u.pll_bandwidth > 0.0)) {
            fail("unit " + u.id + ": GFL coupling needs positive pll_damping_ratio and pll_bandwidth");
        }
        if (u.cost) {
            const auto& k = *u.cost;
            if (k.rho_m < 0 || k.mu_m < 0 || k.rho_d < 0 || k.mu_d < 0) {
                fail("unit " + u.id + ": cost coefficients must be non-negative");
            }
        }
    }
    for (const auto& b : c.buses) {
        if (b.kind == BusKind::Generator && !hosting.count(b.id)) {
            fail("generator bus " + std::to_string(b.id) + " hosts no unit");
        }
    }
    if (c.params) {
        const auto& p = *c.params;
        if (!(p.beta > 0 && p.rocof_limit > 0 && p.sync_limit > 0 && p.nadir_limit > 0 && p.disturbance_magnitude > 0
              && p.expansion_m > 0 && p.expansion_d > 0)) {
            fail("constraint parameters must be strictly positive");
        }
        if (!(p.cos_zeta > 0.0 && p.cos_zeta < 1.0)) {
            fail("cos_zeta must lie in (0, 1)");
        }
    }
    if (c.uncertainty) {
        const auto& u = *c.uncertainty;
        if (u.line_scaling_percent < 0.0 || u.line_scaling_percent >= 100.0) {
            fail("line_scaling_percent must lie in [0, 100)");
        }
        for (const auto* boxes : {&u.inertia_box, &u.damping_box}) {
            for (const auto& b : *boxes) {
                if (!ids.count(b.bus)) {
                    fail("uncertainty box references unknown bus " + std::to_string(b.bus));
                }
                if (b.lo > 0.0 || b.hi < 0.0) {
                    fail("uncertainty boxes must contain 0 (bus " + std::to_string(b.bus) + ")");
                }
            }
        }
    }
    for (const auto& d : c.disturbances) {
        if (!ids.count(d.bus)) {
            fail("disturbance references unknown bus " + std::to_string(d.bus));
        }
    }
    const auto& s = c.simulation;
    if (!(s.dt > 0 && s.horizon > 0 && s.rocof_window > 0 && s.reserve_duration > 0)) {
        fail("simulation settings must be positive");
    }
}

} // namespace hodi
