#pragma once

// Glue between the modules: build the allocation program for a case, check a candidate
// allocation against every constraint, place its modes and simulate it.

#include "hodi/allocation.hpp"
#include "hodi/market.hpp"
#include "hodi/modal.hpp"
#include "hodi/simulate.hpp"

#include <string>
#include <vector>

namespace hodi {

enum class Variant { Standard, Robust };

/// Case whose adjustable units all carry costs: units without coefficients get the seeded price
/// recipe of the market section. A case with neither is rejected.
inline SystemCase with_costs(const SystemCase& c, std::optional<unsigned> seed = std::nullopt)
{
    const bool missing = std::any_of(c.units.begin(), c.units.end(), [](const GeneratorUnit& u) { return u.adjustable() && !u.cost; });
    if (!missing) {
        return c;
    }
    if (!c.market) {
        throw Error(ErrorKind::InvalidInput, "units without cost coefficients need a market section (price recipe)");
    }
    MarketConfig cfg = *c.market;
    if (seed) {
        cfg.seed = *seed;
    }
    const auto recipe = price_recipe_bids(c, case_params(c), cfg);
    SystemCase out = c;
    std::size_t k = 0;
    for (auto& u : out.units) {
        if (u.adjustable()) {
            if (!u.cost) {
                u.cost = recipe[k].cost;
            }
            ++k;
        }
    }
    return out;
}

inline AllocationModel build_model(const SystemCase& c, const ReducedNetwork& r, Variant variant)
{
    const ConstraintParams p = case_params(c);
    if (variant == Variant::Robust) {
        return build_robust(c, r, p, case_costs(c), c.uncertainty.value_or(UncertaintySpec{}));
    }
    return build_standard(c, r, p, case_costs(c));
}

/// Solution vector of `am` that reproduces the given per-unit values and v.
inline Vector encode(const AllocationModel& am, const std::vector<UnitAllocation>& units, double v)
{
    Vector x = Vector::Zero(am.problem.size());
    if (units.size() != am.mapping.size()) {
        throw Error(ErrorKind::InvalidInput, "allocation lists " + std::to_string(units.size()) + " units, case has "
                                                 + std::to_string(am.mapping.size()));
    }
    for (std::size_t k = 0; k < units.size(); ++k) {
        const auto& um = am.mapping[k];
        if (units[k].id != am.unit_ids[um.unit]) {
            throw Error(ErrorKind::InvalidInput, "allocation row " + std::to_string(k) + " is unit " + units[k].id + ", expected "
                                                     + am.unit_ids[um.unit]);
        }
        if (um.d_var >= 0) {
            x(um.d_var) = units[k].d;
        }
        if (um.m_var >= 0 && um.m_var != um.d_var) {
            x(um.m_var) = units[k].m;
        }
    }
    x(am.v_var) = v;
    return x;
}

struct ConstraintMargin {
    std::string name;
    double margin = 0.0;  // >= 0 when satisfied: slack of a bound or row, smallest eigenvalue of an LMI
    bool holds = false;
};

struct ConstraintReport {
    std::vector<ConstraintMargin> items;
    bool all_hold = true;
};

/// Evaluates every bound, row and LMI of the program at x. `tol` is relative to the data scale of each item.
inline ConstraintReport check_constraints(const ConicProblem& p, const Vector& x, double tol = 1e-6)
{
    ConstraintReport rep;
    auto push = [&](std::string name, double margin, double scale) {
        const bool ok = margin >= -tol * std::max(1.0, scale);
        rep.items.push_back({std::move(name), margin, ok});
        rep.all_hold = rep.all_hold && ok;
    };
    for (std::size_t i = 0; i < p.variables.size(); ++i) {
        const auto& v = p.variables[i];
        const double xi = x(static_cast<Eigen::Index>(i));
        if (v.lo > -kInf) {
            push(v.name + " >= lo", xi - v.lo, std::abs(v.lo));
        }
        if (v.hi < kInf) {
            push(v.name + " <= hi", v.hi - xi, std::abs(v.hi));
        }
    }
    for (const auto& row : p.linear) {
        push(row.name, p.linear_value(row, x) - row.rhs, std::abs(row.rhs));
    }
    for (const auto& lmi : p.lmis) {
        const Matrix f = lmi.evaluate(x);
        push(lmi.name, min_eigenvalue(f), f.cwiseAbs().maxCoeff());
    }
    return rep;
}

/// A v for which the shift block is PSD whenever that is possible. Writing the block in the basis
/// (1/sqrt(n), U) gives [[a + n v, b^T], [b, C]]; with C > 0 the smallest v is (b^T C^-1 b - a) / n.
inline double certificate_v(const Vector& m, const Vector& d, const Matrix& l, double beta)
{
    const Eigen::Index n = l.rows();
    const Matrix s = l - beta * d.asDiagonal().toDenseMatrix() + beta * beta * m.asDiagonal().toDenseMatrix();
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if (n < 2) {
        return std::max(0.0, -s(0, 0)) + scale;
    }
    // Orthonormal complement of the ones vector from its Householder QR.
    const Matrix q = Eigen::HouseholderQR<Matrix>(Vector::Ones(n)).householderQ();
    const Matrix u = q.rightCols(n - 1);
    const Vector e = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    const double a = e.dot(s * e);
    const Vector bvec = u.transpose() * (s * e);
    const Matrix cmat = u.transpose() * s * u;
    Eigen::SelfAdjointEigenSolver<Matrix> es(cmat);
    const double cmin = es.eigenvalues()(0);
    if (cmin <= 1e-12 * scale) {
        return 1e3 * scale;  // no v helps; any large value shows the complement block as is
    }
    const Vector y = es.eigenvectors().transpose() * bvec;
    const double quad = (y.array().square() / es.eigenvalues().array()).sum();
    return std::max(0.0, (quad - a) / static_cast<double>(n)) + scale / static_cast<double>(n);
}

struct Verification {
    ModeReport modes;
    RegionCheck region;
    std::vector<double> distance;  // to the nearest region boundary, per mode
    Certificate certificate;
    double v = 0.0;

    /// Smallest boundary distance over modes with a nonzero imaginary part (+inf if none).
    double closest_complex_distance() const
    {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < modes.eigenvalues.size(); ++k) {
            if (std::abs(modes.eigenvalues[k].imag()) > 1e-9 && static_cast<int>(k) != modes.zero_mode_index) {
                best = std::min(best, distance[k]);
            }
        }
        return best;
    }
};

/// Modes of the nodal (M, D) on the reduced network, region membership and the certificate.
/// The zero mode of a connected network is exempt from the region test.
inline Verification verify_nodal(const Vector& m, const Vector& d, const Matrix& l, const ConstraintParams& p,
                                 std::optional<double> v = std::nullopt, double tol = 1e-6)
{
    Verification out;
    out.modes = qep_spectrum(m, d, l);
    out.region = verify_region(out.modes, p.beta, p.cos_zeta, tol);
    for (const Complex z : out.modes.eigenvalues) {
        out.distance.push_back(boundary_distance(z, p.beta, p.cos_zeta));
    }
    out.v = v.value_or(certificate_v(m, d, l, p.beta));
    out.certificate = certificate_check(m, d, l, p.beta, p.cos_zeta, out.v, 1e-6 * std::max(1.0, l.cwiseAbs().maxCoeff()));
    return out;
}

/// Generator-bus injections of all disturbance scenarios in the case (load increases are negative).
inline Vector case_disturbance(const SystemCase& c, const ReducedNetwork& r)
{
    if (c.disturbances.empty()) {
        throw Error(ErrorKind::InvalidInput, "case defines no disturbance scenario");
    }
    Vector pu = Vector::Zero(r.size());
    for (const auto& d : c.disturbances) {
        pu += equivalent_disturbance(r, d);
    }
    return pu;
}

/// One governor per SG with droop; units at a node share its trajectory.
inline std::vector<TurbineModel> case_turbines(const SystemCase& c, const ReducedNetwork& r)
{
    std::vector<TurbineModel> out;
    for (const auto& u : c.units) {
        if (u.kind == UnitKind::SG && u.turbine_droop_inverse > 0.0) {
            out.push_back({r.position(u.bus), u.turbine_droop_inverse, u.turbine_time_constant});
        }
    }
    return out;
}

inline std::vector<UnitShare> unit_shares(const std::vector<UnitAllocation>& units, const ReducedNetwork& r)
{
    std::vector<UnitShare> out;
    for (const auto& u : units) {
        out.push_back({u.id, r.position(u.bus), u.m, u.d});
    }
    return out;
}

/// Nodal sums of per-unit values.
inline std::pair<Vector, Vector> nodal_totals(const std::vector<UnitAllocation>& units, const ReducedNetwork& r)
{
    Vector m = Vector::Zero(r.size()), d = Vector::Zero(r.size());
    for (const auto& u : units) {
        const Eigen::Index i = r.position(u.bus);
        if (i < 0) {
            throw Error(ErrorKind::InvalidInput, "unit " + u.id + " is not on a generator bus");
        }
        m(i) += u.m;
        d(i) += u.d;
    }
    return {m, d};
}

inline SimulationOptions case_simulation_options(const SystemCase& c)
{
    SimulationOptions o;
    o.horizon = c.simulation.horizon;
    o.dt = c.simulation.dt;
    o.rocof_window = c.simulation.rocof_window;
    return o;
}

inline TrajectorySet simulate_allocation(const SystemCase& c, const ReducedNetwork& r, const std::vector<UnitAllocation>& units,
                                         const SimulationOptions& opt)
{
    const auto [m, d] = nodal_totals(units, r);
    return simulate(r.L, m, d, case_turbines(c, r), case_disturbance(c, r), unit_shares(units, r), opt);
}

} // namespace hodi
