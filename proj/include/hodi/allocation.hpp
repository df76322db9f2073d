#pragma once

#include "hodi/conic.hpp"
#include "hodi/frequency.hpp"
#include "hodi/network.hpp"

#include <map>
#include <string>
#include <vector>

namespace hodi {

/// How one unit's (m, d) map onto decision variables: value = constant + coefficient * x(var).
struct UnitMapping {
    std::size_t unit = 0;
    Eigen::Index node = 0;
    int m_var = -1;
    int d_var = -1;
    double m_const = 0.0;
    double d_const = 0.0;
    double m_coef = 1.0;   // coupled GFL: m = ratio * d, so m_var == d_var and m_coef == ratio

    double m(const Vector& x) const { return m_var < 0 ? m_const : m_coef * x(m_var); }
    double d(const Vector& x) const { return d_var < 0 ? d_const : x(d_var); }
};

/// Assembled allocation program together with the data needed to decode a solution.
struct AllocationModel {
    ConicProblem problem;
    std::vector<UnitMapping> mapping;  // aligned with case.units
    std::vector<CostCoefficients> costs;
    std::vector<std::string> unit_ids;
    std::vector<int> node_bus;
    int v_var = -1;
    ConstraintParams params;
    TurbineAggregate turbines;
    LinearNadir nadir_model;
    Matrix L;
    std::vector<Matrix> scenarios;     // L matrices the small-signal blocks were replicated over
    Vector fixed_m, fixed_d;           // nodal constants from SG and zero-width ranges

    Vector node_m(const Vector& x) const
    {
        Vector out = Vector::Zero(L.rows());
        for (const auto& u : mapping) {
            out(u.node) += u.m(x);
        }
        return out;
    }
    Vector node_d(const Vector& x) const
    {
        Vector out = Vector::Zero(L.rows());
        for (const auto& u : mapping) {
            out(u.node) += u.d(x);
        }
        return out;
    }
};

struct UnitAllocation {
    std::string id;
    int bus = 0;
    UnitKind kind = UnitKind::GFM;
    double m = 0.0;
    double d = 0.0;
    double cost = 0.0;
};

struct Allocation {
    std::vector<UnitAllocation> units;
    std::vector<int> node_bus;
    Vector node_m, node_d;
    double v = 0.0;
    double objective = 0.0;
    Solution solution;
};

/// Costs per unit from the case file; SG units and units without coefficients cost nothing.
inline std::vector<CostCoefficients> case_costs(const SystemCase& c)
{
    std::vector<CostCoefficients> out;
    for (const auto& u : c.units) {
        out.push_back(u.cost.value_or(CostCoefficients{}));
    }
    return out;
}

inline ConstraintParams case_params(const SystemCase& c) { return c.params.value_or(ConstraintParams{}); }

namespace detail {

inline Matrix unit_matrix(Eigen::Index n, Eigen::Index i)
{
    Matrix e = Matrix::Zero(n, n);
    e(i, i) = 1.0;
    return e;
}

/// Adds coef * E_ii to the LMI term of `var`, merging with an existing term.
inline void add_diag_term(ConicProblem::Lmi& lmi, int var, Eigen::Index i, double coef)
{
    if (var < 0 || coef == 0.0) {
        return;
    }
    const Eigen::Index n = lmi.constant.rows();
    for (auto& [v, m] : lmi.terms) {
        if (v == var) {
            m(i, i) += coef;
            return;
        }
    }
    lmi.terms.emplace_back(var, coef * unit_matrix(n, i));
}

inline void add_coeff(ConicProblem::Linear& row, int var, double a)
{
    if (var < 0 || a == 0.0) {
        return;
    }
    for (auto& [v, c] : row.coeffs) {
        if (v == var) {
            c += a;
            return;
        }
    }
    row.coeffs.emplace_back(var, a);
}

inline bool same_lmi(const ConicProblem::Lmi& a, const ConicProblem::Lmi& b)
{
    if (a.constant != b.constant || a.terms.size() != b.terms.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
        if (a.terms[i].first != b.terms[i].first || a.terms[i].second != b.terms[i].second) {
            return false;
        }
    }
    return true;
}

inline void push_unique(ConicProblem& p, ConicProblem::Lmi lmi)
{
    for (const auto& existing : p.lmis) {
        if (same_lmi(existing, lmi)) {
            return;
        }
    }
    p.lmis.push_back(std::move(lmi));
}

/// Nodal perturbation added to M or D in one scenario.
struct NodalShift {
    Vector dm, dd;
};

inline Vector bus_box(const ReducedNetwork& r, const std::vector<BusBox>& boxes, bool upper)
{
    Vector out = Vector::Zero(r.size());
    for (const auto& b : boxes) {
        const Eigen::Index i = r.position(b.bus);
        if (i < 0) {
            throw Error(ErrorKind::InvalidInput, "uncertainty box on bus " + std::to_string(b.bus) + ", which is not a generator bus");
        }
        out(i) += upper ? b.hi : b.lo;
    }
    return out;
}

/// D - 2 beta M with the given nodal shifts.
inline ConicProblem::Lmi decay_lmi(const AllocationModel& am, const Vector& dm, const Vector& dd, const std::string& name)
{
    const double beta = am.params.beta;
    ConicProblem::Lmi lmi{name, ((am.fixed_d + dd) - 2.0 * beta * (am.fixed_m + dm)).asDiagonal().toDenseMatrix(), {}};
    for (const auto& u : am.mapping) {
        add_diag_term(lmi, u.d_var, u.node, 1.0);
        add_diag_term(lmi, u.m_var, u.node, -2.0 * beta * u.m_coef);
    }
    return lmi;
}

/// L - beta D + beta^2 M + v 11^T.
inline ConicProblem::Lmi shift_lmi(const AllocationModel& am, const Matrix& l, const Vector& dm, const Vector& dd,
                                   const std::string& name)
{
    const double beta = am.params.beta;
    const Eigen::Index n = l.rows();
    ConicProblem::Lmi lmi{name, l - beta * (am.fixed_d + dd).asDiagonal().toDenseMatrix()
                                    + beta * beta * (am.fixed_m + dm).asDiagonal().toDenseMatrix(),
                          {}};
    for (const auto& u : am.mapping) {
        add_diag_term(lmi, u.d_var, u.node, -beta);
        add_diag_term(lmi, u.m_var, u.node, beta * beta * u.m_coef);
    }
    lmi.terms.emplace_back(am.v_var, ones_outer(n));
    return lmi;
}

/// beta D - 2 cos^2(zeta) L.
inline ConicProblem::Lmi cone_lmi(const AllocationModel& am, const Matrix& l, const Vector& dd, const std::string& name)
{
    const double beta = am.params.beta;
    const double c2 = am.params.cos_zeta * am.params.cos_zeta;
    ConicProblem::Lmi lmi{name, beta * (am.fixed_d + dd).asDiagonal().toDenseMatrix() - 2.0 * c2 * l, {}};
    for (const auto& u : am.mapping) {
        add_diag_term(lmi, u.d_var, u.node, beta);
    }
    return lmi;
}

/// Sigma m >= |P| / eps_RoCoF, Sigma d + r^-1 >= |P| / eps_sync and g_hat(Sigma m, Sigma d) >= 1 / eps_nadir,
/// with the totals shifted by dm_total and dd_total.
inline void frequency_rows(AllocationModel& am, double dm_total, double dd_total, const std::string& suffix)
{
    const auto& p = am.params;
    const double dist = std::abs(p.disturbance_magnitude);
    const double m_fixed = am.fixed_m.sum() + dm_total;
    const double d_fixed = am.fixed_d.sum() + dd_total;
    ConicProblem::Linear rocof{"rocof" + suffix, {}, dist / p.rocof_limit - m_fixed};
    ConicProblem::Linear sync{"sync" + suffix, {}, dist / p.sync_limit - am.turbines.r_inv - d_fixed};
    const auto& g = am.nadir_model;
    ConicProblem::Linear nad{"nadir" + suffix, {},
                             1.0 / p.nadir_limit - g.g0 + g.grad_m * (g.m0 - m_fixed) + g.grad_d * (g.d0 - d_fixed)};
    for (const auto& u : am.mapping) {
        add_coeff(rocof, u.m_var, u.m_coef);
        add_coeff(sync, u.d_var, 1.0);
        add_coeff(nad, u.m_var, g.grad_m * u.m_coef);
        add_coeff(nad, u.d_var, g.grad_d);
    }
    am.problem.linear.push_back(std::move(rocof));
    am.problem.linear.push_back(std::move(sync));
    am.problem.linear.push_back(std::move(nad));
}

/// Variables, objective and nodal constants shared by every variant.
inline AllocationModel base_model(const SystemCase& c, const ReducedNetwork& r, const ConstraintParams& params,
                                  const std::vector<CostCoefficients>& costs)
{
    if (costs.size() != c.units.size()) {
        throw Error(ErrorKind::InvalidInput, "cost list does not match the unit list");
    }
    AllocationModel am;
    am.params = params;
    am.costs = costs;
    am.L = r.L;
    am.node_bus = r.gen_bus_index;
    const Eigen::Index n = r.size();
    am.fixed_m = Vector::Zero(n);
    am.fixed_d = Vector::Zero(n);
    bool any_variable = false;
    auto& prob = am.problem;
    for (std::size_t k = 0; k < c.units.size(); ++k) {
        const auto& u = c.units[k];
        UnitMapping um;
        um.unit = k;
        um.node = r.position(u.bus);
        if (um.node < 0) {
            throw Error(ErrorKind::InvalidInput, "unit " + u.id + " is not on a reduced-network node");
        }
        am.unit_ids.push_back(u.id);
        const CostCoefficients& cc = costs[k];
        if (!u.adjustable()) {
            um.m_const = u.fixed_inertia;
            um.d_const = u.fixed_damping;
        } else if (u.coupled()) {
            const double ratio = u.coupling_ratio();
            const double lo = std::max(u.d_range.min, u.m_range.min / ratio);
            const double hi = std::min(u.d_range.max, u.m_range.max / ratio);
            if (lo > hi * (1 + 1e-12) + 1e-12) {
                throw Error(ErrorKind::Infeasible, "unit " + u.id + ": coupled inertia and damping ranges do not intersect");
            }
            if (hi - lo <= 0.0) {
                um.d_const = std::max(lo, 0.0);
                um.m_const = ratio * um.d_const;
                prob.objective_constant += cc.evaluate(um.m_const, um.d_const);
            } else {
                um.d_var = prob.add_variable("d[" + u.id + "]", lo, hi, cc.rho_m * ratio * ratio + cc.rho_d,
                                             cc.mu_m * ratio + cc.mu_d);
                um.m_var = um.d_var;
                um.m_coef = ratio;
                any_variable = true;
            }
        } else {
            if (u.m_range.fixed()) {
                um.m_const = u.m_range.min;
            } else {
                um.m_var = prob.add_variable("m[" + u.id + "]", u.m_range.min, u.m_range.max, cc.rho_m, cc.mu_m);
                any_variable = true;
            }
            if (u.d_range.fixed()) {
                um.d_const = u.d_range.min;
            } else {
                um.d_var = prob.add_variable("d[" + u.id + "]", u.d_range.min, u.d_range.max, cc.rho_d, cc.mu_d);
                any_variable = true;
            }
            // Constant parts of the cost of a unit with one fixed coordinate.
            prob.objective_constant += (um.m_var < 0 ? cc.rho_m * um.m_const * um.m_const + cc.mu_m * um.m_const : 0.0)
                                     + (um.d_var < 0 ? cc.rho_d * um.d_const * um.d_const + cc.mu_d * um.d_const : 0.0);
        }
        if (um.m_var < 0) {
            am.fixed_m(um.node) += um.m_const;
        }
        if (um.d_var < 0) {
            am.fixed_d(um.node) += um.d_const;
        }
        am.mapping.push_back(um);
    }
    if (!any_variable) {
        throw Error(ErrorKind::InvalidInput, "nothing to allocate: no unit has an adjustable inertia or damping range");
    }
    am.v_var = prob.add_variable("v", -kInf, kInf);
    am.turbines = aggregate_turbines(c.units, params.aggregation);
    am.nadir_model = taylor_nadir(am.turbines.tau, am.turbines.r_inv, std::abs(params.disturbance_magnitude), params.expansion_m,
                                  params.expansion_d);
    return am;
}

/// Reduced matrix of every alternative operating condition and every line-scaling scenario.
inline std::vector<Matrix> scenario_matrices(const SystemCase& c, const ReducedNetwork& r, const UncertaintySpec& unc)
{
    std::vector<Matrix> out{r.L};
    auto add = [&](Matrix l) {
        for (const auto& x : out) {
            if (x.rows() == l.rows() && x == l) {
                return;
            }
        }
        out.push_back(std::move(l));
    };
    for (const auto& lc : unc.load_cases) {
        if (lc.reduced_matrix) {
            if (lc.reduced_matrix->rows() != r.size() || lc.reduced_matrix->cols() != r.size()) {
                throw Error(ErrorKind::InvalidInput, "load case " + lc.name + ": reduced matrix has the wrong size");
            }
            add(*lc.reduced_matrix);
            continue;
        }
        SystemCase alt = c;
        for (const auto& b : lc.bus_overrides) {
            bool found = false;
            for (auto& ab : alt.buses) {
                if (ab.id == b.id) {
                    ab = b;
                    found = true;
                }
            }
            if (!found) {
                throw Error(ErrorKind::InvalidInput, "load case " + lc.name + " overrides unknown bus " + std::to_string(b.id));
            }
        }
        add(reduce_case(alt).L);
    }
    const double eta = unc.line_scaling_percent / 100.0;
    if (eta > 0.0) {
        if (unc.vertex_enumeration) {
            if (c.lines.size() > 12) {
                throw Error(ErrorKind::InvalidInput, "vertex enumeration is limited to 12 lines");
            }
            const std::size_t count = std::size_t{1} << c.lines.size();
            for (std::size_t mask = 0; mask < count; ++mask) {
                SystemCase alt = c;
                for (std::size_t j = 0; j < alt.lines.size(); ++j) {
                    alt.lines[j].susceptance *= (mask >> j) & 1U ? 1.0 + eta : 1.0 - eta;
                }
                add(reduce_case(alt).L);
            }
        } else {
            add((1.0 - eta) * r.L);
            add((1.0 + eta) * r.L);
        }
    }
    return out;
}

} // namespace detail

/**
 * @brief Nominal allocation program: the three small-signal blocks, the RoCoF, sync and
 * linearized nadir rows, and the unit ranges.
 */
inline AllocationModel build_standard(const SystemCase& c, const ReducedNetwork& r, const ConstraintParams& params,
                                      const std::vector<CostCoefficients>& costs)
{
    AllocationModel am = detail::base_model(c, r, params, costs);
    const Eigen::Index n = r.size();
    const Vector zero = Vector::Zero(n);
    am.scenarios = {r.L};
    am.problem.lmis.push_back(detail::decay_lmi(am, zero, zero, "decay"));
    am.problem.lmis.push_back(detail::shift_lmi(am, r.L, zero, zero, "shift"));
    am.problem.lmis.push_back(detail::cone_lmi(am, r.L, zero, "cone"));
    detail::frequency_rows(am, 0.0, 0.0, "");
    return am;
}

/**
 * @brief Robust program: small-signal blocks replicated over every network scenario and the
 * worst box corners, frequency rows at the smallest inertia and damping totals.
 */
inline AllocationModel build_robust(const SystemCase& c, const ReducedNetwork& r, const ConstraintParams& params,
                                    const std::vector<CostCoefficients>& costs, const UncertaintySpec& unc)
{
    if (unc.empty()) {
        return build_standard(c, r, params, costs);
    }
    AllocationModel am = detail::base_model(c, r, params, costs);
    am.scenarios = detail::scenario_matrices(c, r, unc);
    const Vector m_lo = detail::bus_box(r, unc.inertia_box, false), m_hi = detail::bus_box(r, unc.inertia_box, true);
    const Vector d_lo = detail::bus_box(r, unc.damping_box, false), d_hi = detail::bus_box(r, unc.damping_box, true);
    auto& p = am.problem;
    detail::push_unique(p, detail::decay_lmi(am, m_hi, d_lo, "decay"));
    for (std::size_t s = 0; s < am.scenarios.size(); ++s) {
        const std::string tag = "[" + std::to_string(s) + "]";
        const Matrix& l = am.scenarios[s];
        int corner = 0;
        for (const Vector* dd : {&d_lo, &d_hi}) {
            for (const Vector* dm : {&m_lo, &m_hi}) {
                detail::push_unique(p, detail::shift_lmi(am, l, *dm, *dd, "shift" + tag + "[" + std::to_string(corner++) + "]"));
            }
        }
    }
    for (std::size_t s = 0; s < am.scenarios.size(); ++s) {
        detail::push_unique(p, detail::cone_lmi(am, am.scenarios[s], d_lo, "cone[" + std::to_string(s) + "]"));
    }
    detail::frequency_rows(am, m_lo.sum(), d_lo.sum(), "");
    return am;
}

enum class SparsityTarget { Inertia, Damping, Both };

/// Adds weight * m_k (and/or d_k) to the objective of the listed units (ids).
inline AllocationModel add_sparsity(AllocationModel am, const std::vector<std::string>& unit_ids, double weight,
                                    SparsityTarget target = SparsityTarget::Inertia)
{
    if (weight < 0.0) {
        throw Error(ErrorKind::InvalidInput, "sparsity weight must be non-negative");
    }
    for (const auto& id : unit_ids) {
        auto it = std::find(am.unit_ids.begin(), am.unit_ids.end(), id);
        if (it == am.unit_ids.end()) {
            throw Error(ErrorKind::InvalidInput, "sparsity penalty names unknown unit " + id);
        }
        const UnitMapping& u = am.mapping[static_cast<std::size_t>(it - am.unit_ids.begin())];
        CostCoefficients& cc = am.costs[u.unit];
        if (target != SparsityTarget::Damping) {
            cc.mu_m += weight;
            if (u.m_var >= 0) {
                am.problem.variables[static_cast<std::size_t>(u.m_var)].lin += weight * u.m_coef;
            } else {
                am.problem.objective_constant += weight * u.m_const;
            }
        }
        if (target != SparsityTarget::Inertia) {
            cc.mu_d += weight;
            if (u.d_var >= 0) {
                am.problem.variables[static_cast<std::size_t>(u.d_var)].lin += weight;
            } else {
                am.problem.objective_constant += weight * u.d_const;
            }
        }
    }
    return am;
}

/// Per-unit and nodal values of a solution vector; SG units report their fixed parameters.
inline Allocation decode(const AllocationModel& am, const SystemCase& c, const Vector& x)
{
    Allocation a;
    a.node_bus = am.node_bus;
    a.node_m = am.node_m(x);
    a.node_d = am.node_d(x);
    a.v = x(am.v_var);
    for (const auto& um : am.mapping) {
        const auto& u = c.units[um.unit];
        UnitAllocation ua{u.id, u.bus, u.kind, um.m(x), um.d(x), 0.0};
        ua.cost = u.adjustable() ? am.costs[um.unit].evaluate(ua.m, ua.d) : 0.0;
        a.objective += ua.cost;
        a.units.push_back(ua);
    }
    return a;
}

/// Sum of unit costs at a decoded allocation.
inline double total_cost(const std::vector<CostCoefficients>& costs, const Allocation& a)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.units.size(); ++k) {
        if (a.units[k].kind != UnitKind::SG) {
            s += costs[k].evaluate(a.units[k].m, a.units[k].d);
        }
    }
    return s;
}

/// Solves the model and decodes it; throws Infeasible or Numerical on failure.
inline Allocation solve_allocation(const AllocationModel& am, const SystemCase& c, const SolverConfig& cfg = {})
{
    Solution sol = solve(am.problem, cfg);
    if (sol.status == SolveStatus::Infeasible) {
        throw Error(ErrorKind::Infeasible, "allocation problem is infeasible: " + sol.message);
    }
    if (sol.status != SolveStatus::Optimal) {
        throw Error(ErrorKind::Numerical, std::string("allocation solve failed (") + to_string(sol.status) + "): " + sol.message);
    }
    Allocation a = decode(am, c, sol.values);
    a.solution = std::move(sol);
    return a;
}

} // namespace hodi
