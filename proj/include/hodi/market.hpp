#pragma once

#include "hodi/allocation.hpp"

#include <future>
#include <random>
#include <string>
#include <vector>

namespace hodi {

struct Bid {
    std::string unit;
    CostCoefficients cost;
    Range m_range;
    Range d_range;
    bool operator==(const Bid&) const = default;
};

/// C(m, d) of a bid; (m, d) must lie in the bid's ranges.
inline double evaluate_cost(const Bid& bid, double m, double d, double tol = 1e-7)
{
    const double tm = tol * std::max(1.0, bid.m_range.max);
    const double td = tol * std::max(1.0, bid.d_range.max);
    if (!bid.m_range.contains(m, tm) || !bid.d_range.contains(d, td)) {
        throw Error(ErrorKind::InvalidInput, "unit " + bid.unit + ": (m, d) = (" + format_double(m) + ", " + format_double(d)
                                                 + ") outside the bid ranges");
    }
    return bid.cost.evaluate(m, d);
}

/// Bids from the case file: each adjustable unit's own cost and ranges.
inline std::vector<Bid> case_bids(const SystemCase& c)
{
    std::vector<Bid> out;
    for (const auto& u : c.units) {
        if (u.adjustable()) {
            if (!u.cost) {
                throw Error(ErrorKind::InvalidInput, "unit " + u.id + " has no cost coefficients");
            }
            out.push_back({u.id, *u.cost, u.m_range, u.d_range});
        }
    }
    return out;
}

/**
 * @brief Random linear-quadratic prices: p ~ U[price_min, price_max] per unit, mu_m = p * eps_RoCoF,
 * mu_d = p * eps_nadir (both in rad units), rho = mu / quadratic_divisor.
 *
 * Draws come from mt19937_64 mapped to [0, 1) with 53 bits, so the result is the same on every platform.
 */
inline std::vector<Bid> price_recipe_bids(const SystemCase& c, const ConstraintParams& params, const MarketConfig& cfg)
{
    std::mt19937_64 rng(cfg.seed);
    std::vector<Bid> out;
    for (const auto& u : c.units) {
        if (!u.adjustable()) {
            continue;
        }
        const double unit01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const double p = cfg.price_min + (cfg.price_max - cfg.price_min) * unit01;
        CostCoefficients k;
        k.mu_m = p * params.rocof_limit;
        k.mu_d = p * params.nadir_limit;
        k.rho_m = k.mu_m / cfg.quadratic_divisor;
        k.rho_d = k.mu_d / cfg.quadratic_divisor;
        out.push_back({u.id, k, u.m_range, u.d_range});
    }
    return out;
}

/// Case copy whose adjustable units carry the bid costs and ranges. Every adjustable unit needs a bid.
inline SystemCase apply_bids(const SystemCase& c, const std::vector<Bid>& bids)
{
    SystemCase out = c;
    for (auto& u : out.units) {
        if (!u.adjustable()) {
            continue;
        }
        auto it = std::find_if(bids.begin(), bids.end(), [&](const Bid& b) { return b.unit == u.id; });
        if (it == bids.end()) {
            throw Error(ErrorKind::InvalidInput, "no bid for adjustable unit " + u.id);
        }
        u.cost = it->cost;
        u.m_range = it->m_range;
        u.d_range = it->d_range;
    }
    for (const auto& b : bids) {
        auto it = std::find_if(c.units.begin(), c.units.end(), [&](const GeneratorUnit& u) { return u.id == b.unit; });
        if (it == c.units.end() || !it->adjustable()) {
            throw Error(ErrorKind::InvalidInput, "bid for unknown or non-adjustable unit " + b.unit);
        }
    }
    validate(out);
    return out;
}

enum class MarketVariant { Standard, Robust };

struct ClearingOptions {
    MarketVariant variant = MarketVariant::Standard;
    std::vector<std::string> sparse_units;
    double sparsity_weight = 0.0;
    SparsityTarget sparsity_target = SparsityTarget::Inertia;
    SolverConfig solver;
};

struct Clearing {
    SystemCase bid_case;           // case with the bids applied
    Allocation allocation;         // after the equal-split rule
    std::vector<bool> split_adjusted;  // per unit: equal shares violated a range, headroom split used
};

namespace detail {

inline AllocationModel market_model(const SystemCase& c, const ReducedNetwork& r, const ConstraintParams& params,
                                    const ClearingOptions& opt)
{
    AllocationModel am = opt.variant == MarketVariant::Robust
        ? build_robust(c, r, params, case_costs(c), c.uncertainty.value_or(UncertaintySpec{}))
        : build_standard(c, r, params, case_costs(c));
    if (opt.sparsity_weight > 0.0 && !opt.sparse_units.empty()) {
        am = add_sparsity(std::move(am), opt.sparse_units, opt.sparsity_weight, opt.sparsity_target);
    }
    return am;
}

/// Splits `total` over ranges: equally when every share fits, otherwise in proportion to headroom.
inline std::vector<double> split_award(double total, const std::vector<Range>& ranges, bool& adjusted)
{
    const double share = total / static_cast<double>(ranges.size());
    std::vector<double> out(ranges.size(), share);
    adjusted = false;
    for (const auto& r : ranges) {
        adjusted = adjusted || !r.contains(share, 1e-9 * std::max(1.0, r.max));
    }
    if (!adjusted) {
        return out;
    }
    double floor = 0.0, room = 0.0;
    for (const auto& r : ranges) {
        floor += r.min;
        room += r.max - r.min;
    }
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const double w = room > 0.0 ? (ranges[i].max - ranges[i].min) / room : 1.0 / static_cast<double>(ranges.size());
        out[i] = ranges[i].min + (total - floor) * w;
    }
    return out;
}

/// Identical bids at the same bus (same kind and coupling) share the bus-level award.
inline std::vector<bool> apply_equal_split(const SystemCase& c, const std::vector<CostCoefficients>& costs, Allocation& a)
{
    std::vector<bool> adjusted(c.units.size(), false);
    std::vector<bool> done(c.units.size(), false);
    for (std::size_t i = 0; i < c.units.size(); ++i) {
        const auto& ui = c.units[i];
        if (done[i] || !ui.adjustable()) {
            continue;
        }
        std::vector<std::size_t> group{i};
        for (std::size_t j = i + 1; j < c.units.size(); ++j) {
            const auto& uj = c.units[j];
            if (!done[j] && uj.adjustable() && uj.bus == ui.bus && uj.kind == ui.kind && uj.coupled() == ui.coupled()
                && costs[j] == costs[i] && (!ui.coupled() || uj.coupling_ratio() == ui.coupling_ratio())) {
                group.push_back(j);
            }
        }
        for (std::size_t k : group) {
            done[k] = true;
        }
        if (group.size() < 2) {
            continue;
        }
        double tm = 0.0, td = 0.0;
        std::vector<Range> mr, dr;
        for (std::size_t k : group) {
            tm += a.units[k].m;
            td += a.units[k].d;
            mr.push_back(c.units[k].m_range);
            dr.push_back(c.units[k].d_range);
        }
        bool adj_m = false, adj_d = false;
        std::vector<double> ms, ds;
        if (ui.coupled()) {
            ds = split_award(td, dr, adj_d);
            for (double d : ds) {
                ms.push_back(ui.coupling_ratio() * d);
            }
        } else {
            ms = split_award(tm, mr, adj_m);
            ds = split_award(td, dr, adj_d);
        }
        for (std::size_t g = 0; g < group.size(); ++g) {
            auto& u = a.units[group[g]];
            u.m = ms[g];
            u.d = ds[g];
            u.cost = costs[group[g]].evaluate(u.m, u.d);
            adjusted[group[g]] = adj_m || adj_d;
        }
    }
    a.objective = 0.0;
    for (const auto& u : a.units) {
        a.objective += u.cost;
    }
    return adjusted;
}

} // namespace detail

/// Solves the allocation program on the bid case and applies the equal-split rule.
inline Clearing clear(const SystemCase& c, const std::vector<Bid>& bids, const ConstraintParams& params,
                      const ClearingOptions& opt = {})
{
    Clearing out;
    out.bid_case = apply_bids(c, bids);
    const ReducedNetwork r = reduce_case(out.bid_case);
    const AllocationModel am = detail::market_model(out.bid_case, r, params, opt);
    out.allocation = solve_allocation(am, out.bid_case, opt.solver);
    const auto costs = case_costs(out.bid_case);
    // Unit costs are reported at the bid prices, without any sparsity penalty.
    for (std::size_t k = 0; k < out.allocation.units.size(); ++k) {
        auto& u = out.allocation.units[k];
        u.cost = u.kind == UnitKind::SG ? 0.0 : costs[k].evaluate(u.m, u.d);
    }
    out.split_adjusted = detail::apply_equal_split(out.bid_case, costs, out.allocation);
    return out;
}

struct UnitOutcome {
    std::string unit;
    int bus = 0;
    double m = 0.0;
    double d = 0.0;
    double cost = 0.0;
    double payment = 0.0;
    std::string status;  // optimal, pivotal-infeasible, split-adjusted, or the re-solve failure
    double objective_without = 0.0;
};

struct MarketOutcome {
    std::vector<UnitOutcome> units;
    double total_cost = 0.0;
    double total_payment = 0.0;
    double objective_with = 0.0;
};

/**
 * @brief VCG payments q_i = (cost of the others when unit i offers nothing) - (their cost at the clearing).
 *
 * Re-solves run concurrently, one task per adjustable unit, and are collected in unit order.
 * A re-solve that is infeasible makes unit i pivotal; it is paid the configured cap, by default the
 * cost of every other unit at its range maxima.
 */
inline MarketOutcome vcg_payments(const Clearing& base, const ConstraintParams& params, const ClearingOptions& opt = {},
                                  std::optional<double> payment_cap = std::nullopt)
{
    const SystemCase& c = base.bid_case;
    const auto costs = case_costs(c);
    const ReducedNetwork r = reduce_case(c);
    MarketOutcome out;
    out.objective_with = base.allocation.objective;

    struct Resolve {
        SolveStatus status = SolveStatus::NumericalFailure;
        double others = 0.0;
        std::string message;
    };
    auto resolve_without = [&](std::size_t i) {
        Resolve res;
        SystemCase without = c;
        without.units[i].m_range = {0.0, 0.0};
        without.units[i].d_range = {0.0, 0.0};
        try {
            const AllocationModel am = detail::market_model(without, r, params, opt);
            Solution sol = solve(am.problem, opt.solver);
            res.status = sol.status;
            res.message = sol.message;
            if (sol.optimal()) {
                const Allocation a = decode(am, without, sol.values);
                for (std::size_t k = 0; k < a.units.size(); ++k) {
                    if (k != i && c.units[k].adjustable()) {
                        res.others += costs[k].evaluate(a.units[k].m, a.units[k].d);
                    }
                }
            }
        } catch (const Error& e) {
            // Nothing left to allocate once the only adjustable unit is removed.
            res.status = SolveStatus::Infeasible;
            res.message = e.what();
        }
        return res;
    };

    std::vector<std::size_t> order;
    std::vector<std::future<Resolve>> tasks;
    for (std::size_t i = 0; i < c.units.size(); ++i) {
        if (c.units[i].adjustable()) {
            order.push_back(i);
            tasks.push_back(std::async(std::launch::async, resolve_without, i));
        }
    }
    for (std::size_t t = 0; t < order.size(); ++t) {
        const std::size_t i = order[t];
        const Resolve res = tasks[t].get();
        const auto& ua = base.allocation.units[i];
        UnitOutcome uo{ua.id, ua.bus, ua.m, ua.d, ua.cost, 0.0, "optimal", 0.0};
        double others_with = 0.0;
        for (std::size_t k = 0; k < c.units.size(); ++k) {
            if (k != i && c.units[k].adjustable()) {
                others_with += base.allocation.units[k].cost;
            }
        }
        if (res.status == SolveStatus::Optimal) {
            uo.objective_without = res.others;
            uo.payment = res.others - others_with;
        } else if (res.status == SolveStatus::Infeasible) {
            double cap = 0.0;
            if (payment_cap) {
                cap = *payment_cap;
            } else {
                for (std::size_t k = 0; k < c.units.size(); ++k) {
                    const auto& u = c.units[k];
                    if (k == i || !u.adjustable()) {
                        continue;
                    }
                    double dmax = u.d_range.max, mmax = u.m_range.max;
                    if (u.coupled()) {
                        dmax = std::min(dmax, u.m_range.max / u.coupling_ratio());
                        mmax = u.coupling_ratio() * dmax;
                    }
                    cap += costs[k].evaluate(mmax, dmax);
                }
            }
            uo.objective_without = cap;
            uo.payment = cap;
            uo.status = "pivotal-infeasible";
        } else {
            uo.status = std::string("resolve-") + to_string(res.status);
        }
        if (base.split_adjusted[i] && uo.status == "optimal") {
            uo.status = "split-adjusted";
        }
        out.total_cost += uo.cost;
        out.total_payment += uo.payment;
        out.units.push_back(uo);
    }
    return out;
}

} // namespace hodi
