#pragma once

#include "hodi/core.hpp"

#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hodi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex program with a diagonal quadratic objective, box bounds, linear inequalities
/// a^T x >= rhs and affine LMIs F0 + sum_i x_i F_i >= 0.
struct ConicProblem {
    struct Variable {
        std::string name;
        double lo = -kInf;
        double hi = kInf;
        double quad = 0.0;  // objective coefficient of x^2 (>= 0)
        double lin = 0.0;   // objective coefficient of x
    };
    struct Linear {
        std::string name;
        std::vector<std::pair<int, double>> coeffs;
        double rhs = 0.0;
    };
    struct Lmi {
        std::string name;
        Matrix constant;
        std::vector<std::pair<int, Matrix>> terms;

        Matrix evaluate(const Vector& x) const
        {
            Matrix f = constant;
            for (const auto& [var, coef] : terms) {
                f += x(var) * coef;
            }
            return f;
        }
    };

    std::vector<Variable> variables;
    double objective_constant = 0.0;
    std::vector<Linear> linear;
    std::vector<Lmi> lmis;

    int add_variable(std::string name, double lo, double hi, double quad = 0.0, double lin = 0.0)
    {
        variables.push_back({std::move(name), lo, hi, quad, lin});
        return static_cast<int>(variables.size()) - 1;
    }
    Eigen::Index size() const { return static_cast<Eigen::Index>(variables.size()); }

    double objective(const Vector& x) const
    {
        double f = objective_constant;
        for (std::size_t i = 0; i < variables.size(); ++i) {
            const double xi = x(static_cast<Eigen::Index>(i));
            f += variables[i].quad * xi * xi + variables[i].lin * xi;
        }
        return f;
    }
    double linear_value(const Linear& row, const Vector& x) const
    {
        double s = 0.0;
        for (const auto& [var, a] : row.coeffs) {
            s += a * x(var);
        }
        return s;
    }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(SolveStatus s)
{
    switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical-failure";
    }
    return "?";
}

struct SolverLogEntry {
    int iteration = 0;
    double mu = 0.0;         // 1/t
    double objective = 0.0;
    double max_residual = 0.0;
};

struct Solution;

struct SolverConfig {
    enum class Backend { BuiltIn, External };

    int max_iterations = 2000;              // total Newton steps over both phases
    double feasibility_tolerance = 1e-8;
    double relative_gap_tolerance = 1e-7;
    double initial_barrier_weight = 0.0;    // 0 selects t0 from the phase-I point
    double barrier_growth = 5.0;            // t <- t / 0.2
    Backend backend = Backend::BuiltIn;
    std::function<Solution(const ConicProblem&, const SolverConfig&)> external;
    bool keep_log = false;
};

struct Solution {
    SolveStatus status = SolveStatus::NumericalFailure;
    Vector values;
    double objective_value = 0.0;
    double stationarity = 0.0;       // |grad f + barrier multipliers| at the final centering
    double primal_infeasibility = 0.0;
    double duality_gap = 0.0;        // barrier degree / t
    double relative_gap = 0.0;
    double phase1_slack = 0.0;       // maximized slack; negative proves infeasibility
    std::vector<double> min_lmi_eigenvalues;
    int iterations = 0;
    std::string message;
    std::vector<SolverLogEntry> log;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

namespace detail {

/// Normalized problem the barrier iterations work on: finite bounds, dense linear rows,
/// LMI terms stored as low-rank factors F_i = sum_r sigma_r u_r u_r^T.
struct BarrierProblem {
    Vector lo, hi, quad, lin;
    double constant = 0.0;
    Matrix a;  // linear rows, a x >= b
    Vector b;
    struct Block {
        Matrix f0;
        Matrix u;                  // N x K factors
        Vector sigma;              // K
        std::vector<int> owner;    // K, variable index
    };
    std::vector<Block> blocks;

    Eigen::Index n() const { return lo.size(); }
    double degree() const
    {
        double deg = static_cast<double>(a.rows() + 2 * n());
        for (const auto& blk : blocks) {
            deg += static_cast<double>(blk.f0.rows());
        }
        return deg;
    }
    double objective(const Vector& x) const { return constant + quad.dot(x.cwiseProduct(x)) + lin.dot(x); }
    Matrix block_value(const Block& blk, const Vector& x) const
    {
        Vector w(blk.sigma.size());
        for (Eigen::Index r = 0; r < w.size(); ++r) {
            w(r) = blk.sigma(r) * x(blk.owner[static_cast<std::size_t>(r)]);
        }
        return blk.f0 + blk.u * w.asDiagonal() * blk.u.transpose();
    }
};

inline void add_factors(BarrierProblem::Block& blk, const Matrix& coef, int owner)
{
    const Eigen::Index n = coef.rows();
    const double scale = coef.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        return;
    }
    std::vector<std::pair<Vector, double>> fac;
    const bool diagonal = (coef - Matrix(coef.diagonal().asDiagonal())).cwiseAbs().maxCoeff() <= 1e-14 * scale;
    if (diagonal) {
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(coef(r, r)) > 1e-14 * scale) {
                fac.emplace_back(Vector::Unit(n, r), coef(r, r));
            }
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (coef + coef.transpose()));
        const double emax = es.eigenvalues().cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(es.eigenvalues()(r)) > 1e-13 * emax) {
                fac.emplace_back(es.eigenvectors().col(r), es.eigenvalues()(r));
            }
        }
    }
    const Eigen::Index k0 = blk.u.cols();
    blk.u.conservativeResize(n, k0 + static_cast<Eigen::Index>(fac.size()));
    blk.sigma.conservativeResize(k0 + static_cast<Eigen::Index>(fac.size()));
    for (std::size_t i = 0; i < fac.size(); ++i) {
        blk.u.col(k0 + static_cast<Eigen::Index>(i)) = fac[i].first;
        blk.sigma(k0 + static_cast<Eigen::Index>(i)) = fac[i].second;
        blk.owner.push_back(owner);
    }
}

struct Evaluation {
    bool feasible = false;
    double value = kInf;
    Vector grad;
    Matrix hess;
};

/// phi_t(x) = t f(x) - sum log(slacks) - sum log det(F_k(x)).
inline Evaluation evaluate_barrier(const BarrierProblem& p, const Vector& x, double t, bool derivatives)
{
    Evaluation ev;
    const Eigen::Index n = p.n();
    double val = t * p.objective(x);
    if (derivatives) {
        ev.grad = t * (2.0 * p.quad.cwiseProduct(x) + p.lin);
        ev.hess = Matrix::Zero(n, n);
        ev.hess.diagonal() = 2.0 * t * p.quad;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sl = x(i) - p.lo(i);
        const double su = p.hi(i) - x(i);
        if (!(sl > 0.0) || !(su > 0.0)) {
            return ev;
        }
        val -= std::log(sl) + std::log(su);
        if (derivatives) {
            ev.grad(i) += -1.0 / sl + 1.0 / su;
            ev.hess(i, i) += 1.0 / (sl * sl) + 1.0 / (su * su);
        }
    }
    if (p.a.rows() > 0) {
        const Vector s = p.a * x - p.b;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            if (!(s(j) > 0.0)) {
                return ev;
            }
            val -= std::log(s(j));
        }
        if (derivatives) {
            const Vector inv = s.cwiseInverse();
            ev.grad -= p.a.transpose() * inv;
            const Matrix as = inv.asDiagonal() * p.a;
            ev.hess += as.transpose() * as;
        }
    }
    for (const auto& blk : p.blocks) {
        const Matrix f = p.block_value(blk, x);
        Eigen::LLT<Matrix> llt(f);
        if (llt.info() != Eigen::Success) {
            return ev;
        }
        const Matrix& lmat = llt.matrixLLT();
        double logdet = 0.0;
        for (Eigen::Index r = 0; r < f.rows(); ++r) {
            const double piv = lmat(r, r);
            if (!(piv > 0.0) || !std::isfinite(piv)) {
                return ev;
            }
            logdet += 2.0 * std::log(piv);
        }
        val -= logdet;
        if (derivatives && blk.u.cols() > 0) {
            // G = U^T F^{-1} U computed through the Cholesky factor.
            const Matrix y = llt.matrixL().solve(blk.u);
            const Matrix g = y.transpose() * y;
            const Eigen::Index k = g.rows();
            for (Eigen::Index r = 0; r < k; ++r) {
                const int i = blk.owner[static_cast<std::size_t>(r)];
                ev.grad(i) -= blk.sigma(r) * g(r, r);
                for (Eigen::Index s2 = 0; s2 < k; ++s2) {
                    const int j = blk.owner[static_cast<std::size_t>(s2)];
                    ev.hess(i, j) += blk.sigma(r) * blk.sigma(s2) * g(r, s2) * g(r, s2);
                }
            }
        }
    }
    if (!std::isfinite(val)) {
        return ev;
    }
    ev.feasible = true;
    ev.value = val;
    return ev;
}

struct CenteringResult {
    bool converged = false;
    int steps = 0;
    double decrement = 0.0;
    Vector grad;  // barrier gradient at the final point
};

/// Damped Newton centering for fixed t, starting from a strictly feasible x.
inline CenteringResult center(const BarrierProblem& p, Vector& x, double t, int max_steps,
                              const std::function<bool(const Vector&)>& stop_early = nullptr)
{
    CenteringResult res;
    for (int step = 0; step < max_steps; ++step) {
        Evaluation ev = evaluate_barrier(p, x, t, true);
        if (!ev.feasible) {
            return res;
        }
        res.grad = ev.grad;
        // Jacobi scaling keeps variables of very different magnitudes well conditioned.
        Vector sc = ev.hess.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        const Matrix hs = sc.asDiagonal() * ev.hess * sc.asDiagonal();
        const Vector gs = sc.cwiseProduct(ev.grad);
        Eigen::LDLT<Matrix> ldlt(hs);
        Vector dx = -sc.cwiseProduct(ldlt.solve(gs));
        if (!dx.allFinite()) {
            return res;
        }
        const double lambda2 = -ev.grad.dot(dx);
        res.decrement = lambda2;
        ++res.steps;
        // Below the rounding level of the barrier value no step can be verified as progress.
        const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(ev.value);
        if (lambda2 / 2.0 <= std::max(1e-10, roundoff)) {
            res.converged = true;
            return res;
        }
        // Backtracking line search on the barrier, staying strictly feasible.
        double alpha = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 80; ++ls) {
            const Vector xn = x + alpha * dx;
            const Evaluation trial = evaluate_barrier(p, xn, t, false);
            if (trial.feasible && trial.value <= ev.value - 0.01 * alpha * lambda2) {
                x = xn;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            // Step too small to make progress: accept the current point as centered if the
            // decrement is already tiny.
            res.converged = lambda2 <= 1e-6;
            return res;
        }
        if (stop_early && stop_early(x)) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

struct PathResult {
    bool converged = false;
    bool stopped_early = false;
    double t = 1.0;
    int steps = 0;
    double stationarity = 0.0;
};

inline PathResult follow_path(const BarrierProblem& p, Vector& x, double t0, const SolverConfig& cfg, double abs_gap,
                              double rel_gap, int& budget, std::vector<SolverLogEntry>* log,
                              const std::function<bool(const Vector&)>& stop_early = nullptr)
{
    PathResult out;
    double t = t0;
    const double deg = p.degree();
    int outer = 0;
    while (budget > 0) {
        CenteringResult c = center(p, x, t, std::min(budget, 200), stop_early);
        budget -= c.steps;
        out.steps += c.steps;
        out.t = t;
        if (c.grad.size() > 0) {
            out.stationarity = c.grad.cwiseAbs().maxCoeff() / t;
        }
        if (log) {
            log->push_back({++outer, 1.0 / t, p.objective(x), c.decrement});
        }
        if (stop_early && stop_early(x)) {
            out.stopped_early = true;
            out.converged = true;
            return out;
        }
        if (!c.converged) {
            return out;
        }
        const double f = p.objective(x);
        if (deg / t <= std::max(abs_gap, rel_gap * std::max(1.0, std::abs(f)))) {
            out.converged = true;
            return out;
        }
        t *= cfg.barrier_growth;
    }
    return out;
}

struct Presolved {
    BarrierProblem bp;
    std::vector<int> var_map;      // reduced index -> original index
    Vector fixed;                  // original-length values for fixed variables
    std::vector<bool> is_fixed;
    std::vector<bool> artificial_lo, artificial_hi;
    bool infeasible = false;
    double infeasible_slack = 0.0;
    std::string message;
};

inline double data_scale(const ConicProblem& prob)
{
    double s = 1.0;
    for (const auto& v : prob.variables) {
        if (std::isfinite(v.lo)) {
            s = std::max(s, std::abs(v.lo));
        }
        if (std::isfinite(v.hi)) {
            s = std::max(s, std::abs(v.hi));
        }
    }
    for (const auto& row : prob.linear) {
        s = std::max(s, std::abs(row.rhs));
    }
    for (const auto& l : prob.lmis) {
        if (l.constant.size() > 0) {
            s = std::max(s, l.constant.cwiseAbs().maxCoeff());
        }
    }
    return s;
}

inline Presolved presolve(const ConicProblem& prob)
{
    Presolved ps;
    const auto n = prob.size();
    ps.fixed = Vector::Zero(n);
    ps.is_fixed.assign(static_cast<std::size_t>(n), false);
    std::vector<int> reduced_index(static_cast<std::size_t>(n), -1);
    const double big = 1e3 * data_scale(prob);
    std::vector<double> lo, hi, quad, lin;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = prob.variables[static_cast<std::size_t>(i)];
        if (v.lo > v.hi) {
            ps.infeasible = true;
            ps.infeasible_slack = v.hi - v.lo;
            ps.message = "empty bound interval for " + v.name;
            return ps;
        }
        if (std::isfinite(v.lo) && v.lo == v.hi) {
            ps.is_fixed[static_cast<std::size_t>(i)] = true;
            ps.fixed(i) = v.lo;
            ps.bp.constant += v.quad * v.lo * v.lo + v.lin * v.lo;
            continue;
        }
        reduced_index[static_cast<std::size_t>(i)] = static_cast<int>(ps.var_map.size());
        ps.var_map.push_back(static_cast<int>(i));
        ps.artificial_lo.push_back(!std::isfinite(v.lo));
        ps.artificial_hi.push_back(!std::isfinite(v.hi));
        double l = std::isfinite(v.lo) ? v.lo : (std::isfinite(v.hi) ? v.hi - 2 * big : -big);
        double h = std::isfinite(v.hi) ? v.hi : (std::isfinite(v.lo) ? v.lo + 2 * big : big);
        lo.push_back(l);
        hi.push_back(h);
        quad.push_back(v.quad);
        lin.push_back(v.lin);
    }
    ps.bp.constant += prob.objective_constant;
    const auto nr = static_cast<Eigen::Index>(ps.var_map.size());
    auto to_vec = [](const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); };
    ps.bp.lo = to_vec(lo);
    ps.bp.hi = to_vec(hi);
    ps.bp.quad = to_vec(quad);
    ps.bp.lin = to_vec(lin);

    std::vector<Vector> rows;
    std::vector<double> rhs;
    auto push_row = [&](Vector a, double b, const std::string& name) {
        const double scale = std::max({1.0, std::abs(b), a.size() ? a.cwiseAbs().maxCoeff() : 0.0});
        if (a.size() == 0 || a.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
            if (b > 1e-12 * scale) {
                ps.infeasible = true;
                ps.infeasible_slack = std::min(ps.infeasible_slack, -b);
                ps.message = "constant constraint violated: " + name;
            }
            return;
        }
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            if (std::abs(a(j)) <= 1e-14 * scale) {
                a(j) = 0.0;
            }
        }
        rows.push_back(std::move(a));
        rhs.push_back(b);
    };
    for (const auto& row : prob.linear) {
        Vector a = Vector::Zero(nr);
        double b = row.rhs;
        for (const auto& [var, coef] : row.coeffs) {
            const int r = reduced_index[static_cast<std::size_t>(var)];
            if (r < 0) {
                b -= coef * ps.fixed(var);
            } else {
                a(r) += coef;
            }
        }
        push_row(std::move(a), b, row.name);
    }
    for (const auto& lmi : prob.lmis) {
        const Eigen::Index bn = lmi.constant.rows();
        Matrix f0 = lmi.constant;
        std::vector<std::pair<int, Matrix>> terms;
        for (const auto& [var, coef] : lmi.terms) {
            const int r = reduced_index[static_cast<std::size_t>(var)];
            if (r < 0) {
                f0 += ps.fixed(var) * coef;
            } else {
                terms.emplace_back(r, coef);
            }
        }
        double scale = f0.size() ? f0.cwiseAbs().maxCoeff() : 0.0;
        for (const auto& [r, coef] : terms) {
            scale = std::max(scale, coef.cwiseAbs().maxCoeff());
        }
        const double zero_tol = 1e-13 * std::max(1.0, scale);
        // Rows that are structurally zero in every coefficient carry no constraint.
        std::vector<Eigen::Index> keep;
        bool off_diagonal = false;
        for (Eigen::Index r = 0; r < bn; ++r) {
            bool nonzero = f0.row(r).cwiseAbs().maxCoeff() > zero_tol;
            for (const auto& [v, coef] : terms) {
                nonzero = nonzero || coef.row(r).cwiseAbs().maxCoeff() > zero_tol;
            }
            if (nonzero) {
                keep.push_back(r);
            } else if (f0(r, r) < -zero_tol) {
                ps.infeasible = true;
            }
        }
        for (Eigen::Index i : keep) {
            for (Eigen::Index j : keep) {
                if (i == j) {
                    continue;
                }
                bool nz = std::abs(f0(i, j)) > zero_tol;
                for (const auto& [v, coef] : terms) {
                    nz = nz || std::abs(coef(i, j)) > zero_tol;
                }
                off_diagonal = off_diagonal || nz;
            }
        }
        if (keep.empty()) {
            continue;
        }
        if (!off_diagonal) {
            for (Eigen::Index r : keep) {
                Vector a = Vector::Zero(nr);
                for (const auto& [v, coef] : terms) {
                    a(v) += coef(r, r);
                }
                push_row(std::move(a), -f0(r, r), lmi.name + "[" + std::to_string(r) + "]");
            }
            continue;
        }
        BarrierProblem::Block blk;
        blk.f0 = f0(keep, keep);
        blk.u = Matrix::Zero(static_cast<Eigen::Index>(keep.size()), 0);
        for (const auto& [v, coef] : terms) {
            add_factors(blk, coef(keep, keep), v);
        }
        ps.bp.blocks.push_back(std::move(blk));
    }
    ps.bp.a = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), nr);
    ps.bp.b = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        ps.bp.a.row(static_cast<Eigen::Index>(j)) = rows[j].transpose();
        ps.bp.b(static_cast<Eigen::Index>(j)) = rhs[j];
    }
    return ps;
}

inline Vector expand(const Presolved& ps, const Vector& xr)
{
    Vector x = ps.fixed;
    for (std::size_t i = 0; i < ps.var_map.size(); ++i) {
        x(ps.var_map[i]) = xr(static_cast<Eigen::Index>(i));
    }
    return x;
}

/// Smallest eigenvalue over all LMI blocks and minimum linear slack of the normalized problem.
inline double min_margin(const BarrierProblem& p, const Vector& x)
{
    double m = kInf;
    if (p.a.rows() > 0) {
        m = std::min(m, (p.a * x - p.b).minCoeff());
    }
    for (const auto& blk : p.blocks) {
        m = std::min(m, min_eigenvalue(p.block_value(blk, x)));
    }
    return m;
}

struct PhaseOneResult {
    bool feasible = false;
    Vector x;
    double slack = 0.0;
    int steps = 0;
    bool numerical_failure = false;
};

/// Maximizes the common slack s in F_k(x) - s I >= 0, a x - b >= s over the box interior.
inline PhaseOneResult phase_one(const BarrierProblem& p, const SolverConfig& cfg, int& budget, double target)
{
    PhaseOneResult out;
    const Eigen::Index n = p.n();
    Vector x0 = 0.5 * (p.lo + p.hi);
    out.x = x0;
    const double margin0 = min_margin(p, x0);
    if (margin0 >= target) {
        out.feasible = true;
        out.slack = margin0;
        return out;
    }
    // Variable s enters with coefficient -1 (s is the negated slack): F_k + s I >= 0.
    BarrierProblem aug;
    const double s0 = -margin0 + 1.0;
    aug.lo.resize(n + 1);
    aug.hi.resize(n + 1);
    aug.lo << p.lo, -1.0;
    aug.hi << p.hi, 4.0 * s0 + 1.0;
    aug.quad = Vector::Zero(n + 1);
    aug.lin = Vector::Zero(n + 1);
    aug.lin(n) = 1.0;
    aug.a.resize(p.a.rows(), n + 1);
    if (p.a.rows() > 0) {
        aug.a << p.a, Vector::Ones(p.a.rows());
    }
    aug.b = p.b;
    for (const auto& blk : p.blocks) {
        BarrierProblem::Block b2 = blk;
        add_factors(b2, Matrix::Identity(blk.f0.rows(), blk.f0.rows()), static_cast<int>(n));
        aug.blocks.push_back(std::move(b2));
    }
    Vector z(n + 1);
    z << x0, s0;
    auto stop = [&](const Vector& zz) { return zz(n) <= -target && min_margin(p, zz.head(n)) >= target; };
    const double t0 = std::max(1e-3, aug.degree() / std::max(1.0, std::abs(s0)));
    PathResult pr = follow_path(aug, z, t0, cfg, 1e-10, 0.0, budget, nullptr, stop);
    out.steps = pr.steps;
    out.x = z.head(n);
    out.slack = min_margin(p, out.x);
    out.feasible = out.slack >= target;
    out.numerical_failure = !pr.converged && !out.feasible;
    return out;
}

/// Shrinks variables that only appear through artificial bounds and carry no objective
/// weight (auxiliary certificate variables) toward the smallest value that keeps every
/// constraint satisfied, so reported values do not drift to the artificial box.
inline void polish_free_variables(const Presolved& ps, Vector& x)
{
    const auto& p = ps.bp;
    for (Eigen::Index i = 0; i < p.n(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (p.quad(i) != 0.0 || p.lin(i) != 0.0) {
            continue;
        }
        for (int side = 0; side < 2; ++side) {
            const bool art = side == 0 ? ps.artificial_hi[ui] : ps.artificial_lo[ui];
            if (!art) {
                continue;
            }
            const double target = side == 0 ? (ps.artificial_lo[ui] ? x(i) - 1e12 : p.lo(i)) : p.hi(i);
            const double base_margin = min_margin(p, x);
            if (!(base_margin > 0.0)) {
                continue;
            }
            // Keep at least half of the current margin while moving toward `target`.
            auto ok = [&](double val) {
                Vector y = x;
                y(i) = val;
                return min_margin(p, y) >= 0.5 * base_margin;
            };
            double good = x(i);
            double bad = target;
            if (ok(bad)) {
                x(i) = bad + (side == 0 ? 1e-9 : -1e-9) * std::max(1.0, std::abs(bad));
                if (!ok(x(i))) {
                    x(i) = good;
                }
                continue;
            }
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (good + bad);
                if (ok(mid)) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            x(i) = good;
        }
    }
}

inline Solution solve_builtin(const ConicProblem& prob, const SolverConfig& cfg)
{
    Solution sol;
    sol.values = Vector::Zero(prob.size());
    Presolved ps = presolve(prob);
    if (ps.infeasible) {
        sol.status = SolveStatus::Infeasible;
        sol.phase1_slack = std::min(ps.infeasible_slack, -1e-12);
        sol.message = ps.message.empty() ? "infeasible after presolve" : ps.message;
        return sol;
    }
    const BarrierProblem& bp = ps.bp;
    int budget = cfg.max_iterations;
    const double target = 1e-6;
    PhaseOneResult p1 = phase_one(bp, cfg, budget, target);
    sol.phase1_slack = p1.slack;
    sol.iterations = p1.steps;
    if (!p1.feasible) {
        sol.values = expand(ps, p1.x);
        sol.status = p1.numerical_failure && budget <= 0 ? SolveStatus::NumericalFailure : SolveStatus::Infeasible;
        sol.message = "no strictly feasible point (max slack " + format_double(p1.slack) + ")";
        return sol;
    }
    Vector x = p1.x;
    const double deg = bp.degree();
    const double f0 = bp.objective(x);
    double t0 = cfg.initial_barrier_weight > 0.0 ? cfg.initial_barrier_weight : deg / std::max(1.0, std::abs(f0));
    std::vector<SolverLogEntry> log;
    const double abs_gap = 0.0;
    PathResult pr = follow_path(bp, x, t0, cfg, abs_gap, cfg.relative_gap_tolerance, budget, cfg.keep_log ? &log : nullptr);
    sol.iterations += pr.steps;
    sol.log = std::move(log);
    sol.duality_gap = deg / pr.t;
    Vector xr = x;
    polish_free_variables(ps, xr);
    sol.values = expand(ps, xr);
    sol.objective_value = prob.objective(sol.values);
    sol.relative_gap = sol.duality_gap / std::max(1.0, std::abs(sol.objective_value));
    sol.stationarity = pr.stationarity;
    // Independent feasibility evaluation on the original data.
    double infeas = 0.0;
    for (std::size_t i = 0; i < prob.variables.size(); ++i) {
        const auto& v = prob.variables[i];
        const double xi = sol.values(static_cast<Eigen::Index>(i));
        infeas = std::max({infeas, v.lo - xi, xi - v.hi});
    }
    for (const auto& row : prob.linear) {
        infeas = std::max(infeas, row.rhs - prob.linear_value(row, sol.values));
    }
    for (const auto& lmi : prob.lmis) {
        const double e = min_eigenvalue(lmi.evaluate(sol.values));
        sol.min_lmi_eigenvalues.push_back(e);
        infeas = std::max(infeas, -e);
    }
    sol.primal_infeasibility = infeas;
    bool hit_artificial = false;
    for (std::size_t i = 0; i < ps.var_map.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double width = bp.hi(ii) - bp.lo(ii);
        if ((ps.artificial_hi[i] && bp.hi(ii) - xr(ii) < 1e-3 * width && bp.lin(ii) < 0.0)
            || (ps.artificial_lo[i] && xr(ii) - bp.lo(ii) < 1e-3 * width && bp.lin(ii) > 0.0)) {
            hit_artificial = true;
        }
    }
    if (hit_artificial) {
        sol.status = SolveStatus::Unbounded;
        sol.message = "objective decreases along an unbounded variable";
    } else if (!pr.converged) {
        sol.status = SolveStatus::NumericalFailure;
        sol.message = budget <= 0 ? "iteration limit reached; returning best iterate" : "centering stalled";
    } else if (infeas > cfg.feasibility_tolerance) {
        sol.status = SolveStatus::NumericalFailure;
        sol.message = "final point violates constraints by " + format_double(infeas);
    } else {
        sol.status = SolveStatus::Optimal;
    }
    return sol;
}

} // namespace detail

/// Solves the program with the configured backend. Deterministic for identical inputs.
inline Solution solve(const ConicProblem& prob, const SolverConfig& cfg = {})
{
    for (const auto& v : prob.variables) {
        if (v.quad < 0.0) {
            throw Error(ErrorKind::InvalidInput, "objective must be convex (negative quadratic coefficient on " + v.name + ")");
        }
    }
    if (cfg.backend == SolverConfig::Backend::External) {
        if (!cfg.external) {
            throw Error(ErrorKind::InvalidInput, "external backend selected but none provided");
        }
        return cfg.external(prob, cfg);
    }
    return detail::solve_builtin(prob, cfg);
}

struct FeasiblePoint {
    bool feasible = false;
    Vector x;
    double slack = 0.0;  // min LMI eigenvalue / linear slack at x; negative means infeasible relaxation
};

/// Strictly feasible point (all LMI eigenvalues and linear slacks >= 1e-6) or the best slack found.
inline FeasiblePoint phase1_feasible_point(const ConicProblem& prob, const SolverConfig& cfg = {})
{
    FeasiblePoint out;
    detail::Presolved ps = detail::presolve(prob);
    if (ps.infeasible) {
        out.x = ps.fixed;
        out.slack = std::min(ps.infeasible_slack, -1e-12);
        return out;
    }
    int budget = cfg.max_iterations;
    auto r = detail::phase_one(ps.bp, cfg, budget, 1e-6);
    out.feasible = r.feasible;
    out.x = detail::expand(ps, r.x);
    out.slack = r.slack;
    return out;
}

// ---------------------------------------------------------------------------
// Sparse-block text format
//
//   conic-problem 1
//   variables <n>
//   var <name> <lo> <hi> <quad> <lin>
//   objective-constant <c>
//   linear <rows>
//   row <name> <rhs> <nnz> (<var> <coef>)*
//   lmis <count>
//   lmi <name> <size> <terms>
//   constant <nnz> (<i> <j> <value>)*        upper triangle, i <= j
//   term <var> <nnz> (<i> <j> <value>)*
//   end
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_bound(double x)
{
    if (x == kInf) {
        return "inf";
    }
    if (x == -kInf) {
        return "-inf";
    }
    return format_double(x);
}

inline double parse_bound(const std::string& s)
{
    if (s == "inf") {
        return kInf;
    }
    if (s == "-inf") {
        return -kInf;
    }
    return std::stod(s);
}

inline void write_sym(std::ostream& os, const Matrix& m)
{
    std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> nz;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = i; j < m.cols(); ++j) {
            if (m(i, j) != 0.0) {
                nz.emplace_back(i, j, m(i, j));
            }
        }
    }
    os << nz.size();
    for (const auto& [i, j, v] : nz) {
        os << ' ' << i << ' ' << j << ' ' << format_double(v);
    }
    os << '\n';
}

inline Matrix read_sym(std::istream& is, Eigen::Index n)
{
    std::size_t nnz = 0;
    is >> nnz;
    Matrix m = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < nnz; ++k) {
        Eigen::Index i = 0, j = 0;
        std::string v;
        is >> i >> j >> v;
        m(i, j) = m(j, i) = std::stod(v);
    }
    return m;
}

} // namespace detail

inline void write_problem(std::ostream& os, const ConicProblem& p)
{
    os << "conic-problem 1\n";
    os << "variables " << p.variables.size() << '\n';
    for (const auto& v : p.variables) {
        os << "var " << v.name << ' ' << detail::fmt_bound(v.lo) << ' ' << detail::fmt_bound(v.hi) << ' '
           << format_double(v.quad) << ' ' << format_double(v.lin) << '\n';
    }
    os << "objective-constant " << format_double(p.objective_constant) << '\n';
    os << "linear " << p.linear.size() << '\n';
    for (const auto& r : p.linear) {
        os << "row " << r.name << ' ' << format_double(r.rhs) << ' ' << r.coeffs.size();
        for (const auto& [v, c] : r.coeffs) {
            os << ' ' << v << ' ' << format_double(c);
        }
        os << '\n';
    }
    os << "lmis " << p.lmis.size() << '\n';
    for (const auto& l : p.lmis) {
        os << "lmi " << l.name << ' ' << l.constant.rows() << ' ' << l.terms.size() << '\n';
        os << "constant ";
        detail::write_sym(os, l.constant);
        for (const auto& [v, m] : l.terms) {
            os << "term " << v << ' ';
            detail::write_sym(os, m);
        }
    }
    os << "end\n";
}

inline ConicProblem read_problem(std::istream& is)
{
    auto expect = [&](const std::string& word) {
        std::string w;
        is >> w;
        if (w != word) {
            throw Error(ErrorKind::InvalidInput, "problem file: expected '" + word + "', found '" + w + "'");
        }
    };
    ConicProblem p;
    expect("conic-problem");
    int version = 0;
    is >> version;
    expect("variables");
    std::size_t nv = 0;
    is >> nv;
    for (std::size_t i = 0; i < nv; ++i) {
        expect("var");
        ConicProblem::Variable v;
        std::string lo, hi, q, c;
        is >> v.name >> lo >> hi >> q >> c;
        v.lo = detail::parse_bound(lo);
        v.hi = detail::parse_bound(hi);
        v.quad = std::stod(q);
        v.lin = std::stod(c);
        p.variables.push_back(v);
    }
    expect("objective-constant");
    std::string oc;
    is >> oc;
    p.objective_constant = std::stod(oc);
    expect("linear");
    std::size_t nl = 0;
    is >> nl;
    for (std::size_t i = 0; i < nl; ++i) {
        expect("row");
        ConicProblem::Linear r;
        std::string rhs;
        std::size_t nnz = 0;
        is >> r.name >> rhs >> nnz;
        r.rhs = std::stod(rhs);
        for (std::size_t k = 0; k < nnz; ++k) {
            int v = 0;
            std::string c;
            is >> v >> c;
            r.coeffs.emplace_back(v, std::stod(c));
        }
        p.linear.push_back(r);
    }
    expect("lmis");
    std::size_t nm = 0;
    is >> nm;
    for (std::size_t i = 0; i < nm; ++i) {
        expect("lmi");
        ConicProblem::Lmi l;
        Eigen::Index size = 0;
        std::size_t nterms = 0;
        is >> l.name >> size >> nterms;
        expect("constant");
        l.constant = detail::read_sym(is, size);
        for (std::size_t k = 0; k < nterms; ++k) {
            expect("term");
            int v = 0;
            is >> v;
            l.terms.emplace_back(v, detail::read_sym(is, size));
        }
        p.lmis.push_back(std::move(l));
    }
    expect("end");
    if (!is) {
        throw Error(ErrorKind::InvalidInput, "problem file truncated");
    }
    return p;
}

inline void write_solver_log(std::ostream& os, const std::vector<SolverLogEntry>& log)
{
    os << "iteration,mu,objective,max_residual\n";
    for (const auto& e : log) {
        os << e.iteration << ',' << format_double(e.mu) << ',' << format_double(e.objective) << ','
           << format_double(e.max_residual) << '\n';
    }
}

} // namespace hodi
