#pragma once

#include "hodi/network.hpp"

#include <string>
#include <vector>

namespace hodi {

/// First-order governor of one synchronous generator, attached to a reduced-network node.
struct TurbineModel {
    Eigen::Index node = 0;
    double r_inv = 0.0;  // MW s/rad
    double tau = 1.0;    // s
};

/// Share of a node's (m, d) that belongs to one unit, for output power/energy bookkeeping.
struct UnitShare {
    std::string name;
    Eigen::Index node = 0;
    double m = 0.0;
    double d = 0.0;
};

struct SimulationOptions {
    double horizon = 60.0;
    double dt = 1e-3;
    double rocof_window = 0.1;
    int max_retries = 4;
};

/// Time series on the integration grid. Row k of every matrix is time[k].
struct TrajectorySet {
    std::vector<double> time;
    Matrix omega;        // rad/s per node
    Matrix rocof;        // rad/s^2 per node, windowed
    Vector omega_coi;    // rad/s
    Vector rocof_coi;    // rad/s^2, windowed like `rocof`
    Matrix unit_power;   // MW per unit
    Matrix unit_energy;  // MJ per unit
    std::vector<std::string> unit_names;
    double dt_used = 0.0;
    int retries = 0;

    double max_abs_coi() const { return omega_coi.cwiseAbs().maxCoeff(); }
    double max_abs_rocof() const { return rocof.cwiseAbs().maxCoeff(); }
    double max_abs_rocof_coi() const { return rocof_coi.cwiseAbs().maxCoeff(); }
    double final_abs_coi() const { return std::abs(omega_coi(omega_coi.size() - 1)); }
};

namespace detail {

class SwingSystem {
public:
    /// Nodes whose inertial time constant m_i / d_i is below `min_time_constant` are treated as algebraic.
    SwingSystem(const Matrix& l, const Vector& m, const Vector& d, const std::vector<TurbineModel>& turbines, const Vector& pu,
                double min_time_constant = 0.0)
        : l_(l), m_(m), d_(d), turbines_(turbines), pu_(pu)
    {
        const Eigen::Index n = l.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (m(i) > 0.0 && m(i) >= min_time_constant * d(i)) {
                inertial_.push_back(i);
            } else if (d(i) > 0.0) {
                algebraic_.push_back(i);
            } else {
                throw Error(ErrorKind::Degenerate, "degenerate node " + std::to_string(i) + " (zero inertia and damping)");
            }
        }
        slot_.assign(static_cast<std::size_t>(n), -1);
        for (std::size_t k = 0; k < inertial_.size(); ++k) {
            slot_[static_cast<std::size_t>(inertial_[k])] = static_cast<Eigen::Index>(k);
        }
    }

    Eigen::Index n() const { return l_.rows(); }
    Eigen::Index state_size() const
    {
        return n() + static_cast<Eigen::Index>(inertial_.size()) + static_cast<Eigen::Index>(turbines_.size());
    }

    /// Node frequencies from the state; zero-inertia nodes solve d_i w_i = injection_i.
    Vector omega(const Vector& x) const
    {
        const Eigen::Index n = this->n();
        Vector w(n);
        for (std::size_t k = 0; k < inertial_.size(); ++k) {
            w(inertial_[k]) = x(n + static_cast<Eigen::Index>(k));
        }
        if (!algebraic_.empty()) {
            const Vector inj = injection(x);
            for (Eigen::Index i : algebraic_) {
                w(i) = inj(i) / d_(i);
            }
        }
        return w;
    }

    /// -L theta + P^u + P^mec per node.
    Vector injection(const Vector& x) const
    {
        const Eigen::Index n = this->n();
        Vector inj = -l_ * x.head(n) + pu_;
        const Eigen::Index base = n + static_cast<Eigen::Index>(inertial_.size());
        for (std::size_t t = 0; t < turbines_.size(); ++t) {
            inj(turbines_[t].node) += x(base + static_cast<Eigen::Index>(t));
        }
        return inj;
    }

    Vector rhs(const Vector& x) const
    {
        const Eigen::Index n = this->n();
        Vector dx(state_size());
        const Vector inj = injection(x);
        Vector w(n);
        for (std::size_t k = 0; k < inertial_.size(); ++k) {
            w(inertial_[k]) = x(n + static_cast<Eigen::Index>(k));
        }
        for (Eigen::Index i : algebraic_) {
            w(i) = inj(i) / d_(i);
        }
        dx.head(n) = w;
        for (std::size_t k = 0; k < inertial_.size(); ++k) {
            const Eigen::Index i = inertial_[k];
            dx(n + static_cast<Eigen::Index>(k)) = (inj(i) - d_(i) * w(i)) / m_(i);
        }
        const Eigen::Index base = n + static_cast<Eigen::Index>(inertial_.size());
        for (std::size_t t = 0; t < turbines_.size(); ++t) {
            const auto& tb = turbines_[t];
            const Eigen::Index s = base + static_cast<Eigen::Index>(t);
            dx(s) = (-x(s) - tb.r_inv * w(tb.node)) / tb.tau;
        }
        return dx;
    }

    /// Node frequency derivatives at x (zero-inertia nodes by differentiating the balance).
    Vector omega_dot(const Vector& x, const Vector& dx) const
    {
        const Eigen::Index n = this->n();
        Vector wd = Vector::Zero(n);
        for (std::size_t k = 0; k < inertial_.size(); ++k) {
            wd(inertial_[k]) = dx(n + static_cast<Eigen::Index>(k));
        }
        if (!algebraic_.empty()) {
            Vector dinj = -l_ * dx.head(n);
            const Eigen::Index base = n + static_cast<Eigen::Index>(inertial_.size());
            for (std::size_t t = 0; t < turbines_.size(); ++t) {
                dinj(turbines_[t].node) += dx(base + static_cast<Eigen::Index>(t));
            }
            for (Eigen::Index i : algebraic_) {
                wd(i) = dinj(i) / d_(i);
            }
        }
        (void)x;
        return wd;
    }

private:
    const Matrix& l_;
    const Vector& m_;
    const Vector& d_;
    const std::vector<TurbineModel>& turbines_;
    const Vector& pu_;
    std::vector<Eigen::Index> inertial_, algebraic_;
    std::vector<Eigen::Index> slot_;
};

} // namespace detail

/**
 * @brief Integrates theta' = w, M w' = -D w - L theta + P^u + P^mec,
 * tau_i P_i^mec' = -P_i^mec - r_i^-1 w_i from rest with classical RK4.
 *
 * Windowed RoCoF is (w(t) - w(max(0, t - window))) / window. Unit output power is
 * m_i w' + d_i w and energy m_i w + d_i theta (theta is the running integral of w).
 * Nodes with m_i / d_i < 0.05 dt count as zero-inertia.
 * A run whose frequency leaves 1e3 times the steady-state scale, or turns non-finite, is
 * restarted with half the step, up to `max_retries` times.
 */
inline TrajectorySet simulate(const Matrix& l, const Vector& m, const Vector& d, const std::vector<TurbineModel>& turbines,
                              const Vector& pu, const std::vector<UnitShare>& units, const SimulationOptions& opt)
{
    if (!(opt.horizon > 0.0) || !(opt.dt > 0.0) || !(opt.rocof_window > 0.0)) {
        throw Error(ErrorKind::InvalidInput, "simulation horizon, dt and RoCoF window must be positive");
    }
    const Eigen::Index n = l.rows();
    if (m.size() != n || d.size() != n || pu.size() != n) {
        throw Error(ErrorKind::InvalidInput, "simulate: dimension mismatch");
    }
    for (const auto& t : turbines) {
        if (t.node < 0 || t.node >= n || !(t.tau > 0.0) || t.r_inv < 0.0) {
            throw Error(ErrorKind::InvalidInput, "simulate: invalid turbine");
        }
    }
    // Inertia left over by an interior-point solve (m ~ 1e-7 next to d ~ 10) would make the node
    // infinitely stiff for RK4; below 5% of a step such a node is integrated as zero-inertia.
    const detail::SwingSystem sys(l, m, d, turbines, pu, 0.05 * opt.dt);
    double total_sync = d.sum();
    for (const auto& t : turbines) {
        total_sync += t.r_inv;
    }
    const double omega_scale = std::max(pu.cwiseAbs().sum() / std::max(total_sync, 1e-12), 1e-12);
    const double total_m = m.sum();

    double dt = opt.dt;
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt, dt *= 0.5) {
        const auto steps = static_cast<Eigen::Index>(std::ceil(opt.horizon / dt - 1e-9));
        TrajectorySet tr;
        tr.dt_used = dt;
        tr.retries = attempt;
        tr.time.resize(static_cast<std::size_t>(steps + 1));
        tr.omega.resize(steps + 1, n);
        tr.rocof.resize(steps + 1, n);
        tr.omega_coi.resize(steps + 1);
        tr.rocof_coi.resize(steps + 1);
        const auto nu = static_cast<Eigen::Index>(units.size());
        tr.unit_power.resize(steps + 1, nu);
        tr.unit_energy.resize(steps + 1, nu);
        for (const auto& u : units) {
            tr.unit_names.push_back(u.name);
        }
        Vector x = Vector::Zero(sys.state_size());
        bool diverged = false;
        auto record = [&](Eigen::Index k, double t) {
            tr.time[static_cast<std::size_t>(k)] = t;
            const Vector dx = sys.rhs(x);
            const Vector w = dx.head(n);
            const Vector wd = sys.omega_dot(x, dx);
            tr.omega.row(k) = w.transpose();
            tr.omega_coi(k) = total_m > 0.0 ? m.dot(w) / total_m : w.mean();
            for (Eigen::Index u = 0; u < nu; ++u) {
                const auto& us = units[static_cast<std::size_t>(u)];
                tr.unit_power(k, u) = us.m * wd(us.node) + us.d * w(us.node);
                tr.unit_energy(k, u) = us.m * w(us.node) + us.d * x(us.node);
            }
            if (!w.allFinite() || w.cwiseAbs().maxCoeff() > 1e3 * omega_scale) {
                diverged = true;
            }
        };
        record(0, 0.0);
        for (Eigen::Index k = 1; k <= steps && !diverged; ++k) {
            const Vector k1 = sys.rhs(x);
            const Vector k2 = sys.rhs(x + 0.5 * dt * k1);
            const Vector k3 = sys.rhs(x + 0.5 * dt * k2);
            const Vector k4 = sys.rhs(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            record(k, static_cast<double>(k) * dt);
        }
        if (diverged) {
            continue;
        }
        const auto lag = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(opt.rocof_window / dt)));
        const double window = static_cast<double>(lag) * dt;
        for (Eigen::Index k = 0; k <= steps; ++k) {
            const Eigen::Index j = std::max<Eigen::Index>(0, k - lag);
            tr.rocof.row(k) = (tr.omega.row(k) - tr.omega.row(j)) / window;
            tr.rocof_coi(k) = (tr.omega_coi(k) - tr.omega_coi(j)) / window;
        }
        return tr;
    }
    throw Error(ErrorKind::Numerical, "simulation diverged after " + std::to_string(opt.max_retries) + " step halvings");
}

} // namespace hodi
