#pragma once
// Random instance generators shared by the unit and acceptance suites.

#include "hodi/frequency.hpp"
#include "hodi/modal.hpp"
#include "hodi/network.hpp"

#include <random>

namespace hodi::fixtures {

/// Weighted Laplacian of a random connected graph: a random spanning tree plus extra edges.
inline Matrix random_laplacian(std::mt19937_64& rng, int n, double wmin = 0.5, double wmax = 2.0, double extra = 0.3)
{
    std::uniform_real_distribution<double> w(wmin, wmax);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix l = Matrix::Zero(n, n);
    auto add = [&](int a, int b, double x) {
        l(a, b) -= x;
        l(b, a) -= x;
        l(a, a) += x;
        l(b, b) += x;
    };
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> pick(0, i - 1);
        add(i, pick(rng), w(rng));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (l(i, j) == 0.0 && u(rng) < extra) {
                add(i, j, w(rng));
            }
        }
    }
    return l;
}

/// Smallest v >= 0 with A + v 11^T >= 0, or nullopt when A is not PSD on the
/// complement of the all-ones direction. Uses the Schur complement in the basis
/// {1/sqrt(n), Q}.
inline std::optional<double> minimal_v(const Matrix& a)
{
    const Eigen::Index n = a.rows();
    Matrix basis = Matrix::Identity(n, n);
    basis.col(0) = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    Eigen::HouseholderQR<Matrix> qr(basis);
    const Matrix q = qr.householderQ();
    const Matrix aq = q.transpose() * a * q;
    if (n == 1) {
        return std::max(0.0, -aq(0, 0) / static_cast<double>(n));
    }
    const Matrix inner = aq.bottomRightCorner(n - 1, n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(inner);
    if (es.eigenvalues().minCoeff() <= 1e-9) {
        return std::nullopt;
    }
    const Vector b = aq.col(0).tail(n - 1);
    const double need = b.dot(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose() * b)
        - aq(0, 0);
    return std::max(0.0, need / static_cast<double>(n));
}

struct Instance {
    Vector m, d;
    Matrix l;
    double beta = 1.0;
    double cos_zeta = 0.1;
    double v = 0.0;
};

/// Certificate-feasible instance (all three blocks PSD) with M > 0, found by rejection.
inline Instance random_certified_instance(std::mt19937_64& rng, int n)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        Instance in;
        in.l = random_laplacian(rng, n) * std::pow(10.0, 2.0 * u(rng));
        in.beta = 0.2 + 2.8 * u(rng);
        in.cos_zeta = 0.05 + 0.45 * u(rng);
        const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(in.l, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        const double c2 = in.cos_zeta * in.cos_zeta;
        Vector dvec(n), mvec(n);
        for (int i = 0; i < n; ++i) {
            dvec(i) = 2.0 * c2 * lmax / in.beta * (1.0 + 0.5 * u(rng));
            mvec(i) = dvec(i) / (2.0 * in.beta) * (0.05 + 0.95 * u(rng));
        }
        in.d = dvec;
        in.m = mvec;
        const auto v = minimal_v(in.l + Matrix((in.beta * in.beta * in.m - in.beta * in.d).asDiagonal()));
        if (!v) {
            continue;
        }
        in.v = *v * 1.01 + 1e-6;
        if (certificate_check(in.m, in.d, in.l, in.beta, in.cos_zeta, in.v).holds) {
            return in;
        }
    }
}

/// (M, D) with M > 0 and D >= 0 diagonal, no certificate requirement.
inline Instance random_instance(std::mt19937_64& rng, int n)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Instance in;
    in.l = random_laplacian(rng, n);
    Vector m(n), d(n);
    for (int i = 0; i < n; ++i) {
        m(i) = 0.2 + 2.0 * u(rng);
        d(i) = 0.1 + 3.0 * u(rng);
    }
    in.m = m;
    in.d = d;
    in.beta = 0.1 + u(rng);
    return in;
}

/// Peak of the COI response by direct RK4 integration of m w' = P - d w + P_mec,
/// tau P_mec' = -P_mec - r^-1 w (independent of the library's closed forms).
inline double coi_ode_peak(const CoiModel& c, double horizon, double dt)
{
    double w = 0.0, pm = 0.0, peak = 0.0;
    const double p = std::abs(c.disturbance);
    auto f = [&](double ww, double pp, double& dw, double& dp) {
        dw = (p - c.d * ww + pp) / c.m;
        dp = (-pp - c.r_inv * ww) / c.tau;
    };
    const auto steps = static_cast<long>(std::ceil(horizon / dt));
    for (long k = 0; k < steps; ++k) {
        double a1, b1, a2, b2, a3, b3, a4, b4;
        f(w, pm, a1, b1);
        f(w + 0.5 * dt * a1, pm + 0.5 * dt * b1, a2, b2);
        f(w + 0.5 * dt * a2, pm + 0.5 * dt * b2, a3, b3);
        f(w + dt * a3, pm + dt * b3, a4, b4);
        w += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
        pm += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
        peak = std::max(peak, std::abs(w));
    }
    return peak;
}

/// Random underdamped COI model.
inline CoiModel random_underdamped(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        CoiModel c;
        c.m = std::pow(10.0, -1.0 + 3.0 * u(rng));
        c.d = std::pow(10.0, -1.0 + 3.0 * u(rng));
        c.r_inv = std::pow(10.0, -1.0 + 3.0 * u(rng));
        c.tau = std::pow(10.0, -1.0 + 2.0 * u(rng));
        c.disturbance = 1.0 + 500.0 * u(rng);
        if (nadir(c).regime == NadirRegime::Underdamped) {
            return c;
        }
    }
}

/// Two generator buses joined by a unit line, one GFM unit each with damping costs d1^2 and 2 d2^2.
/// A droop-free SG with damping 0.1 on each bus keeps every node damped when a GFM unit offers
/// nothing, and the disturbance is sized so that the GFM damping must sum to at least 1.
inline SystemCase two_bus_market_case()
{
    SystemCase c;
    c.name = "two-bus";
    c.base_mva = 1.0;
    c.buses = {{1, BusKind::Generator, 1.0, 0.0, 0.0}, {2, BusKind::Generator, 1.0, 0.0, 0.0}};
    c.lines = {{1, 2, 1.0}};
    for (int i = 1; i <= 2; ++i) {
        GeneratorUnit u;
        u.id = "G" + std::to_string(i);
        u.bus = i;
        u.kind = UnitKind::GFM;
        u.m_range = {0.0, 0.1};
        u.d_range = {0.0, 10.0};
        u.cost = CostCoefficients{0.0, 0.0, static_cast<double>(i), 0.0};
        c.units.push_back(u);
    }
    for (int i = 1; i <= 2; ++i) {
        GeneratorUnit s;
        s.id = "S" + std::to_string(i);
        s.bus = i;
        s.kind = UnitKind::SG;
        s.fixed_inertia = 0.01;
        s.fixed_damping = 0.1;
        s.m_range = {0.01, 0.01};
        s.d_range = {0.1, 0.1};
        c.units.push_back(s);
    }
    ConstraintParams p;
    p.beta = 0.5;
    p.cos_zeta = 0.1;
    p.disturbance_magnitude = 1.2 * kTwoPi;
    p.sync_limit = hz_to_rad(1.0);
    p.rocof_limit = 1e6;
    p.nadir_limit = 1e6;
    c.params = p;
    return c;
}

/// Random connected case: n_gen generator buses (each with a GFM unit plus a second GFM or a
/// GFL unit, some with an SG) and n_load load buses, with random quadratic costs.
inline SystemCase random_allocation_case(std::mt19937_64& rng, int n_gen, int n_load)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SystemCase c;
    c.name = "random";
    c.base_mva = 10.0;
    const int n = n_gen + n_load;
    for (int i = 1; i <= n; ++i) {
        c.buses.push_back({i, i <= n_gen ? BusKind::Generator : BusKind::Load, 0.97 + 0.06 * u(rng), 0.2 * (u(rng) - 0.5), 0.0});
    }
    const Matrix l = random_laplacian(rng, n, 2.0, 8.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (l(i, j) != 0.0) {
                c.lines.push_back({i + 1, j + 1, -l(i, j)});
            }
        }
    }
    int sg = 0;
    for (int i = 1; i <= n_gen; ++i) {
        GeneratorUnit g;
        g.id = "GFM" + std::to_string(i);
        g.bus = i;
        g.kind = UnitKind::GFM;
        g.m_range = {0.0, 100.0};
        g.d_range = {0.0, 200.0};
        const double p = 20.0 + 30.0 * u(rng);
        g.cost = CostCoefficients{p / 50.0 * (0.5 + u(rng)), p, p / 50.0 * (0.5 + u(rng)), p * (0.2 + 0.5 * u(rng))};
        c.units.push_back(g);
        if (u(rng) < 0.4) {
            GeneratorUnit f;
            f.id = "GFL" + std::to_string(i);
            f.bus = i;
            f.kind = UnitKind::GFL;
            f.pll_damping_ratio = 0.7;
            f.pll_bandwidth = 2.0 + 10.0 * u(rng);
            f.m_range = {0.0, 50.0};
            f.d_range = {0.0, 150.0};
            f.cost = CostCoefficients{0.5, 30.0 * u(rng), 0.5, 20.0 * u(rng)};
            c.units.push_back(f);
        } else {
            GeneratorUnit g2 = g;
            g2.id = "GFM" + std::to_string(i) + "b";
            const double q = 20.0 + 30.0 * u(rng);
            g2.cost = CostCoefficients{q / 50.0 * (0.5 + u(rng)), q, q / 50.0 * (0.5 + u(rng)), q * (0.2 + 0.5 * u(rng))};
            c.units.push_back(g2);
        }
        if (u(rng) < 0.25) {
            GeneratorUnit s;
            s.id = "SG" + std::to_string(++sg);
            s.bus = i;
            s.kind = UnitKind::SG;
            s.fixed_inertia = 5.0 + 10.0 * u(rng);
            s.fixed_damping = 2.0 * u(rng);
            s.turbine_droop_inverse = 10.0 + 20.0 * u(rng);
            s.turbine_time_constant = 2.0 + 4.0 * u(rng);
            s.m_range = {s.fixed_inertia, s.fixed_inertia};
            s.d_range = {s.fixed_damping, s.fixed_damping};
            c.units.push_back(s);
        }
    }
    ConstraintParams p;
    p.beta = 0.5 + u(rng);
    p.cos_zeta = 0.1 + 0.2 * u(rng);
    p.disturbance_magnitude = 50.0 + 50.0 * u(rng);
    p.rocof_limit = hz_to_rad(1.0);
    p.sync_limit = hz_to_rad(0.5);
    p.nadir_limit = hz_to_rad(0.5);
    p.expansion_m = 100.0;
    p.expansion_d = 100.0;
    c.params = p;
    return c;
}

} // namespace hodi::fixtures
