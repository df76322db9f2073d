#pragma once

#include "hodi/system_case.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace hodi {

/// Aggregate single-machine model of the centre-of-inertia frequency after a step.
struct CoiModel {
    double m = 1.0;            // MW s^2/rad
    double d = 0.0;            // MW s/rad
    double r_inv = 0.0;        // MW s/rad
    double tau = 1.0;          // s
    double disturbance = 0.0;  // MW

    void check() const
    {
        if (!(m > 0.0) || d < 0.0 || !(tau > 0.0) || r_inv < 0.0) {
            throw Error(ErrorKind::InvalidInput, "COI model needs m > 0, d >= 0, tau > 0, r_inv >= 0");
        }
    }
};

struct TurbineAggregate {
    double r_inv = 0.0;
    double tau = 1.0;
};

/// Aggregate droop and time constant of all SG turbines (r_i^-1 > 0) in the case.
inline TurbineAggregate aggregate_turbines(const std::vector<GeneratorUnit>& units, TurbineAggregation rule)
{
    double sum_r = 0.0, sum_rinv = 0.0, sum_tau = 0.0, weighted_tau = 0.0;
    int count = 0;
    for (const auto& u : units) {
        if (u.kind != UnitKind::SG || u.turbine_droop_inverse <= 0.0) {
            continue;
        }
        ++count;
        sum_r += 1.0 / u.turbine_droop_inverse;
        sum_rinv += u.turbine_droop_inverse;
        sum_tau += u.turbine_time_constant;
        weighted_tau += u.turbine_droop_inverse * u.turbine_time_constant;
    }
    TurbineAggregate out;
    if (count == 0) {
        return out;
    }
    if (rule == TurbineAggregation::Literal) {
        out.r_inv = 1.0 / sum_r;
        out.tau = 1.0 / sum_tau;
    } else {
        out.r_inv = sum_rinv;
        out.tau = weighted_tau / sum_rinv;
    }
    return out;
}

struct CoiMetrics {
    double max_rocof = 0.0;         // rad/s^2
    double steady_state_dev = 0.0;  // rad/s
};

inline CoiMetrics coi_metrics(const CoiModel& model)
{
    model.check();
    if (model.d + model.r_inv <= 0.0) {
        throw Error(ErrorKind::Degenerate, "no synchronizing damping (d + r^-1 = 0)");
    }
    const double p = std::abs(model.disturbance);
    return {p / model.m, p / (model.d + model.r_inv)};
}

enum class NadirRegime { Underdamped, Overdamped };

inline const char* to_string(NadirRegime r) { return r == NadirRegime::Underdamped ? "underdamped" : "overdamped"; }

struct NadirIntermediates {
    double omega_d = 0.0;   // rad/s, 0 outside the underdamped regime
    double eta_damp = 0.0;  // 1/s
    double phi = 0.0;       // rad
    double nadir = 0.0;     // rad/s, peak |omega_COI|
    double g = 0.0;         // 1/nadir
    double peak_time = 0.0; // s, +inf when the peak is the steady state
    NadirRegime regime = NadirRegime::Overdamped;
};

namespace detail {

/// Unit step response y(t) of (tau s + 1) / (m tau s^2 + (m + d tau) s + k), k = d + r^-1,
/// and its derivative, written as 1/k + e^{sigma t}(a S(t) - b C(t)) with
/// S = sinh(delta t)/delta, C = cosh(delta t) (trigonometric when delta^2 < 0).
struct StepResponse {
    double m, tau, k, sigma, delta2, a, b;

    StepResponse(const CoiModel& c)
        : m(c.m), tau(c.tau), k(c.d + c.r_inv)
    {
        sigma = -0.5 * (1.0 / c.tau + c.d / c.m);
        delta2 = sigma * sigma - k / (c.m * c.tau);
        a = 1.0 / c.m + sigma / k;
        b = 1.0 / k;
    }

    void sc(double t, double& s, double& c) const
    {
        if (delta2 > 0.0) {
            const double dl = std::sqrt(delta2);
            const double x = dl * t;
            if (x < 1e-4) {
                s = t * (1.0 + x * x / 6.0);
                c = 1.0 + x * x / 2.0;
            } else {
                s = std::sinh(x) / dl;
                c = std::cosh(x);
            }
        } else if (delta2 < 0.0) {
            const double w = std::sqrt(-delta2);
            const double x = w * t;
            s = x < 1e-4 ? t * (1.0 - x * x / 6.0) : std::sin(x) / w;
            c = std::cos(x);
        } else {
            s = t;
            c = 1.0;
        }
    }

    /// e^{sigma t} times (S, C), computed without overflow for large t.
    void scaled(double t, double& s, double& c) const
    {
        if (delta2 > 0.0 && std::sqrt(delta2) * t > 20.0) {
            const double dl = std::sqrt(delta2);
            const double ep = std::exp((sigma + dl) * t);
            const double em = std::exp((sigma - dl) * t);
            s = (ep - em) / (2.0 * dl);
            c = 0.5 * (ep + em);
            return;
        }
        sc(t, s, c);
        const double e = std::exp(sigma * t);
        s *= e;
        c *= e;
    }

    double value(double t) const
    {
        double s, c;
        scaled(t, s, c);
        return b + a * s - b * c;
    }

    double derivative(double t) const
    {
        double s, c;
        scaled(t, s, c);
        return (sigma * a - b * delta2) * s + (a - sigma * b) * c;
    }

    /// Time scale of the slowest pole.
    double slow_time() const
    {
        const double slow = delta2 > 0.0 ? -(sigma + std::sqrt(delta2)) : -sigma;
        return 1.0 / std::max(slow, 1e-12);
    }
};

} // namespace detail

/// Exact |omega_COI(t)| for a step of size |P^u| (rad/s).
inline double coi_step_response(const CoiModel& model, double t)
{
    model.check();
    return std::abs(model.disturbance) * detail::StepResponse(model).value(t);
}

/**
 * @brief Frequency nadir of the COI response.
 *
 * In the underdamped regime ((d + r^-1)/(m tau) > (1/tau + d/m)^2 / 4) the closed form
 * |P|/(d + r^-1) (1 + sqrt(tau r^-1 / m) exp(-(eta/omega_d)(phi + pi/2))) is used.
 * Otherwise the peak of the exact step response is located by sampling the derivative
 * and bisecting on its first sign change; without a sign change the peak is the steady
 * state.
 */
inline NadirIntermediates nadir(const CoiModel& model)
{
    model.check();
    const double k = model.d + model.r_inv;
    if (k <= 0.0) {
        throw Error(ErrorKind::Degenerate, "no synchronizing damping (d + r^-1 = 0)");
    }
    const double p = std::abs(model.disturbance);
    NadirIntermediates out;
    out.eta_damp = 0.5 * (1.0 / model.tau + model.d / model.m);
    const double wd2 = k / (model.m * model.tau) - out.eta_damp * out.eta_damp;
    if (wd2 > 0.0) {
        out.regime = NadirRegime::Underdamped;
        out.omega_d = std::sqrt(wd2);
        const double sin_phi = (model.m - model.d * model.tau) / (2.0 * std::sqrt(model.m * model.tau * model.r_inv));
        out.phi = std::asin(std::clamp(sin_phi, -1.0, 1.0));
        out.nadir = p / k
            * (1.0 + std::sqrt(model.tau * model.r_inv / model.m)
                         * std::exp(-(out.eta_damp / out.omega_d) * (out.phi + std::numbers::pi / 2)));
        out.peak_time = (out.phi + std::numbers::pi / 2) / out.omega_d;
    } else {
        out.regime = NadirRegime::Overdamped;
        const detail::StepResponse sr(model);
        const double horizon = 40.0 * sr.slow_time();
        const int samples = 512;
        double prev_t = 0.0;
        double prev_h = sr.derivative(0.0);
        double peak = sr.b;  // steady state 1/k is the supremum when y rises monotonically
        out.peak_time = std::numeric_limits<double>::infinity();
        for (int i = 1; i <= samples; ++i) {
            // Quadratic spacing resolves the fast initial transient.
            const double t = horizon * (static_cast<double>(i) / samples) * (static_cast<double>(i) / samples);
            const double h = sr.derivative(t);
            if (prev_h > 0.0 && h <= 0.0) {
                double lo = prev_t, hi = t;
                for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (sr.derivative(mid) > 0.0 ? lo : hi) = mid;
                }
                const double tp = 0.5 * (lo + hi);
                const double yp = sr.value(tp);
                if (yp > peak) {
                    peak = yp;
                    out.peak_time = tp;
                }
                break;
            }
            prev_t = t;
            prev_h = h;
        }
        out.nadir = p * peak;
    }
    out.g = out.nadir > 0.0 ? 1.0 / out.nadir : std::numeric_limits<double>::infinity();
    return out;
}

/// g(m, d) = 1 / nadir for fixed turbine data and disturbance.
inline double nadir_g(double tau, double r_inv, double disturbance, double m, double d)
{
    return nadir(CoiModel{m, d, r_inv, tau, disturbance}).g;
}

/// First-order expansion g_hat(m, d) = g0 + g_m (m - m0) + g_d (d - d0).
struct LinearNadir {
    double m0 = 0.0, d0 = 0.0;
    double g0 = 0.0;
    double grad_m = 0.0;
    double grad_d = 0.0;
    NadirRegime regime = NadirRegime::Overdamped;  // regime at the expansion point

    double operator()(double m, double d) const { return g0 + grad_m * (m - m0) + grad_d * (d - d0); }
};

namespace detail {

template <class F>
double central_diff(F f, double x, double h)
{
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool agree(double a, double b, double scale)
{
    return std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), scale});
}

} // namespace detail

/**
 * @brief Linearizes g at (m0, d0) with central differences (step 1e-4 times the
 * coordinate scale), each checked against a 1e-5 step to six significant digits.
 *
 * Both regimes are accepted; g is exact in each (see `nadir`).
 */
inline LinearNadir taylor_nadir(double tau, double r_inv, double disturbance, double m0, double d0)
{
    if (!(m0 > 0.0) || d0 < 0.0) {
        throw Error(ErrorKind::InvalidInput, "expansion point needs m0 > 0 and d0 >= 0");
    }
    LinearNadir out;
    out.m0 = m0;
    out.d0 = d0;
    const NadirIntermediates at = nadir(CoiModel{m0, d0, r_inv, tau, disturbance});
    out.g0 = at.g;
    out.regime = at.regime;
    auto gm = [&](double m) { return nadir_g(tau, r_inv, disturbance, m, d0); };
    auto gd = [&](double d) { return nadir_g(tau, r_inv, disturbance, m0, d); };
    const double sm = std::max(std::abs(m0), 1.0);
    const double sd = std::max(std::abs(d0), 1.0);
    out.grad_m = detail::central_diff(gm, m0, 1e-4 * sm);
    out.grad_d = detail::central_diff(gd, d0, 1e-4 * sd);
    const double check_m = detail::central_diff(gm, m0, 1e-5 * sm);
    const double check_d = detail::central_diff(gd, d0, 1e-5 * sd);
    // Differences below the rounding noise of g divided by the small step carry no information.
    const double noise = 100.0 * std::numeric_limits<double>::epsilon() * out.g0;
    if (!detail::agree(out.grad_m, check_m, noise / (1e-5 * sm) / 1e-6)
        || !detail::agree(out.grad_d, check_d, noise / (1e-5 * sd) / 1e-6)) {
        throw Error(ErrorKind::Numerical, "nadir gradient not resolved by finite differences at the expansion point");
    }
    return out;
}

struct CurvatureTerms {
    double gm = 0.0, gd = 0.0, gmm = 0.0, gdd = 0.0, gmd = 0.0;
};

/// Central-difference first and second derivatives of a surface g(m, d), step 1e-3 times the coordinate scale.
template <class G>
CurvatureTerms surface_derivatives(G g, double m, double d)
{
    const double hm = 1e-3 * std::max(std::abs(m), 1.0);
    const double hd = 1e-3 * std::max(std::abs(d), 1.0);
    const double g0 = g(m, d);
    const double gpm = g(m + hm, d), gnm = g(m - hm, d);
    const double gpd = g(m, d + hd), gnd = g(m, d - hd);
    CurvatureTerms t;
    t.gm = (gpm - gnm) / (2 * hm);
    t.gd = (gpd - gnd) / (2 * hd);
    t.gmm = (gpm - 2 * g0 + gnm) / (hm * hm);
    t.gdd = (gpd - 2 * g0 + gnd) / (hd * hd);
    t.gmd = (g(m + hm, d + hd) - g(m + hm, d - hd) - g(m - hm, d + hd) + g(m - hm, d - hd)) / (4 * hm * hd);
    return t;
}

/// Printed form of the curvature indicator: (g_mm g_dd - g_md) / (1 + g_m^2 + g_d^2).
inline double curvature_indicator(const CurvatureTerms& t)
{
    return (t.gmm * t.gdd - t.gmd) / (1.0 + t.gm * t.gm + t.gd * t.gd);
}

/// Gaussian curvature of the graph surface: (g_mm g_dd - g_md^2) / (1 + g_m^2 + g_d^2)^2.
inline double gaussian_curvature(const CurvatureTerms& t)
{
    const double w = 1.0 + t.gm * t.gm + t.gd * t.gd;
    return (t.gmm * t.gdd - t.gmd * t.gmd) / (w * w);
}

inline CurvatureTerms nadir_derivatives(double tau, double r_inv, double disturbance, double m, double d)
{
    return surface_derivatives([&](double mm, double dd) { return nadir_g(tau, r_inv, disturbance, mm, dd); }, m, d);
}

inline double curvature(double tau, double r_inv, double disturbance, double m, double d)
{
    return curvature_indicator(nadir_derivatives(tau, r_inv, disturbance, m, d));
}

inline double gaussian_curvature(double tau, double r_inv, double disturbance, double m, double d)
{
    return gaussian_curvature(nadir_derivatives(tau, r_inv, disturbance, m, d));
}

struct ReserveEstimate {
    double power_m1 = 0.0;   // MW, from the RoCoF limit and inertia
    double power_m2 = 0.0;   // MW, from the synchronization limit and damping
    double energy_m3 = 0.0;  // MJ over the reserve duration
};

inline ReserveEstimate reserve_estimates(double m, double d, double rocof_limit, double sync_limit, double duration)
{
    return {rocof_limit * m, sync_limit * d, sync_limit * d * duration};
}

} // namespace hodi
