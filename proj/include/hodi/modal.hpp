#pragma once

#include "hodi/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace hodi {

/// Spectrum of the quadratic pencil lambda^2 M + lambda D + L.
struct ModeReport {
    std::vector<Complex> eigenvalues;  // finite modes, sorted by magnitude
    int infinite_count = 0;            // from zero-inertia nodes
    int zero_mode_index = -1;          // -1 when no mode aligns with the all-ones vector
};

/// Per-mode classification against the decay half-plane and the damping cone.
struct RegionCheck {
    bool all_in_region = true;
    std::vector<bool> in_region;
    std::vector<double> decay_margin;   // Re(lambda) + beta
    std::vector<double> cone_residual;  // sin(zeta) Re(lambda) + cos(zeta) |Im(lambda)|
};

namespace detail {

/// Right null vector of the complex matrix lambda^2 M + lambda D + L (smallest singular vector).
inline CVector qep_null_vector(const Vector& m, const Vector& d, const Matrix& l, Complex lambda)
{
    CMatrix p = l.cast<Complex>();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        p(i, i) += lambda * lambda * m(i) + lambda * d(i);
    }
    Eigen::JacobiSVD<CMatrix> svd(p, Eigen::ComputeFullV);
    CVector v = svd.matrixV().col(p.cols() - 1);
    return v / v.norm();
}

/// Angle between a complex vector and the real all-ones direction.
inline double angle_to_ones(const CVector& v)
{
    const double n = static_cast<double>(v.size());
    const double c = std::abs(v.sum()) / (std::sqrt(n) * v.norm());
    return std::acos(std::clamp(c, 0.0, 1.0));
}

} // namespace detail

inline constexpr double kInfiniteEigenvalueThreshold = 1e8;

namespace detail {

/// Finite eigenvalues of lambda^2 M + lambda D + L through a scaled companion pencil.
/// D may be indefinite here (the shifted pencil needs that).
inline std::vector<Complex> pencil_eigenvalues(const Vector& m, const Vector& d, const Matrix& l, int* infinite)
{
    const Eigen::Index n = l.rows();
    const double nm = m.cwiseAbs().maxCoeff();
    const double nd = d.cwiseAbs().maxCoeff();
    const double nl = l.norm();
    double gamma = 1.0;
    double delta = 1.0;
    if (nm > 0.0 && nl > 0.0) {
        gamma = std::sqrt(nl / nm);
        delta = 2.0 / (nl + nd * gamma);
    }
    const Vector ms = gamma * gamma * delta * m;
    const Vector ds = gamma * delta * d;
    const Matrix ls = delta * l;

    Matrix a = Matrix::Zero(2 * n, 2 * n);
    Matrix b = Matrix::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n) = Matrix::Identity(n, n);
    a.bottomLeftCorner(n, n) = -ls;
    a.bottomRightCorner(n, n).diagonal() = -ds;
    b.topLeftCorner(n, n) = Matrix::Identity(n, n);
    b.bottomRightCorner(n, n).diagonal() = ms;

    const auto max_iter = static_cast<Eigen::Index>(400 * n + 400);
    Eigen::GeneralizedEigenSolver<Matrix> ges;
    ges.setMaxIterations(max_iter);
    ges.compute(a, b, false);
    if (ges.info() != Eigen::Success) {
        throw Error(ErrorKind::Numerical, "numerical failure: QZ did not converge within " + std::to_string(max_iter)
                                              + " iterations for a pencil of size " + std::to_string(2 * n));
    }
    std::vector<Complex> out;
    int inf_count = 0;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        const Complex alpha = ges.alphas()(i);
        const double beta = ges.betas()(i);
        if (beta == 0.0 || std::abs(beta) * kInfiniteEigenvalueThreshold <= std::abs(alpha)) {
            ++inf_count;
            continue;
        }
        const Complex lambda = gamma * alpha / beta;
        if (std::abs(lambda) > kInfiniteEigenvalueThreshold) {
            ++inf_count;
            continue;
        }
        out.push_back(lambda);
    }
    if (infinite) {
        *infinite = inf_count;
    }
    return out;
}

} // namespace detail

/**
 * @brief All finite eigenvalues of lambda^2 M + lambda D + L.
 *
 * Uses the first companion linearization [0 I; -L -D] x = lambda [I 0; 0 M] x solved by
 * real QZ, which tolerates singular M. The coefficients are scaled first so that the
 * three blocks have comparable norms. Eigenvalues with magnitude above 1e8 are counted
 * as infinite.
 */
inline ModeReport qep_spectrum(const Vector& m, const Vector& d, const Matrix& l)
{
    const Eigen::Index n = l.rows();
    if (m.size() != n || d.size() != n || l.cols() != n) {
        throw Error(ErrorKind::InvalidInput, "qep_spectrum: dimension mismatch");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (m(i) < 0.0 || d(i) < 0.0) {
            throw Error(ErrorKind::InvalidInput, "qep_spectrum: M and D must be non-negative");
        }
        if (m(i) == 0.0 && d(i) == 0.0) {
            throw Error(ErrorKind::Degenerate, "degenerate node " + std::to_string(i) + " (zero inertia and damping)");
        }
    }
    ModeReport rep;
    if (n == 0) {
        return rep;
    }
    rep.eigenvalues = detail::pencil_eigenvalues(m, d, l, &rep.infinite_count);
    std::stable_sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](Complex x, Complex y) {
        if (std::abs(x) != std::abs(y)) {
            return std::abs(x) < std::abs(y);
        }
        return x.imag() < y.imag();
    });
    // Zero mode: the smallest-magnitude mode whose eigenvector is the common angle shift.
    const std::size_t candidates = std::min<std::size_t>(rep.eigenvalues.size(), 4);
    for (std::size_t i = 0; i < candidates; ++i) {
        const CVector v = detail::qep_null_vector(m, d, l, rep.eigenvalues[i]);
        if (detail::angle_to_ones(v) <= 1e-3) {
            rep.zero_mode_index = static_cast<int>(i);
            break;
        }
    }
    return rep;
}

/// Right eigenvector of the quadratic pencil for a computed eigenvalue.
inline CVector qep_eigenvector(const Vector& m, const Vector& d, const Matrix& l, Complex lambda)
{
    return detail::qep_null_vector(m, d, l, lambda);
}

/// Classifies every finite mode except the zero mode against Re <= -beta and the cone.
inline RegionCheck verify_region(const ModeReport& rep, double beta, double cos_zeta, double tol = 1e-6)
{
    const double sin_zeta = std::sqrt(1.0 - cos_zeta * cos_zeta);
    RegionCheck out;
    for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
        const Complex z = rep.eigenvalues[i];
        const double margin = z.real() + beta;
        const double cone = sin_zeta * z.real() + cos_zeta * std::abs(z.imag());
        out.decay_margin.push_back(margin);
        out.cone_residual.push_back(cone);
        const bool ok = static_cast<int>(i) == rep.zero_mode_index || (margin <= tol && cone <= tol);
        out.in_region.push_back(ok);
        out.all_in_region = out.all_in_region && ok;
    }
    return out;
}

/// Distance from a mode to the nearest boundary of the admissible region (decay line or cone ray).
inline double boundary_distance(Complex z, double beta, double cos_zeta)
{
    const double sin_zeta = std::sqrt(1.0 - cos_zeta * cos_zeta);
    const double to_decay = std::abs(z.real() + beta);
    // Cone boundary rays through the origin with unit normal (sin, cos) in (Re, |Im|).
    const double to_cone = std::abs(sin_zeta * z.real() + cos_zeta * std::abs(z.imag()));
    return std::min(to_decay, to_cone);
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian algorithm).
/// Returns assignment[row] = column.
inline std::vector<int> hungarian(const Matrix& cost)
{
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] > 0) {
            assignment[p[j] - 1] = j - 1;
        }
    }
    return assignment;
}

struct ShiftCheck {
    double max_mismatch = 0.0;
    std::vector<Complex> unpaired;  // modes present in only one spectrum
};

/// Compares spectrum(M, D, L) + beta with spectrum(M, D - 2 beta M, L - beta D + beta^2 M) under optimal pairing.
inline ShiftCheck shifted_pencil_check(const Vector& m, const Vector& d, const Matrix& l, double beta)
{
    const ModeReport orig = qep_spectrum(m, d, l);
    const Vector d_shift = d - 2.0 * beta * m;
    Matrix l_shift = l;
    l_shift.diagonal() += -beta * d + beta * beta * m;
    ModeReport shifted;
    shifted.eigenvalues = detail::pencil_eigenvalues(m, d_shift, l_shift, nullptr);
    std::vector<Complex> a;
    for (Complex z : orig.eigenvalues) {
        a.push_back(z + beta);
    }
    const std::vector<Complex>& b = shifted.eigenvalues;
    const std::size_t k = std::max(a.size(), b.size());
    ShiftCheck out;
    if (k == 0) {
        return out;
    }
    // Padding rows/columns cost a large constant so real pairs are always preferred.
    const double pad = 1e12;
    Matrix cost = Matrix::Constant(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k), pad);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(a[i] - b[j]);
        }
    }
    const auto assign = hungarian(cost);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(assign[i]);
        if (i < a.size() && j < b.size()) {
            out.max_mismatch = std::max(out.max_mismatch, std::abs(a[i] - b[j]));
        } else if (i < a.size()) {
            out.unpaired.push_back(a[i] - beta);
        } else if (j < b.size()) {
            out.unpaired.push_back(b[j]);
        }
    }
    return out;
}

/// Minimum eigenvalues of the three matrices whose semidefiniteness certifies mode placement.
struct Certificate {
    bool holds = false;
    double decay_block = 0.0;   // D - 2 beta M
    double shift_block = 0.0;   // L - beta D + beta^2 M + v 11^T
    double cone_block = 0.0;    // beta D - 2 cos^2(zeta) L
};

inline Certificate certificate_check(const Vector& m, const Vector& d, const Matrix& l, double beta, double cos_zeta, double v,
                                     double tol = 1e-9)
{
    const Eigen::Index n = l.rows();
    Certificate c;
    const Matrix m_diag = m.asDiagonal().toDenseMatrix();
    const Matrix d_diag = d.asDiagonal().toDenseMatrix();
    c.decay_block = min_eigenvalue(d_diag - 2.0 * beta * m_diag);
    c.shift_block = min_eigenvalue(l - beta * d_diag + beta * beta * m_diag + v * ones_outer(n));
    c.cone_block = min_eigenvalue(beta * d_diag - 2.0 * cos_zeta * cos_zeta * l);
    c.holds = c.decay_block >= -tol && c.shift_block >= -tol && c.cone_block >= -tol;
    return c;
}

} // namespace hodi
