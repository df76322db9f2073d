#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace hodi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Error classes surfaced by the library. The CLI maps each to its own exit code.
enum class ErrorKind {
    InvalidInput,   // schema / range / referential problems in user data
    Network,        // disconnected grid, isolated load subnetwork, bad operating point
    Degenerate,     // degenerate node, nothing to allocate, regime violations
    Infeasible,
    Numerical,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Thresholds are entered in Hz (or Hz/s) and used internally in rad/s (rad/s²).
inline constexpr double hz_to_rad(double hz) { return kTwoPi * hz; }
inline constexpr double rad_to_hz(double rad) { return rad / kTwoPi; }

/// Shortest round-trip decimal form used by every CSV writer.
inline std::string format_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Smallest eigenvalue of a symmetric matrix (empty matrix -> +inf).
inline double min_eigenvalue(const Matrix& a)
{
    if (a.rows() == 0) {
        return std::numeric_limits<double>::infinity();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline Matrix ones_outer(Eigen::Index n) { return Matrix::Ones(n, n); }

} // namespace hodi
