#pragma once

#include "hodi/core.hpp"
#include "hodi/system_case.hpp"

#include <map>
#include <queue>
#include <string>
#include <vector>

namespace hodi {

/// Linearized power-flow Jacobian over all buses, in MW/rad, rows/cols ordered as `bus_ids`.
struct Jacobian {
    Matrix H;
    std::vector<int> bus_ids;
    std::vector<std::string> warnings;

    Eigen::Index index_of(int bus_id) const
    {
        for (std::size_t i = 0; i < bus_ids.size(); ++i) {
            if (bus_ids[i] == bus_id) {
                return static_cast<Eigen::Index>(i);
            }
        }
        throw Error(ErrorKind::InvalidInput, "bus " + std::to_string(bus_id) + " not in Jacobian");
    }
};

/// Kron-reduced network seen from the generator buses.
struct ReducedNetwork {
    Matrix L;                      // MW/rad, symmetric, zero row sums
    Matrix disturbance_map;        // -H_GL H_LL^-1  (n_G x n_L)
    std::vector<int> gen_bus_index;
    std::vector<int> load_bus_index;

    Eigen::Index size() const { return L.rows(); }
    Eigen::Index position(int bus_id) const
    {
        for (std::size_t i = 0; i < gen_bus_index.size(); ++i) {
            if (gen_bus_index[i] == bus_id) {
                return static_cast<Eigen::Index>(i);
            }
        }
        return -1;
    }
};

inline bool is_connected(const std::vector<int>& bus_ids, const std::vector<Line>& lines)
{
    if (bus_ids.empty()) {
        return true;
    }
    std::map<int, std::vector<int>> adj;
    for (int id : bus_ids) {
        adj[id];
    }
    for (const auto& l : lines) {
        adj[l.from].push_back(l.to);
        adj[l.to].push_back(l.from);
    }
    std::map<int, bool> seen;
    std::queue<int> q;
    q.push(bus_ids.front());
    seen[bus_ids.front()] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        int b = q.front();
        q.pop();
        for (int n : adj[b]) {
            if (!seen[n]) {
                seen[n] = true;
                ++count;
                q.push(n);
            }
        }
    }
    return count == bus_ids.size();
}

/**
 * @brief Builds H with H_ij = -V_i V_j B_ij cos(theta_i - theta_j) off the diagonal and
 * H_ii = sum_j V_i V_j B_ij cos(theta_i - theta_j), scaled to MW/rad by the case base.
 *
 * Lines whose angle difference reaches pi/2 produce a warning, or an Error when the case
 * asks for a strict operating point.
 */
inline Jacobian build_jacobian(const SystemCase& c)
{
    Jacobian j;
    for (const auto& b : c.buses) {
        j.bus_ids.push_back(b.id);
    }
    for (const auto& l : c.lines) {
        if (!c.has_bus(l.from) || !c.has_bus(l.to)) {
            throw Error(ErrorKind::InvalidInput, "line references an unknown bus");
        }
    }
    if (!is_connected(j.bus_ids, c.lines)) {
        throw Error(ErrorKind::Network, "disconnected");
    }
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    j.H = Matrix::Zero(n, n);
    for (const auto& l : c.lines) {
        const Eigen::Index a = j.index_of(l.from);
        const Eigen::Index b = j.index_of(l.to);
        const Bus& ba = c.buses[static_cast<std::size_t>(a)];
        const Bus& bb = c.buses[static_cast<std::size_t>(b)];
        const double dtheta = ba.angle - bb.angle;
        if (std::abs(dtheta) >= std::numbers::pi / 2) {
            const std::string msg = "operating point outside linearization region on line " + std::to_string(l.from) + "-"
                + std::to_string(l.to);
            if (c.strict_operating_point) {
                throw Error(ErrorKind::Network, msg);
            }
            j.warnings.push_back(msg);
        }
        const double w = c.base_mva * ba.voltage * bb.voltage * l.susceptance * std::cos(dtheta);
        j.H(a, b) -= w;
        j.H(b, a) -= w;
        j.H(a, a) += w;
        j.H(b, b) += w;
    }
    return j;
}

/// Schur complement onto the buses listed in `gen_bus_ids` (all other buses are eliminated).
inline ReducedNetwork kron_reduce(const Jacobian& jac, const std::vector<int>& gen_bus_ids)
{
    if (gen_bus_ids.empty()) {
        throw Error(ErrorKind::Network, "no generator buses to reduce onto");
    }
    ReducedNetwork r;
    r.gen_bus_index = gen_bus_ids;
    std::vector<Eigen::Index> g_idx, l_idx;
    for (int id : gen_bus_ids) {
        g_idx.push_back(jac.index_of(id));
    }
    for (std::size_t i = 0; i < jac.bus_ids.size(); ++i) {
        if (std::find(gen_bus_ids.begin(), gen_bus_ids.end(), jac.bus_ids[i]) == gen_bus_ids.end()) {
            l_idx.push_back(static_cast<Eigen::Index>(i));
            r.load_bus_index.push_back(jac.bus_ids[i]);
        }
    }
    const Matrix hgg = jac.H(g_idx, g_idx);
    if (l_idx.empty()) {
        r.L = hgg;
        r.disturbance_map = Matrix::Zero(hgg.rows(), 0);
        return r;
    }
    const Matrix hgl = jac.H(g_idx, l_idx);
    const Matrix hll = jac.H(l_idx, l_idx);
    Eigen::FullPivLU<Matrix> lu(hll);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
        throw Error(ErrorKind::Network, "isolated load subnetwork");
    }
    // H_GL H_LL^-1 = (H_LL^-1 H_LG)^T since H is symmetric.
    const Matrix x = lu.solve(hgl.transpose());
    r.disturbance_map = -x.transpose();
    Matrix l = hgg - hgl * x;
    r.L = 0.5 * (l + l.transpose());
    return r;
}

inline ReducedNetwork reduce_case(const SystemCase& c)
{
    return kron_reduce(build_jacobian(c), c.generator_bus_ids());
}

/// P^u = -P_G^ld + H_GL H_LL^-1 P_L^ld. `load_step` maps bus id -> MW increase.
inline Vector equivalent_disturbance(const ReducedNetwork& r, const std::map<int, double>& load_step)
{
    Vector pg = Vector::Zero(r.size());
    Vector pl = Vector::Zero(static_cast<Eigen::Index>(r.load_bus_index.size()));
    for (const auto& [bus, mw] : load_step) {
        const auto gi = r.position(bus);
        if (gi >= 0) {
            pg(gi) += mw;
            continue;
        }
        auto it = std::find(r.load_bus_index.begin(), r.load_bus_index.end(), bus);
        if (it == r.load_bus_index.end()) {
            throw Error(ErrorKind::InvalidInput, "load step at unknown bus " + std::to_string(bus));
        }
        pl(it - r.load_bus_index.begin()) += mw;
    }
    return -pg - r.disturbance_map * pl;
}

inline Vector equivalent_disturbance(const ReducedNetwork& r, const Disturbance& d)
{
    return equivalent_disturbance(r, std::map<int, double>{{d.bus, d.mw}});
}

/// Largest deviations from the ReducedNetwork invariants (for diagnostics and tests).
struct ReductionCheck {
    double asymmetry = 0.0;
    double max_row_sum = 0.0;
    int near_zero_eigenvalues = 0;
    double min_eigenvalue = 0.0;
};

inline ReductionCheck check_reduction(const ReducedNetwork& r)
{
    ReductionCheck out;
    const double scale = std::max(1.0, r.L.cwiseAbs().maxCoeff());
    out.asymmetry = (r.L - r.L.transpose()).cwiseAbs().maxCoeff() / scale;
    out.max_row_sum = r.L.rowwise().sum().cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> es(r.L, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (std::abs(es.eigenvalues()(i)) <= 1e-8) {
            ++out.near_zero_eigenvalues;
        }
    }
    return out;
}

} // namespace hodi
