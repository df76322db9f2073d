#include "hodi/network.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace hodi;

namespace {

SystemCase chain(int n, double base = 1.0)
{
    SystemCase c;
    c.base_mva = base;
    for (int i = 1; i <= n; ++i) {
        c.buses.push_back({i, BusKind::Generator, 1.0, 0.0, 0.0});
    }
    for (int i = 1; i < n; ++i) {
        c.lines.push_back({i, i + 1, 1.0});
    }
    return c;
}

// Active power injections of the lossless AC model, P_i = sum_j V_i V_j B_ij sin(theta_i - theta_j).
Vector injections(const SystemCase& c, const Vector& theta)
{
    Vector p = Vector::Zero(theta.size());
    auto idx = [&](int id) {
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            if (c.buses[i].id == id) {
                return static_cast<Eigen::Index>(i);
            }
        }
        return Eigen::Index{-1};
    };
    for (const auto& l : c.lines) {
        const auto a = idx(l.from);
        const auto b = idx(l.to);
        const double flow = c.base_mva * c.buses[a].voltage * c.buses[b].voltage * l.susceptance * std::sin(theta(a) - theta(b));
        p(a) += flow;
        p(b) -= flow;
    }
    return p;
}

Matrix fd_jacobian(const SystemCase& c)
{
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    Vector theta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        theta(i) = c.buses[static_cast<std::size_t>(i)].angle;
    }
    Matrix j(n, n);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < n; ++k) {
        Vector tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        j.col(k) = (injections(c, tp) - injections(c, tm)) / (2 * h);
    }
    return j;
}

// One-bus-at-a-time elimination, the textbook form of Kron reduction.
Matrix eliminate_sequentially(Matrix h, std::vector<Eigen::Index> keep)
{
    std::vector<Eigen::Index> order(static_cast<std::size_t>(h.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::vector<Eigen::Index> alive = order;
    for (Eigen::Index k = h.rows() - 1; k >= 0; --k) {
        if (std::find(keep.begin(), keep.end(), k) != keep.end()) {
            continue;
        }
        const Eigen::Index pos = std::find(alive.begin(), alive.end(), k) - alive.begin();
        const Eigen::Index m = static_cast<Eigen::Index>(alive.size());
        Matrix next(m - 1, m - 1);
        for (Eigen::Index i = 0, ii = 0; i < m; ++i) {
            if (i == pos) {
                continue;
            }
            for (Eigen::Index j = 0, jj = 0; j < m; ++j) {
                if (j == pos) {
                    continue;
                }
                next(ii, jj) = h(i, j) - h(i, pos) * h(pos, j) / h(pos, pos);
                ++jj;
            }
            ++ii;
        }
        h = next;
        alive.erase(alive.begin() + pos);
    }
    return h;
}

SystemCase random_case(std::mt19937_64& rng, int n, int n_gen)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SystemCase c;
    c.base_mva = 100.0;
    for (int i = 1; i <= n; ++i) {
        c.buses.push_back({i, i <= n_gen ? BusKind::Generator : BusKind::Load, 0.95 + 0.1 * u(rng), 0.3 * (u(rng) - 0.5), 0.0});
    }
    const Matrix l = fixtures::random_laplacian(rng, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (l(i, j) != 0.0) {
                c.lines.push_back({i + 1, j + 1, -l(i, j)});
            }
        }
    }
    return c;
}

} // namespace

TEST(Jacobian, TwoBusFlatStartIsLaplacian)
{
    const Jacobian j = build_jacobian(chain(2));
    Matrix expect(2, 2);
    expect << 1, -1, -1, 1;
    EXPECT_LT((j.H - expect).norm(), 1e-15);
}

TEST(Jacobian, ThreeBusPath)
{
    const Jacobian j = build_jacobian(chain(3));
    Matrix expect(3, 3);
    expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    EXPECT_LT((j.H - expect).norm(), 1e-15);
}

TEST(Jacobian, OffNominalMatchesFiniteDifference)
{
    SystemCase c = chain(2);
    c.buses[1].voltage = 0.95;
    c.buses[0].angle = 0.1;
    c.lines[0].susceptance = 2.0;
    const Jacobian j = build_jacobian(c);
    EXPECT_NEAR(j.H(0, 1), -1.0 * 0.95 * 2.0 * std::cos(0.1), 1e-15);
    EXPECT_LT((j.H - fd_jacobian(c)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Jacobian, RandomCasesAgreeWithFiniteDifferenceAndAreSymmetric)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const SystemCase c = random_case(rng, 8, 3);
        const Jacobian j = build_jacobian(c);
        EXPECT_LT((j.H - fd_jacobian(c)).cwiseAbs().maxCoeff(), 1e-5 * j.H.cwiseAbs().maxCoeff());
        EXPECT_LT((j.H - j.H.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT(j.H.rowwise().sum().cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Jacobian, FlatStartIsPositiveSemidefinite)
{
    std::mt19937_64 rng(5);
    SystemCase c = random_case(rng, 7, 3);
    for (auto& b : c.buses) {
        b.angle = 0.0;
    }
    EXPECT_GT(min_eigenvalue(build_jacobian(c).H), -1e-9);
}

TEST(Jacobian, DisconnectedNetworkIsRejected)
{
    SystemCase c = chain(4);
    c.lines.erase(c.lines.begin() + 1);
    try {
        build_jacobian(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Network);
        EXPECT_NE(std::string(e.what()).find("disconnected"), std::string::npos);
    }
}

TEST(Jacobian, WideAngleWarnsOrFails)
{
    SystemCase c = chain(2);
    c.buses[0].angle = 1.7;
    const Jacobian j = build_jacobian(c);
    ASSERT_EQ(j.warnings.size(), 1u);
    EXPECT_NE(j.warnings[0].find("operating point outside linearization region"), std::string::npos);
    c.strict_operating_point = true;
    EXPECT_THROW(build_jacobian(c), Error);
}

TEST(Kron, NoLoadBusesKeepsHgg)
{
    const Jacobian j = build_jacobian(chain(3));
    const ReducedNetwork r = kron_reduce(j, {1, 2, 3});
    EXPECT_LT((r.L - j.H).norm(), 1e-15);
    EXPECT_EQ(r.disturbance_map.cols(), 0);
}

TEST(Kron, ChainEliminatingMiddleBus)
{
    const ReducedNetwork r = kron_reduce(build_jacobian(chain(3)), {1, 3});
    Matrix expect(2, 2);
    expect << 0.5, -0.5, -0.5, 0.5;
    EXPECT_LT((r.L - expect).norm(), 1e-14);
    // Dense linear-solve oracle for the Schur complement.
    const Matrix h = build_jacobian(chain(3)).H;
    const std::vector<Eigen::Index> g{0, 2}, l{1};
    const Matrix oracle = h(g, g) - h(g, l) * h(l, l).partialPivLu().solve(h(l, g));
    EXPECT_LT((r.L - oracle).norm(), 1e-14);
}

TEST(Kron, RandomReductionProperties)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const SystemCase c = random_case(rng, 6 + trial % 5, 3);
        const ReducedNetwork r = reduce_case(c);
        const ReductionCheck chk = check_reduction(r);
        EXPECT_LT(chk.asymmetry, 1e-10);
        EXPECT_LT(chk.max_row_sum, 1e-9);
        EXPECT_EQ(chk.near_zero_eigenvalues, 1);
        Eigen::SelfAdjointEigenSolver<Matrix> es(r.L);
        Vector v0 = es.eigenvectors().col(0);
        v0 /= v0.sum() / static_cast<double>(v0.size());
        EXPECT_LT((v0 - Vector::Ones(v0.size())).norm(), 1e-8);
    }
}

TEST(Kron, EliminationOrderInvariance)
{
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const SystemCase c = random_case(rng, 9, 4);
        const Jacobian j = build_jacobian(c);
        const ReducedNetwork r = kron_reduce(j, c.generator_bus_ids());
        const Matrix seq = eliminate_sequentially(j.H, {0, 1, 2, 3});
        EXPECT_LT((r.L - seq).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, r.L.cwiseAbs().maxCoeff()));
    }
}

TEST(Kron, SingularLoadBlockIsReported)
{
    // A pi/2 angle across the only tie leaves the load pair with no coupling to the generator.
    SystemCase c = chain(3);
    c.buses[1].kind = BusKind::Load;
    c.buses[2].kind = BusKind::Load;
    c.buses[0].angle = std::numbers::pi / 2;
    const Jacobian j = build_jacobian(c);
    try {
        kron_reduce(j, {1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Network);
        EXPECT_NE(std::string(e.what()).find("isolated load subnetwork"), std::string::npos);
    }
}

TEST(Disturbance, ZeroStepGivesZero)
{
    std::mt19937_64 rng(1);
    const ReducedNetwork r = reduce_case(random_case(rng, 6, 3));
    EXPECT_EQ(equivalent_disturbance(r, std::map<int, double>{}).norm(), 0.0);
}

TEST(Disturbance, LoadStepSumsToNegativeTotal)
{
    std::mt19937_64 rng(2);
    const SystemCase c = random_case(rng, 8, 3);
    const ReducedNetwork r = reduce_case(c);
    const Vector pu = equivalent_disturbance(r, Disturbance{6, 300.0});
    EXPECT_NEAR(pu.sum(), -300.0, 1e-9 * 300.0);
    // Oracle: the map is -H_GL H_LL^-1 applied to the load-bus step.
    const Jacobian j = build_jacobian(c);
    const std::vector<Eigen::Index> g{0, 1, 2}, l{3, 4, 5, 6, 7};
    Vector step = Vector::Zero(5);
    step(2) = 300.0;
    const Vector oracle = j.H(g, l) * j.H(l, l).partialPivLu().solve(step);
    EXPECT_LT((pu - oracle).norm(), 1e-9 * 300.0);
}

TEST(Disturbance, GeneratorBusStepStaysLocal)
{
    std::mt19937_64 rng(4);
    const ReducedNetwork r = reduce_case(random_case(rng, 6, 3));
    const Vector pu = equivalent_disturbance(r, Disturbance{2, 50.0});
    Vector expect = Vector::Zero(3);
    expect(1) = -50.0;
    EXPECT_LT((pu - expect).norm(), 1e-15);
}

TEST(Disturbance, MultiBusStepSumsToNegativeTotal)
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const ReducedNetwork r = reduce_case(random_case(rng, 10, 4));
        std::map<int, double> step{{5, 100.0}, {7, 40.0}, {2, 10.0}, {10, 5.5}};
        EXPECT_NEAR(equivalent_disturbance(r, step).sum(), -155.5, 1e-9 * 155.5);
    }
}
