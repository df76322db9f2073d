#include "hodi/conic.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace hodi;

namespace {

Matrix rotation(double angle)
{
    Matrix r(2, 2);
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return r;
}

// min x  s.t.  x I - A >= 0
ConicProblem lambda_max_problem(const Matrix& a)
{
    ConicProblem p;
    const int x = p.add_variable("x", -kInf, kInf, 0.0, 1.0);
    p.lmis.push_back({"lmax", -a, {{x, Matrix::Identity(a.rows(), a.cols())}}});
    return p;
}

} // namespace

TEST(Conic, LambdaMaxDiagonal)
{
    Matrix a = Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal();
    const Solution s = solve(lambda_max_problem(a));
    ASSERT_TRUE(s.optimal()) << s.message;
    EXPECT_NEAR(s.values(0), 3.0, 1e-6);
    EXPECT_NEAR(s.objective_value, 3.0, 1e-6);
}

TEST(Conic, LambdaMaxRotated)
{
    const Matrix r = rotation(0.7);
    const Matrix a = r * Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal() * r.transpose();
    const Solution s = solve(lambda_max_problem(a));
    ASSERT_TRUE(s.optimal()) << s.message;
    EXPECT_NEAR(s.values(0), 3.0, 1e-6);
    ASSERT_EQ(s.min_lmi_eigenvalues.size(), 1u);
    EXPECT_GE(s.min_lmi_eigenvalues[0], -1e-8);
}

TEST(Conic, LambdaMaxRandomMatchesEigensolver)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial % 5;
        Matrix a(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                a(i, j) = g(rng);
            }
        }
        a = (a + a.transpose()).eval();
        const double oracle = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().maxCoeff();
        const Solution s = solve(lambda_max_problem(a));
        ASSERT_TRUE(s.optimal()) << s.message;
        EXPECT_NEAR(s.values(0), oracle, 1e-6);
    }
}

TEST(Conic, BoundedQuadratic)
{
    ConicProblem p;
    const int x = p.add_variable("x", 0.0, 10.0, 1.0, 0.0);
    p.linear.push_back({"x>=2", {{x, 1.0}}, 2.0});
    const Solution s = solve(p);
    ASSERT_TRUE(s.optimal()) << s.message;
    EXPECT_NEAR(s.values(0), 2.0, 1e-6);
    EXPECT_NEAR(s.objective_value, 4.0, 1e-6);
}

TEST(Conic, TwoVariableKkt)
{
    ConicProblem p;
    const int d1 = p.add_variable("d1", 0.0, kInf, 1.0, 0.0);
    const int d2 = p.add_variable("d2", 0.0, kInf, 2.0, 0.0);
    p.linear.push_back({"sum", {{d1, 1.0}, {d2, 1.0}}, 1.0});
    const Solution s = solve(p);
    ASSERT_TRUE(s.optimal()) << s.message;
    EXPECT_NEAR(s.values(0), 2.0 / 3.0, 1e-6);
    EXPECT_NEAR(s.values(1), 1.0 / 3.0, 1e-6);
    EXPECT_NEAR(s.objective_value, 2.0 / 3.0, 1e-6);
}

TEST(Conic, RandomSeparableQpMatchesWaterFilling)
{
    // min sum q_i x_i^2 + c_i x_i  s.t. sum x_i >= b, x >= 0. KKT: x_i = max(0, (nu - c_i) / (2 q_i)).
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 6;
        ConicProblem p;
        std::vector<double> q(n), c(n);
        ConicProblem::Linear row{"sum", {}, 5.0 + 10.0 * u(rng)};
        for (int i = 0; i < n; ++i) {
            q[i] = 0.1 + u(rng);
            c[i] = 3.0 * u(rng);
            row.coeffs.emplace_back(p.add_variable("x" + std::to_string(i), 0.0, kInf, q[i], c[i]), 1.0);
        }
        p.linear.push_back(row);
        auto total = [&](double nu) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                s += std::max(0.0, (nu - c[i]) / (2 * q[i]));
            }
            return s;
        };
        double lo = 0.0, hi = 1e4;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (total(mid) < row.rhs ? lo : hi) = mid;
        }
        const Solution s = solve(p);
        ASSERT_TRUE(s.optimal()) << s.message;
        for (int i = 0; i < n; ++i) {
            EXPECT_NEAR(s.values(i), std::max(0.0, (hi - c[i]) / (2 * q[i])), 1e-5);
        }
    }
}

TEST(Conic, InfeasibleReportsNegativeSlack)
{
    ConicProblem p;
    const int x = p.add_variable("x", 0.0, 1.0);
    p.linear.push_back({"x>=2", {{x, 1.0}}, 2.0});
    const Solution s = solve(p);
    EXPECT_EQ(s.status, SolveStatus::Infeasible);
    EXPECT_LT(s.phase1_slack, 0.0);
    const FeasiblePoint fp = phase1_feasible_point(p);
    EXPECT_FALSE(fp.feasible);
    EXPECT_NEAR(fp.slack, -1.0, 1e-5);
}

TEST(Conic, InfeasibleLmi)
{
    // x I - A >= 0 with x <= 1 and lambda_max(A) = 3.
    const Matrix r = rotation(0.3);
    const Matrix a = r * Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal() * r.transpose();
    ConicProblem p = lambda_max_problem(a);
    p.variables[0].lo = 0.0;
    p.variables[0].hi = 1.0;
    const Solution s = solve(p);
    EXPECT_EQ(s.status, SolveStatus::Infeasible);
    EXPECT_NEAR(s.phase1_slack, -2.0, 1e-4);
}

TEST(Conic, UnboundedObjective)
{
    ConicProblem p;
    p.add_variable("x", 0.0, kInf, 0.0, -1.0);
    EXPECT_EQ(solve(p).status, SolveStatus::Unbounded);
}

TEST(Conic, PhaseOneReturnsInteriorPoint)
{
    const Matrix r = rotation(1.1);
    const Matrix a = r * Vector(Eigen::Vector2d(-2.0, 5.0)).asDiagonal() * r.transpose();
    ConicProblem p = lambda_max_problem(a);
    p.variables[0].lo = -100.0;
    p.variables[0].hi = 100.0;
    const FeasiblePoint fp = phase1_feasible_point(p);
    ASSERT_TRUE(fp.feasible);
    EXPECT_GE(min_eigenvalue(p.lmis[0].evaluate(fp.x)), 1e-6);
}

TEST(Conic, PhaseOneWithoutConstraintsIsBoxCenter)
{
    ConicProblem p;
    p.add_variable("a", 0.0, 4.0);
    p.add_variable("b", -2.0, 8.0);
    const FeasiblePoint fp = phase1_feasible_point(p);
    ASSERT_TRUE(fp.feasible);
    EXPECT_DOUBLE_EQ(fp.x(0), 2.0);
    EXPECT_DOUBLE_EQ(fp.x(1), 3.0);
}

TEST(Conic, FixedVariablesAndZeroRowsArePresolved)
{
    // Block diag(x - 2 y, 0) with y fixed: the zero row must not make the problem degenerate.
    ConicProblem p;
    const int x = p.add_variable("x", 0.0, 10.0, 1.0, 0.0);
    const int y = p.add_variable("y", 1.5, 1.5);
    Matrix ex = Matrix::Zero(2, 2), ey = Matrix::Zero(2, 2);
    ex(0, 0) = 1.0;
    ey(0, 0) = -2.0;
    p.lmis.push_back({"blk", Matrix::Zero(2, 2), {{x, ex}, {y, ey}}});
    const Solution s = solve(p);
    ASSERT_TRUE(s.optimal()) << s.message;
    EXPECT_NEAR(s.values(0), 3.0, 1e-6);
    EXPECT_DOUBLE_EQ(s.values(1), 1.5);
}

TEST(Conic, IterationLimitIsNumericalFailure)
{
    const Matrix r = rotation(0.7);
    ConicProblem p = lambda_max_problem(r * Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal() * r.transpose());
    SolverConfig cfg;
    cfg.max_iterations = 3;
    const Solution s = solve(p, cfg);
    EXPECT_EQ(s.status, SolveStatus::NumericalFailure);
    EXPECT_EQ(s.values.size(), 1);
}

TEST(Conic, DeterministicAcrossRuns)
{
    const Matrix r = rotation(0.4);
    ConicProblem p = lambda_max_problem(r * Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal() * r.transpose());
    p.add_variable("z", 0.0, kInf, 1.0, -2.0);
    SolverConfig cfg;
    cfg.keep_log = true;
    const Solution a = solve(p, cfg);
    const Solution b = solve(p, cfg);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.iterations, b.iterations);
    ASSERT_FALSE(a.log.empty());
    EXPECT_EQ(a.log.size(), b.log.size());
}

TEST(Conic, ProblemFileRoundTrip)
{
    const Matrix r = rotation(0.4);
    ConicProblem p = lambda_max_problem(r * Vector(Eigen::Vector2d(1.0, 3.0)).asDiagonal() * r.transpose());
    const int z = p.add_variable("z", 0.0, 5.0, 1.0, -2.0);
    p.linear.push_back({"row", {{0, 1.0}, {z, -0.5}}, 0.25});
    p.objective_constant = 1.5;
    std::stringstream ss;
    write_problem(ss, p);
    const ConicProblem q = read_problem(ss);
    ASSERT_EQ(q.variables.size(), p.variables.size());
    EXPECT_EQ(q.variables[0].lo, -kInf);
    EXPECT_EQ(q.variables[1].quad, 1.0);
    EXPECT_EQ(q.objective_constant, 1.5);
    ASSERT_EQ(q.lmis.size(), 1u);
    EXPECT_EQ(q.lmis[0].constant, p.lmis[0].constant);
    EXPECT_EQ(q.lmis[0].terms[0].second, p.lmis[0].terms[0].second);
    EXPECT_EQ(q.linear[0].coeffs, p.linear[0].coeffs);
    std::stringstream again;
    write_problem(again, q);
    std::stringstream first;
    write_problem(first, p);
    EXPECT_EQ(first.str(), again.str());
}

TEST(Conic, ExternalBackendIsCalled)
{
    SolverConfig cfg;
    cfg.backend = SolverConfig::Backend::External;
    int calls = 0;
    cfg.external = [&](const ConicProblem& p, const SolverConfig&) {
        ++calls;
        Solution s;
        s.status = SolveStatus::Optimal;
        s.values = Vector::Zero(p.size());
        return s;
    };
    ConicProblem p;
    p.add_variable("x", 0.0, 1.0);
    EXPECT_TRUE(solve(p, cfg).optimal());
    EXPECT_EQ(calls, 1);
    cfg.external = nullptr;
    EXPECT_THROW(solve(p, cfg), Error);
}

TEST(Conic, LargerBetaNeverCheapens)
{
    // min d^2 + m^2 s.t. d - 2 beta m >= 0 (as a 1x1 LMI), m >= 1: objective grows with beta.
    double prev = -1.0;
    for (double beta : {0.5, 1.0, 2.0, 3.0}) {
        ConicProblem p;
        const int m = p.add_variable("m", 1.0, 100.0, 1.0, 0.0);
        const int d = p.add_variable("d", 0.0, 100.0, 1.0, 0.0);
        Matrix one = Matrix::Constant(1, 1, 1.0);
        p.lmis.push_back({"decay", Matrix::Zero(1, 1), {{d, one}, {m, -2.0 * beta * one}}});
        const Solution s = solve(p);
        ASSERT_TRUE(s.optimal());
        EXPECT_NEAR(s.objective_value, 1.0 + 4.0 * beta * beta, 1e-5);
        EXPECT_GE(s.objective_value, prev);
        prev = s.objective_value;
    }
}
