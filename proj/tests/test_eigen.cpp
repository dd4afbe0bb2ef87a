#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "nlfb/eigen.hpp"
#include "oracles.hpp"

using namespace nlfb;

namespace {

RadialKernel disc() { return RadialKernel::uniform(2); }
RadialKernel ball() { return RadialKernel::uniform(3); }

// Dense unsymmetric discretization on the same nodes, handed to a general
// eigensolver: the largest real eigenvalue of d A - d + a.
double dense_oracle(const RadialKernel& k, double d, double a, double L, double dr)
{
    const BallGrid g = ball_grid(L, dr);
    const auto n = static_cast<Eigen::Index>(g.r.size());
    Eigen::MatrixXd m(n, n);
    const QuadOptions q{24, false};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double ri = g.r[static_cast<std::size_t>(i)];
            const double rj = g.r[static_cast<std::size_t>(j)];
            const double jt = j == 0 ? 0.0 : j_tilde(k, ri, rj, q);
            m(i, j) = d * jt * g.w[static_cast<std::size_t>(j)];
        }
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    double top = -1e300;
    for (Eigen::Index i = 0; i < n; ++i) {
        top = std::max(top, es.eigenvalues()[i].real());
    }
    return top - d + a;
}

} // namespace

TEST(Eigen, RankOneBallsAreExact)
{
    // all pairs in B_L with L <= 1/2 are within distance 1, so K is rank one with
    // eigenvalue J(0)|B_L| = L^N for the unit disc and ball
    for (double L : {0.1, 0.3, 0.5}) {
        EXPECT_NEAR(lambda1(disc(), {1.0, 0.5, L}).lambda1, -0.5 + L * L, 1e-12) << L;
        // N = 3: the trapezoid rule on 3 rho^2 adds exactly L dr^2 / 2
        const double dr = L / 40.0;
        EXPECT_NEAR(lambda1(ball(), {2.0, 0.3, L}).lambda1,
                    0.3 - 2.0 + 2.0 * (L * L * L + 0.5 * L * dr * dr), 1e-12) << L;
    }
}

TEST(Eigen, MatchesDenseGeneralEigensolver)
{
    for (const auto& k : {disc(), ball(), RadialKernel::fat_tail(2, 2.8)}) {
        for (double L : {1.3, 3.0}) {
            EigenOptions opt;
            opt.dr_max = 0.1;
            const auto res = lambda1(k, {1.0, 0.5, L}, opt);
            EXPECT_NEAR(res.lambda1, dense_oracle(k, 1.0, 0.5, L, res.dr), 1e-9) << k.name() << L;
        }
    }
}

TEST(Eigen, ResidualPositivityAndRayleigh)
{
    for (const auto& k : {disc(), ball(), RadialKernel::fat_tail(3, 3.5)}) {
        for (double L : {0.7, 4.0, 12.5}) {
            const auto res = lambda1(k, {1.0, 0.5, L});
            EXPECT_LT(res.residual, 1e-8);
            EXPECT_NEAR(res.lambda_weighted, res.lambda1, 1e-8);
            EXPECT_DOUBLE_EQ(*std::max_element(res.eigenfunction.begin(), res.eigenfunction.end()), 1.0);
            for (double v : res.eigenfunction) {
                EXPECT_GT(v, 0.0);
            }
        }
    }
}

TEST(Eigen, VariationalLowerBound)
{
    // phi = 1 gives lambda1 >= d <J 1, 1> / |B_L| - d + a
    const auto k = disc();
    const double d = 1.0;
    const double a = 0.5;
    for (double L : {0.8, 2.0}) {
        const double inner = oracle::simpson(
            [&](double r) {
                const double row = oracle::simpson([&](double rho) { return j_tilde(k, r, rho); }, 0.0, L, 1e-9);
                return 2.0 * std::numbers::pi * r * row;
            },
            0.0, L, 1e-8);
        const double bound = d * inner / (std::numbers::pi * L * L) - d + a;
        const auto res = lambda1(k, {d, a, L});
        EXPECT_GT(res.lambda1, bound - 2e-3) << L;
    }
}

TEST(Eigen, LimitsAndBounds)
{
    const auto small = lambda1(disc(), {1.0, 0.5, 0.02});
    EXPECT_GT(small.lambda1, -0.5);
    EXPECT_LT(small.lambda1, -0.49);
    const auto large = lambda1(disc(), {1.0, 0.5, 60.0});
    EXPECT_GT(large.lambda1, 0.45);
    EXPECT_LT(large.lambda1, 0.5);
    for (double L : {0.05, 1.0, 5.0, 30.0}) {
        const auto r = lambda1(disc(), {1.0, 1.0, L});
        EXPECT_GT(r.lambda1, 0.0) << L;
        EXPECT_LT(r.lambda1, 1.0) << L;
    }
}

TEST(Eigen, MonotoneInRadius)
{
    for (const auto& k : {disc(), ball()}) {
        EigenSolver solver(k);
        double prev = -1e300;
        for (double L = 0.05; L <= 20.0; L += 0.05) {
            const double lam = solver.solve({1.0, 0.5, L}).lambda1;
            EXPECT_GE(lam, prev) << k.name() << " L=" << L;
            EXPECT_GE(lam, 0.5 - 1.0);
            EXPECT_LE(lam, 0.5);
            prev = lam;
        }
    }
}

TEST(Eigen, GridRefinementConverges)
{
    // Richardson-style check: successive differences shrink under halving
    const double L = 3.0;
    double prev = 0.0;
    double prev_diff = 0.0;
    for (int level = 0; level < 4; ++level) {
        EigenOptions opt;
        opt.dr_max = 0.1 / std::pow(2.0, level);
        const double lam = lambda1(disc(), {1.0, 0.5, L}, opt).lambda1;
        if (level >= 1) {
            const double diff = std::abs(lam - prev);
            if (level >= 2) {
                EXPECT_LT(diff, 0.75 * prev_diff) << level;
            }
            prev_diff = diff;
        }
        prev = lam;
    }
    EXPECT_LT(prev_diff, 1e-3);
}

TEST(Eigen, RejectsBadInput)
{
    EigenOptions opt;
    opt.n_min = 1;
    opt.dr_max = 1.0;
    EXPECT_THROW(lambda1(disc(), {1.0, 0.5, 0.0}), ModelInputError);
    EXPECT_THROW(lambda1(disc(), {0.0, 0.5, 1.0}), ModelInputError);
    EXPECT_THROW(ball_grid(0.5, 1.0), ModelInputError);
}

TEST(Eigen, LStar)
{
    EigenSolver solver(disc());
    const auto half = find_L_star(solver, 1.0, 0.5);
    EXPECT_GT(half.L_star, 0.0);
    EXPECT_LT(std::abs(half.lambda_at), 1e-4);
    EXPECT_LT(half.hi - half.lo, 1e-4);
    // a rank-one ball: L* = sqrt(d - a) when that is below 1/2
    const auto near = find_L_star(solver, 1.0, 0.999);
    EXPECT_NEAR(near.L_star, std::sqrt(0.001), 1e-4);
    EXPECT_LT(near.L_star, half.L_star);
    EXPECT_THROW(find_L_star(solver, 1.0, 1.0), ModelInputError);
    EXPECT_THROW(find_L_star(solver, 1.0, 0.0), ModelInputError);
}

TEST(Eigen, SteadyState)
{
    const auto f = Nonlinearity::logistic();
    EXPECT_THROW(steady_state(disc(), 0.5, 2.0, f), ModelInputError);

    const auto big = steady_state(disc(), 10.0, 1.0, f);
    const double top = *std::max_element(big.w.begin(), big.w.end());
    EXPECT_GT(top, 0.9);
    EXPECT_LT(top, 1.0);

    const auto small = steady_state(disc(), 5.0, 1.0, f);
    ASSERT_EQ(small.dr, big.dr);
    for (std::size_t i = 0; i < small.w.size(); ++i) {
        EXPECT_GT(small.w[i], 0.0);
        EXPECT_LE(small.w[i], big.w[i] + 1e-9) << small.r[i];
    }
}
