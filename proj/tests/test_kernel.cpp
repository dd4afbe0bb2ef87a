#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "nlfb/kernel.hpp"
#include "oracles.hpp"

using namespace nlfb;
using std::numbers::pi;

namespace {

RadialKernel disc() { return RadialKernel::uniform(2); }
RadialKernel ball() { return RadialKernel::uniform(3); }

RadialKernel smooth_bump(int dim)
{
    return RadialKernel::compact(
               dim, 1.0, [](double r) { return (1.0 - r * r) * (1.0 - r * r); }, "bump")
        .normalized();
}

// Closed form for the fat-tail family C (1 + (r/s)^2)^(-beta/2):
// J*(l) = omega_{N-1} C s^beta (s^2 + l^2)^((N-1-beta)/2) B((N-1)/2, (beta-N+1)/2) / 2.
double fat_jstar_closed(int n, double beta, double s, double l)
{
    const double c = 1.0 / (sphere_area(n) * std::pow(s, n) * 0.5 *
                            beta_function(0.5 * n, 0.5 * (beta - n)));
    return sphere_area(n - 1) * c * std::pow(s, beta) *
           std::pow(s * s + l * l, 0.5 * (n - 1 - beta)) * 0.5 *
           beta_function(0.5 * (n - 1), 0.5 * (beta - n + 1));
}

// int_0^inf J~(r, rho) drho for a unit-support compact kernel, by adaptive Simpson
// over panels split at the kinks rho = |1 - r| and rho = r +- 1.
double row_integral_compact(const RadialKernel& k, double r)
{
    std::vector<double> breaks{std::max(0.0, r - 1.0)};
    if (r < 1.0) {
        breaks.push_back(1.0 - r);
    }
    breaks.push_back(r + 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        sum += oracle::simpson_cos([&](double rho) { return j_tilde(k, r, rho); }, breaks[i],
                                   breaks[i + 1], 1e-11);
    }
    return sum;
}

} // namespace

TEST(Kernel, SphereAreas)
{
    EXPECT_DOUBLE_EQ(sphere_area(1), 2.0);
    EXPECT_NEAR(sphere_area(2), 2.0 * pi, 1e-14);
    EXPECT_NEAR(sphere_area(3), 4.0 * pi, 1e-13);
}

TEST(Kernel, ValidateDisc)
{
    const auto rep = validate_kernel(disc());
    EXPECT_TRUE(rep.accepted);
    EXPECT_NEAR(rep.normalization, 1.0, 1e-12);
    EXPECT_NEAR(rep.j_at_zero, 1.0 / pi, 1e-15);
    EXPECT_TRUE(rep.moment_n_finite);
    EXPECT_NEAR(rep.moment_n, 1.0 / (3.0 * pi), 1e-12);
}

TEST(Kernel, ValidateBall)
{
    const auto rep = validate_kernel(ball());
    EXPECT_TRUE(rep.accepted);
    EXPECT_NEAR(rep.normalization, 1.0, 1e-12);
}

TEST(Kernel, RejectsNegativeProfile)
{
    const auto bad = RadialKernel::compact(2, 1.0, [](double r) { return r < 0.5 ? 1.0 / pi : -1.0 / pi; });
    const auto rep = validate_kernel(bad);
    EXPECT_FALSE(rep.accepted);
    EXPECT_FALSE(rep.nonnegative);
    EXPECT_THROW(require_valid(bad), ModelInputError);
}

TEST(Kernel, RejectsBadNormalizationAndZeroCenter)
{
    EXPECT_FALSE(validate_kernel(disc().scaled(1.01)).accepted);
    const auto hollow = RadialKernel::compact(2, 1.0, [](double r) { return r; }).normalized();
    const auto rep = validate_kernel(hollow);
    EXPECT_FALSE(rep.accepted);
    EXPECT_TRUE(rep.nonnegative);
}

TEST(Kernel, FatTailNormalizationAndJ1Verdict)
{
    for (double beta : {2.5, 2.8, 3.0, 3.5}) {
        const auto k = RadialKernel::fat_tail(2, beta);
        const auto rep = validate_kernel(k);
        EXPECT_TRUE(rep.accepted) << beta;
        EXPECT_NEAR(rep.normalization, 1.0, 1e-9) << beta;
        EXPECT_EQ(rep.moment_n_finite, beta > 3.0) << beta;
    }
    EXPECT_THROW(RadialKernel::fat_tail(2, 2.0), ModelInputError);
}

TEST(Kernel, JStarClosedForms)
{
    EXPECT_NEAR(j_star(disc(), 0.0), 2.0 / pi, 1e-12);
    EXPECT_NEAR(j_star(disc(), 0.5), 2.0 / pi * std::sqrt(0.75), 1e-12);
    EXPECT_NEAR(j_star(disc(), -0.5), 2.0 / pi * std::sqrt(0.75), 1e-12);
    // N = 3: omega_2 * (3 / 4 pi) * int_0^sqrt(1-l^2) s ds = (3/4)(1 - l^2)
    EXPECT_NEAR(j_star(ball(), 0.5), 0.5625, 1e-12);
    EXPECT_EQ(j_star(disc(), 1.5), 0.0);
}

TEST(Kernel, JStarHasUnitMass)
{
    for (const auto& k : {disc(), ball(), smooth_bump(3)}) {
        const double mass = 2.0 * oracle::simpson_cos([&](double l) { return j_star(k, l); }, 0.0, 1.0);
        EXPECT_NEAR(mass, 1.0, 1e-9) << k.name() << k.dim();
    }
}

TEST(Kernel, JStarFatTailMatchesClosedForm)
{
    for (int n : {2, 3}) {
        for (double beta : {n + 0.5, n + 1.0, n + 1.5}) {
            const auto k = RadialKernel::fat_tail(n, beta, 1.0);
            for (double l : {0.0, 0.3, 2.0, 17.0, 400.0}) {
                const double expect = fat_jstar_closed(n, beta, 1.0, l);
                EXPECT_NEAR(j_star(k, l), expect, 1e-9 * expect) << n << " " << beta << " " << l;
            }
        }
    }
}

TEST(Kernel, JStarMonotone)
{
    for (const auto& k : {disc(), ball(), RadialKernel::fat_tail(2, 2.8)}) {
        double prev = j_star(k, 0.0);
        for (double l = 0.05; l < 3.0; l += 0.05) {
            const double v = j_star(k, l);
            EXPECT_LE(v, prev + 1e-14);
            prev = v;
        }
    }
}

TEST(Kernel, JTildeExamples)
{
    EXPECT_NEAR(j_tilde(disc(), 0.0, 0.5), 1.0, 1e-14);
    // sphere of radius 1/4 about a point at distance 1/4 lies inside the support:
    // J~ = |dB_rho| * 3 / (4 pi) = 3 rho^2
    EXPECT_NEAR(j_tilde(ball(), 0.25, 0.25), 0.1875, 1e-12);
    EXPECT_EQ(j_tilde(disc(), 5.0, 1.0), 0.0);
    EXPECT_EQ(j_tilde(disc(), 1.0, 0.0), 0.0);
}

TEST(Kernel, JTildeSplit)
{
    const auto s = j_tilde_split(ball(), 0.25, 0.25);
    // eta form for N = 3: (3 rho / 4 r) [min(sqrt(r^2 + rho^2), 1)^2 - (rho - r)^2]
    EXPECT_NEAR(s.plus, 0.09375, 1e-12);
    EXPECT_NEAR(s.plus + s.minus, j_tilde(ball(), 0.25, 0.25), 1e-10);
    EXPECT_EQ(j_tilde_split(disc(), 3.0, 3.5).minus, 0.0);
    EXPECT_THROW(j_tilde_split(disc(), 0.0, 1.0), ModelInputError);

    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(0.05, 4.0);
    for (const auto& k : {disc(), ball(), RadialKernel::fat_tail(3, 3.7)}) {
        for (int i = 0; i < 10; ++i) {
            const double r = u(gen);
            const double rho = u(gen);
            const auto parts = j_tilde_split(k, r, rho);
            EXPECT_NEAR(parts.plus + parts.minus, j_tilde(k, r, rho), 1e-10);
        }
    }
}

TEST(Kernel, JTildeMatchesEtaFormForBall)
{
    // eta form for N = 3: J~ = (3 rho / (4 r)) [min(rho + r, 1)^2 - (rho - r)^2]
    for (double r : {0.1, 0.4, 0.9, 2.0}) {
        for (double rho : {0.2, 0.7, 1.5, 2.5}) {
            if (std::abs(rho - r) >= 1.0) {
                continue;
            }
            const double top = std::min(rho + r, 1.0);
            const double expect = 0.75 * rho / r * (top * top - (rho - r) * (rho - r));
            EXPECT_NEAR(j_tilde(ball(), r, rho), expect, 1e-11 * std::max(1.0, expect));
        }
    }
}

TEST(Kernel, RowNormalization)
{
    std::mt19937 gen(11);
    std::uniform_real_distribution<double> u(0.0, 6.0);
    for (const auto& k : {disc(), ball()}) {
        for (int i = 0; i < 6; ++i) {
            const double r = u(gen);
            EXPECT_NEAR(row_integral_compact(k, r), 1.0, 1e-6) << "r=" << r;
        }
    }
}

TEST(Kernel, Symmetry)
{
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    std::uniform_real_distribution<double> off(-0.99, 0.99);
    for (const auto& k : {disc(), ball(), smooth_bump(2), RadialKernel::fat_tail(2, 2.8)}) {
        const int n = k.dim();
        for (int i = 0; i < 10; ++i) {
            const double r = u(gen);
            const double rho = std::max(0.01, r + off(gen));
            const double a = std::pow(r, n - 1) * j_tilde(k, r, rho);
            const double b = std::pow(rho, n - 1) * j_tilde(k, rho, r);
            EXPECT_NEAR(a, b, 1e-8 * std::max(std::abs(a), 1e-300)) << r << " " << rho;
        }
    }
}

TEST(Kernel, QuadratureConvergesForSmoothKernels)
{
    const QuadOptions q64{64, false};
    const QuadOptions q128{128, false};
    for (const auto& k : {smooth_bump(2), smooth_bump(3), RadialKernel::fat_tail(2, 2.8)}) {
        for (double r : {0.3, 1.0, 7.5}) {
            for (double rho : {0.5, r + 0.2, r + 0.8}) {
                const double a = j_tilde(k, r, rho, q64);
                const double b = j_tilde(k, r, rho, q128);
                EXPECT_NEAR(a, b, 1e-9 * std::max(std::abs(b), 1e-300));
            }
        }
    }
}

TEST(Kernel, CompactKernelApproachesJStarLikeOneOverR)
{
    for (const auto& k : {disc(), ball()}) {
        std::vector<double> constants;
        for (double r : {10.0, 20.0, 40.0, 80.0}) {
            double worst = 0.0;
            for (int i = 0; i <= 200; ++i) {
                const double rho = r - 1.0 + 2.0 * i / 200.0;
                worst = std::max(worst, std::abs(j_tilde(k, r, rho) - j_star(k, r - rho)));
            }
            constants.push_back(worst * r);
            EXPECT_EQ(j_tilde(k, r, r + 1.2), 0.0);
            EXPECT_EQ(j_star(k, 1.2), 0.0);
        }
        for (std::size_t i = 1; i < constants.size(); ++i) {
            EXPECT_GT(constants[i], 0.0);
            EXPECT_LT(constants[i] / constants[i - 1], 1.5);
            EXPECT_GT(constants[i] / constants[i - 1], 0.67);
        }
    }
}

TEST(Kernel, FatTailJStarDecayRate)
{
    for (int n : {2, 3}) {
        for (double beta : {n + 0.5, n + 0.8, n + 1.0}) {
            const auto k = RadialKernel::fat_tail(n, beta);
            double lo = 1e300;
            double hi = 0.0;
            for (double rho = 10.0; rho <= 1000.0; rho *= 1.5) {
                const double v = j_star(k, rho) * std::pow(rho, beta + 1 - n);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            EXPECT_GT(lo, 0.0);
            EXPECT_LT(hi / lo, 1.5);
        }
    }
}

TEST(Kernel, ExteriorMassMatchesRowIntegral)
{
    // T(r, h) = 1 - int_0^h J~(r, rho) drho, checked against Simpson on j_tilde
    for (const auto& k : {disc(), ball()}) {
        for (double r : {0.3, 2.0, 5.5}) {
            for (double h : {r + 0.1, r + 0.5, r + 0.95}) {
                std::vector<double> breaks{std::max(0.0, r - 1.0)};
                if (r < 1.0 && 1.0 - r < h) {
                    breaks.push_back(1.0 - r);
                }
                breaks.push_back(h);
                double inside = 0.0;
                for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
                    inside += oracle::simpson_cos([&](double rho) { return j_tilde(k, r, rho); },
                                                  breaks[i], breaks[i + 1], 1e-11);
                }
                EXPECT_NEAR(exterior_mass(k, r, h), 1.0 - inside, 1e-7) << r << " " << h;
            }
        }
    }
}

TEST(Kernel, TailMassExamples)
{
    EXPECT_NEAR(exterior_mass(disc(), 3.0, 4.5), 0.0, 1e-14);
    const double edge = exterior_mass(disc(), 40.0, 40.0);
    EXPECT_GT(edge, 0.0);
    EXPECT_LT(edge, 1.0);
    EXPECT_NEAR(edge, 0.5, 0.02);
    EXPECT_NEAR(exterior_mass(disc(), 0.0, 0.0), 1.0, 1e-12);
    EXPECT_NEAR(exterior_mass(RadialKernel::fat_tail(2, 2.5), 0.0, 0.0), 1.0, 1e-9);
}

TEST(Kernel, MomentIdentity)
{
    const auto d2 = moment_identity_check(disc());
    EXPECT_NEAR(d2.lhs, 2.0 / (3.0 * pi), 1e-6 * 2.0 / (3.0 * pi));
    EXPECT_NEAR(d2.rhs, 2.0 / (3.0 * pi), 1e-12);
    EXPECT_LT(d2.rel_err, 1e-6);
    const auto d3 = moment_identity_check(ball());
    // (3/4) int_0^1 l (1 - l^2) dl = 3/16
    EXPECT_NEAR(d3.lhs, 0.1875, 1e-6 * 0.1875);
    EXPECT_LT(d3.rel_err, 1e-6);
    const auto fat = moment_identity_check(RadialKernel::fat_tail(2, 3.5));
    EXPECT_LT(fat.rel_err, 1e-6);
    EXPECT_THROW(moment_identity_check(RadialKernel::fat_tail(2, 2.5)), DivergentMomentError);
}

TEST(Kernel, FluxApproachesFirstMomentOfJStar)
{
    const double target = 2.0 / (3.0 * pi);
    const double f50 = boundary_flux(disc(), 50.0);
    EXPECT_LT(std::abs(f50 - target) / target, 0.05);
    // the finite-h value approaches from below as curvature decays
    EXPECT_LT(std::abs(boundary_flux(disc(), 200.0) - target), std::abs(f50 - target) + 1e-12);
}
