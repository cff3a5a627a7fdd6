#include "gtap/disorder.hpp"
#include "gtap/rs_analysis.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

using namespace gtap;
using doctest::Approx;

namespace {

std::vector<double> random_vec(int n, double scale, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> m(n);
    for (double& x : m)
        x = u(rng);
    return m;
}

const MixedModel mixed({0.3, 0.8, 0.4});

}  // namespace

TEST_CASE("sampling and energies")
{
    const DisorderSample z = sample(5, MixedModel::zero(), 3);
    const std::vector<double> m = random_vec(5, 1.0, 1);
    CHECK(z.energy(m) == 0.0);
    const DisorderSample a = sample(5, mixed, 42), b = sample(5, mixed, 42), c = sample(5, mixed, 43);
    CHECK(a.tensor(2) == b.tensor(2));
    CHECK(a.tensor(2) != c.tensor(2));
    CHECK(a.energy(m) == b.energy(m));
    CHECK_THROWS_AS(sample(DisorderSample::max_spins + 1, mixed, 1), std::invalid_argument);

    const std::vector<double> zero(5, 0.0);
    CHECK(a.energy(zero) == 0.0);
    const std::vector<double> g0 = a.gradient(zero);
    const double scale = std::sqrt(mixed.coeff(1));
    for (int i = 0; i < 5; ++i)
        CHECK(g0[i] == Approx(scale * a.tensor(1)[i]).epsilon(1e-14));

    const DisorderSample pure = sample(6, MixedModel({0.0, 0.0, 1.0}), 7);
    const std::vector<double> x = random_vec(6, 0.9, 2);
    std::vector<double> half(x);
    for (double& v : half)
        v *= 0.5;
    CHECK(pure.energy(half) == Approx(0.125 * pure.energy(x)).epsilon(1e-13));
}

TEST_CASE("gradient against finite differences")
{
    const DisorderSample s = sample(7, mixed, 11);
    const std::vector<double> m = random_vec(7, 0.8, 5);
    const std::vector<double> g = s.gradient(m);
    for (int i = 0; i < 7; ++i) {
        std::vector<double> p(m), q(m);
        const double h = 1e-5;
        p[i] += h;
        q[i] -= h;
        const double fd = (s.energy(p) - s.energy(q)) / (2 * h);
        CHECK(std::abs(g[i] - fd) <= 1e-8 * std::max(1.0, std::abs(g[i])));
    }
}

TEST_CASE("covariance matches the mixture")
{
    const int N = 4, draws = 10000;
    const std::vector<double> s1{1, 1, -1, 1}, s2{1, -1, -1, 1};
    double R = 0.0;
    for (int i = 0; i < N; ++i)
        R += s1[i] * s2[i] / N;
    double mean = 0.0, sq = 0.0;
    for (int d = 0; d < draws; ++d) {
        const DisorderSample s = sample(N, mixed, 1000 + d);
        const double v = s.energy(s1) * s.energy(s2);
        mean += v;
        sq += v * v;
    }
    mean /= draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    CHECK(std::abs(mean - N * mixed.xi(R)) <= 3.0 * se);
}

TEST_CASE("free energy by enumeration")
{
    CHECK(free_energy(sample(6, MixedModel::zero(), 1)) == Approx(std::log(2.0)).epsilon(1e-14));
    const MixedModel field({0.49});
    const DisorderSample one = sample(1, field, 9);
    const double g = 0.7 * one.tensor(1)[0];
    CHECK(free_energy(one) == Approx(std::log(2.0 * std::cosh(g))).epsilon(1e-14));
    const DisorderSample s = sample(10, mixed, 4);
    const Enumeration e(s);
    CHECK(free_energy(e) >= e.max_energy() / 10);
    CHECK(e.overlap(0, 0) == 1.0);
    CHECK(e.overlap(0, e.count() - 1) == -1.0);
}

TEST_CASE("band quantities")
{
    const DisorderSample s = sample(10, mixed, 21);
    const Enumeration e(s);
    BandSpec b;
    b.m = std::vector<double>(10, 0.0);
    CHECK(tap_Nn(e, s, b) == Approx(free_energy(e)).epsilon(1e-14));

    b.m = random_vec(10, 0.7, 3);
    const std::vector<std::size_t> members = band_members(e, b.m, b.eps);
    double direct = -std::numeric_limits<double>::infinity();
    {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c : members)
            top = std::max(top, e.energy(c));
        double sum = 0.0;
        for (std::size_t c : members)
            sum += std::exp(e.energy(c) - top);
        direct = (top + std::log(sum)) / 10 - s.energy(b.m) / 10;
    }
    CHECK(tap_Nn(e, s, b) == Approx(direct).epsilon(1e-13));

    b.eps = 1e-6;
    b.m = std::vector<double>(10, 0.3);
    b.m[0] = 0.31;
    CHECK(std::isinf(tap_Nn(e, s, b)));
    b.replicas = 4;
    CHECK_THROWS_AS(tap_Nn(e, s, b), std::invalid_argument);
}

TEST_CASE("bands are nonempty at the critical width")
{
    const int N = 12;
    const DisorderSample s = sample(N, MixedModel::zero(), 1);
    const Enumeration e(s);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> m = random_vec(N, 1.0, 500 + k);
        CHECK(!band_members(e, m, 2.0 / std::sqrt(N)).empty());
    }
}

TEST_CASE("exact chain of band bounds")
{
    const int N = 10;
    for (int d = 0; d < 5; ++d) {
        const DisorderSample s = sample(N, mixed, 300 + d);
        const Enumeration e(s);
        const double F = free_energy(e);
        for (int k = 0; k < 4; ++k) {
            BandSpec b;
            b.m = random_vec(N, 0.9, 50 * d + k);
            const double h = s.energy(b.m) / N;
            const double t1 = h + tap_Nn(e, s, b);
            b.replicas = 2;
            const double t2 = h + tap_Nn(e, s, b);
            CHECK(F >= t1);
            CHECK(t1 >= t2);
        }
    }
}

TEST_CASE("concentration experiment")
{
    BandSpec b;
    b.m = std::vector<double>(8, 0.0);
    b.replicas = 2;
    const ConcentrationReport z = concentration_experiment(MixedModel::zero(), 8, b, 5, 1);
    CHECK(z.sd == 0.0);
    CHECK(concentration_constant(mixed) == Approx(1.0 / (4.0 * std::max(4.0 * mixed.xi(1.0), 2.0 * mixed.xi_prime(1.0)))));
    CHECK(concentration_bound(mixed, 8, b, 0.1) ==
          Approx(std::min(2.0, 2.0 * std::exp(-8 * 0.01 * concentration_constant(mixed) / (0.5 + 0.4)))));

    const MixedModel sk = MixedModel::sk(1.0);
    b.replicas = 1;
    const ConcentrationReport r1 = concentration_experiment(sk, 8, b, 100, 5);
    b.replicas = 2;
    const ConcentrationReport r2 = concentration_experiment(sk, 8, b, 100, 5);
    const double se = r1.sd / std::sqrt(2.0 * 99);
    CHECK(r2.sd <= r1.sd + 3.0 * se);
    for (const TailCell& c : r2.cells)
        CHECK(c.empirical <= c.bound);
    std::ostringstream os;
    write_tail_csv(os, r2);
    CHECK(!os.str().empty());
}

TEST_CASE("TAP equations")
{
    const DisorderSample flat = sample(5, MixedModel::zero(), 2);
    const std::vector<double> zero(5, 0.0);
    const OrderParameter rs = OrderParameter::constant(0.0, 1.0, 1.0);
    CHECK(tap_equation_residual(flat, 0.0, rs, zero) == 0.0);
    const TapSolveResult r0 = solve_tap_equations(flat, 0.0, rs, zero);
    CHECK(r0.converged);
    CHECK(r0.residual == 0.0);

    const MixedModel model({0.0, 0.125}, 0.3);
    const DisorderSample s = sample(6, model, 8);
    const std::vector<double> m = random_vec(6, 0.6, 4);
    double q = 0.0;
    for (double x : m)
        q += x * x / 6;
    const std::vector<double> g = s.gradient(m);
    double expected = 0.0;
    for (int i = 0; i < 6; ++i)
        expected = std::max(expected,
                            std::abs(m[i] - std::tanh(g[i] - m[i] * model.xi_double_prime(q) * (1.0 - q))));
    CHECK(tap_equation_residual(s, q, OrderParameter::constant(q, 1.0, 1.0), m) == Approx(expected).epsilon(1e-8));

    const TapSolveResult c = solve_classical_tap(s, random_vec(6, 0.5, 1));
    REQUIRE(c.converged);
    double qc = 0.0;
    for (double x : c.m)
        qc += x * x / 6;
    const TapSolveResult r = solve_tap_equations(s, qc, OrderParameter::constant(qc, 1.0, 1.0), c.m);
    CHECK(r.converged);
    CHECK(r.residual <= 1e-6);
    CHECK(tap_equation_residual(s, qc, OrderParameter::constant(qc, 1.0, 1.0), r.m) <= 1e-6);
}

TEST_CASE("TAP gradient")
{
    TapConfig cfg;
    cfg.r_atoms = 6;
    const MixedModel sk = MixedModel::sk(1.5);
    const std::vector<double> zero(4, 0.0);
    const TapGradient g0 = grad_tap(sk, zero, cfg);
    for (double x : g0.formula)
        CHECK(std::abs(x) <= 1e-12);

    const std::vector<double> m{0.3, -0.5, 0.7, 0.1, -0.2, 0.45};
    const TapGradient g = grad_tap(sk, m, cfg);
    std::vector<double> v{0.2, 0.1, -0.3, 0.5, 0.4, 0.0};
    double vm = 0.0, mm = 0.0;
    for (int i = 0; i < 6; ++i) {
        vm += v[i] * m[i];
        mm += m[i] * m[i];
    }
    for (int i = 0; i < 6; ++i)
        v[i] -= vm / mm * m[i];
    double lhs = 0.0, rhs = 0.0;
    for (int i = 0; i < 6; ++i) {
        lhs += g.formula[i] * v[i];
        rhs += -psi(sk, g.tap.q, m[i], g.tap.minimizer_zeta) / 6 * v[i];
    }
    CHECK(lhs == Approx(rhs).epsilon(1e-7));

    std::vector<double> d{0.1, 0.3, -0.2, 0.05, 0.25, -0.15};
    const double h = 1e-3;
    std::vector<double> p(m), n(m);
    for (int i = 0; i < 6; ++i) {
        p[i] += h * d[i];
        n[i] -= h * d[i];
    }
    const double fd = (tap_of(sk, p, cfg) - tap_of(sk, n, cfg)) / (2 * h);
    double dot = 0.0;
    for (int i = 0; i < 6; ++i)
        dot += g.partition[i] * d[i];
    CHECK(std::abs(dot - fd) <= 1e-2 * std::abs(fd));
    CHECK_THROWS_AS(grad_tap(sk, std::vector<double>{1.0, 0.0}, cfg), std::domain_error);
}

TEST_CASE("TAP ascent")
{
    TapConfig cfg;
    cfg.r_atoms = 4;
    const DisorderSample flat = sample(4, MixedModel::zero(), 1);
    const std::vector<double> start{0.6, 0.1, -0.3, 0.2};
    double q = 0.0;
    for (double x : start)
        q += x * x / 4;
    const AscentResult a = tap_ascent(flat, q, 4, start, cfg);
    REQUIRE(a.trajectory.size() >= 2);
    for (std::size_t k = 1; k < a.trajectory.size(); ++k) {
        CHECK(a.trajectory[k].value >= a.trajectory[k - 1].value);
        const std::vector<double>& m = a.trajectory[k].m;
        CHECK(classical_tap(MixedModel::zero(), empirical(m, true)) == Approx(a.trajectory[k].value).epsilon(1e-8));
        double qq = 0.0;
        for (double x : m)
            qq += x * x / 4;
        CHECK(qq == Approx(q).epsilon(1e-12));
    }
    CHECK(a.free_energy == Approx(std::log(2.0)));
    CHECK(a.trajectory.back().value <= a.free_energy);
    std::ostringstream os;
    write_trajectory_csv(os, a);
    CHECK(os.str().rfind("step,value", 0) == 0);
}
