#include "gtap/rs_analysis.hpp"
#include "gtap/tap_core.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace gtap;
using doctest::Approx;

namespace {

const MixedModel mixed({0.0, 2.0, 0.5});
const OrderParameter zeta({0.3, 0.55, 0.8, 1.0}, {0.2, 0.6, 0.9});

double log2cosh(double x) { return std::abs(x) + std::log1p(std::exp(-2.0 * std::abs(x))); }

}  // namespace

TEST_CASE("concave conjugate at the center and the edges")
{
    const PDESolution sol = solve(mixed, zeta, Boundary::original());
    const Conjugate c0 = lambda_conj(sol, 0.0);
    CHECK(std::abs(c0.x_star) <= 1e-10);
    CHECK(std::abs(c0.value - sol.phi_node(0, 0.0)) <= 1e-8);
    const double half = 0.5 * sol.zeta_clock_integral();
    for (double a : {-1.0, 1.0}) {
        const Conjugate c = lambda_conj(sol, a);
        CHECK(c.boundary);
        CHECK(std::isinf(c.x_star));
        CHECK(std::abs(c.value - half) <= 1e-6);
    }
    CHECK(std::abs(lambda_conj(sol, 1.0 - 1e-7).value - half) <= 1e-5);
}

TEST_CASE("concave conjugate is even and concave")
{
    const PDESolution sol = solve(mixed, zeta, Boundary::original());
    std::vector<double> vals;
    for (int k = -18; k <= 18; ++k) {
        const double a = 0.05 * k;
        vals.push_back(lambda_conj(sol, a).value);
        CHECK(std::abs(lambda_conj(sol, a).value - lambda_conj(sol, -a).value) <= 1e-10);
    }
    for (std::size_t k = 1; k + 1 < vals.size(); ++k)
        CHECK(vals[k + 1] - 2.0 * vals[k] + vals[k - 1] <= 1e-8);
    const double I = sol.zeta_clock_integral();
    const double mid = lambda_conj(sol, 0.5).value - 0.125 * I;
    const double near_edge = lambda_conj(sol, 0.99).value - 0.5 * 0.99 * 0.99 * I;
    CHECK(mid >= 0.0);
    CHECK(near_edge >= 0.0);
    CHECK(near_edge < mid);
}

TEST_CASE("concave conjugate against dense grid minimization")
{
    const MixedModel sk({0.0, 1.0});
    const double q = 0.2, a = 0.5;
    const PDESolution sol = solve(sk, OrderParameter::constant(q, 1.0, 0.0), Boundary::original());
    double best = 1e300;
    for (double x = -3.0; x <= 3.0; x += 1e-4)
        best = std::min(best, sol.phi_node(0, x) - a * x);
    CHECK(lambda_conj(sol, a).value == Approx(best).epsilon(1e-8));
}

TEST_CASE("psi and the effective field")
{
    const double q = zeta.lo();
    CHECK(std::abs(psi(mixed, q, 0.0, zeta)) <= 1e-10);
    const OrderParameter flat = OrderParameter::constant(q, 1.0, 0.0);
    const PDESolution fs = solve(mixed, flat, Boundary::original());
    CHECK(psi(fs, 0.4) == Approx(lambda_conj(fs, 0.4).x_star).epsilon(1e-12));

    const ShiftedModel sh = shift(mixed, q);
    const EffectiveField v = effective_field(sh, zeta.translated(q));
    CHECK(std::abs(v(0.0)) <= 1e-10);
    double prev = -1.0;
    for (int k = 0; k < 10; ++k) {
        const double a = 0.1 * k;
        const double f = v(a);
        CHECK(f > prev);
        prev = f;
        CHECK(std::abs(v.band_solution(a).phi_x_node(0, f)) <= 1e-8);
        if (k > 0)
            CHECK(std::abs(f - psi(mixed, q, a, zeta)) <= 1e-8);
    }
    const EffectiveField rs = effective_field(sh, OrderParameter::constant(0.0, sh.length(), 1.0));
    for (double a : {0.0, 0.2, 0.5, 0.8, 0.95})
        CHECK(std::abs(rs(a) - v_rs(sh, a)) <= 1e-8);
}

TEST_CASE("TAP functional at a fixed order parameter")
{
    const DiscreteMeasure one = DiscreteMeasure::dirac(0, 1, 1.0);
    CHECK(tap_with_zeta(mixed, one, OrderParameter::constant(0, 1, 0.4)) == 0.0);
    const OrderParameter z01({0.0, 0.4, 1.0}, {0.3, 0.8});
    const DiscreteMeasure zero = DiscreteMeasure::dirac(0, 1, 0.0);
    CHECK(tap_with_zeta(mixed, zero, z01) == Approx(parisi_functional(mixed, z01)).epsilon(1e-12));
    const DiscreteMeasure sym(-1, 1, {{-0.5, 0.25}, {0.5, 0.25}, {0.2, 0.5}});
    const DiscreteMeasure folded(0, 1, {{0.5, 0.5}, {0.2, 0.5}});
    const OrderParameter zq({0.0, 0.5, 1.0}, {0.1, 0.6});
    CHECK(tap_with_zeta(mixed, sym, zq) == Approx(tap_with_zeta(mixed, folded, zq)).epsilon(1e-12));
}

TEST_CASE("band functional special cases")
{
    const DiscreteMeasure one = DiscreteMeasure::dirac(0, 1, 1.0);
    const ShiftedModel full = shift(mixed, 1.0);
    CHECK(band_functional(full, one, [](double) { return 0.0; }, 0.0, OrderParameter({0.0}, {})) == 0.0);

    const double q = 0.0;
    const ShiftedModel sh = shift(mixed, q);
    const OrderParameter flat = OrderParameter::constant(0.0, 1.0, 0.0);
    const DiscreteMeasure zero = DiscreteMeasure::dirac(0, 1, 0.0);
    const double val = band_functional(sh, zero, [](double) { return 0.0; }, 0.0, flat);
    const double sd = std::sqrt(sh.xi_prime(1.0));
    double oracle = 0.0;
    const int n = 8000;
    for (int k = 0; k <= n; ++k) {
        const double g = -10.0 + 20.0 * k / n;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        oracle += w * log2cosh(sd * g) * std::exp(-0.5 * g * g);
    }
    oracle *= 20.0 / n / 3.0 / std::sqrt(2.0 * M_PI);
    CHECK(val == Approx(oracle).epsilon(1e-9));

    const DiscreteMeasure mu(0, 1, {{0.2, 0.3}, {0.6, 0.5}, {1.0, 0.2}});
    const double qm = mu.moment(2);
    const ShiftedModel sm = shift(mixed, qm);
    const OrderParameter zb({0.0, 0.2, 1.0 - qm}, {0.3, 0.7});
    const EffectiveField v = effective_field(sm, zb);
    const double bar = band_functional(sm, mu, [&](double a) { return v(a); }, 0.0, zb);
    const OrderParameter zfull({qm, qm + 0.2, 1.0}, {0.3, 0.7});
    CHECK(bar == Approx(tap_with_zeta(mixed, mu, zfull)).epsilon(1e-9));
}

TEST_CASE("directional derivative")
{
    const DiscreteMeasure mu(0, 1, {{0.1, 0.4}, {0.5, 0.4}, {0.8, 0.2}});
    const double q = mu.moment(2);
    const ShiftedModel sh = shift(mixed, q);
    const double L = sh.length();
    const OrderParameter z0({0.0, 0.3 * L, 0.7 * L, L}, {0.2, 0.5, 0.8});
    const OrderParameter z1({0.0, 0.5 * L, L}, {0.4, 0.6});
    const auto v0 = [&](double a) { return v_rs(sh, a); };
    const auto v1 = [&](double a) { return v_rs(sh, a) + 0.3 * a * (1.0 - a); };
    CHECK(directional_derivative(sh, mu, v0, z0, v0, z0) == Approx(0.0));

    const double d = directional_derivative(sh, mu, v0, z0, v1, z1);
    auto along = [&](double b) {
        std::vector<double> nodes{0.0, 0.3 * L, 0.5 * L, 0.7 * L, L};
        std::vector<double> lev;
        for (std::size_t p = 0; p + 1 < nodes.size(); ++p) {
            const double s = 0.5 * (nodes[p] + nodes[p + 1]);
            lev.push_back((1 - b) * z0(s) + b * z1(s));
        }
        return band_functional(sh, mu, [&](double a) { return (1 - b) * v0(a) + b * v1(a); }, 0.0,
                               OrderParameter(nodes, lev));
    };
    const double h = 1e-4;
    const double fd = (-3.0 * along(0.0) + 4.0 * along(h) - along(2 * h)) / (2 * h);
    CHECK(d == Approx(fd).epsilon(1e-5));

    const OrderParameter rs = OrderParameter::constant(0.0, L, 1.0);
    const OrderParameter nu({0.0, 0.25 * L, 0.6 * L, L}, {0.2, 0.5, 0.9});
    const double drs = directional_derivative(sh, mu, v0, rs, v0, nu);
    double stieltjes = 0.0, prev = 0.0;
    for (std::size_t p = 0; p < nu.cells(); ++p) {
        stieltjes += (nu.levels()[p] - prev) * big_gamma(sh, mu, nu.nodes()[p]);
        prev = nu.levels()[p];
    }
    stieltjes += (1.0 - prev) * big_gamma(sh, mu, L);
    CHECK(drs == Approx(-0.5 * stieltjes).epsilon(1e-6));
}

TEST_CASE("directional derivative by Monte Carlo")
{
    const DiscreteMeasure mu(0, 1, {{0.3, 0.5}, {0.7, 0.5}});
    const double q = mu.moment(2);
    const ShiftedModel sh = shift(mixed, q);
    const double L = sh.length();
    const OrderParameter z0({0.0, 0.5 * L, L}, {0.3, 0.8});
    const OrderParameter z1({0.0, 0.5 * L, L}, {0.5, 0.6});
    const auto v = [&](double a) { return v_rs(sh, a); };
    const double exact = directional_derivative(sh, mu, v, z0, v, z1);
    const McEstimate mc = directional_derivative_mc(sh, mu, v, z0, v, z1, 4000, 3);
    CHECK(std::abs(mc.mean - exact) <= 3.0 * mc.se + 1e-3);
}

TEST_CASE("TAP correction: trivial and replica symmetric cases")
{
    const TapResult one = tap_correction(mixed, DiscreteMeasure::dirac(0, 1, 1.0), 8);
    CHECK(one.value == 0.0);

    const MixedModel sk = MixedModel::sk(0.6);
    const DiscreteMeasure mu(0, 1, {{0.2, 0.5}, {0.5, 0.5}});
    const TapResult r = tap_correction(sk, mu, 8);
    CHECK(std::abs(r.value - classical_tap(sk, mu)) <= 1e-6);
    const OrderParameter rs = OrderParameter::constant(r.q, 1.0, 1.0);
    CHECK(d1(r.minimizer_zeta, rs) <= 1e-3);
    CHECK(std::abs(r.representation_gap) <= 1e-6);
}

TEST_CASE("TAP correction: replica symmetry breaking instance")
{
    const DiscreteMeasure mu(0, 1, {{0.05, 0.4}, {0.2, 0.3}, {0.4, 0.2}, {1.0, 0.1}});
    TapConfig cfg;
    cfg.r_atoms = 8;
    const TapResult r = tap_correction(mixed, mu, cfg);
    CHECK(r.converged);
    CHECK(std::abs(r.representation_gap) <= 1e-4);
    CHECK(r.value <= r.best_evaluated + 1e-15);
    CHECK(r.value <= tap_with_zeta(mixed, mu, OrderParameter::constant(r.q, 1.0, 1.0)) + 1e-12);
    CHECK(r.value <= tap_with_zeta(mixed, mu, OrderParameter::constant(r.q, 1.0, 0.0)) + 1e-12);
    CHECK(r.support_offset <= (1.0 - r.q) / cfg.r_atoms + 1e-12);
    CHECK(r.value < classical_tap(mixed, mu) - 1e-4);
    REQUIRE(!r.certificate.first.empty());
    CHECK(std::abs(r.certificate.first.front()) <= 1e-8);

    cfg.init_seed = 9;
    const TapResult other = tap_correction(mixed, mu, cfg);
    CHECK(std::abs(other.value - r.value) <= 1e-6);
    CHECK(d1(other.minimizer_zeta, r.minimizer_zeta) <= 1e-3);

    const DiscreteMeasure nearby(0, 1, {{0.05, 0.4}, {0.2025, 0.3}, {0.4, 0.2}, {1.0, 0.1}});
    cfg.init_seed = 0;
    cfg.cross_check = false;
    CHECK(d1(nearby, mu) <= 1e-3);
    CHECK(std::abs(tap_correction(mixed, nearby, cfg).value - r.value) < 1e-2);

    const ShiftedModel sh = shift(mixed, r.q);
    const TapCertificate rs = optimality_check(sh, mu, OrderParameter::constant(0.0, sh.length(), 1.0));
    const TapCertificate bad = optimality_check(sh, mu, OrderParameter({0.0, 0.5 * sh.length(), sh.length()}, {0.0, 0.5}));
    CHECK(std::max(rs.first_sup, bad.first_sup) > 10.0 * r.certificate.first_sup);
}

TEST_CASE("fixed point of the band minimization")
{
    const DiscreteMeasure mu(0, 1, {{0.1, 0.5}, {0.45, 0.3}, {0.9, 0.2}});
    TapConfig cfg;
    cfg.r_atoms = 6;
    const TapResult r = tap_correction(mixed, mu, cfg);
    const ShiftedModel sh = shift(mixed, r.q);
    const OrderParameter zb = r.minimizer_zeta.translated(r.q);
    const EffectiveField v = effective_field(sh, zb);
    const BandMinimum m = band_minimize(sh, mu, [&](double a) { return v(a); }, cfg);
    CHECK(std::abs(m.lambda) <= 1e-3);
    CHECK(d1(m.zeta, zb) <= 1e-2);
    CHECK(m.value == Approx(r.value).epsilon(1e-6));
}
