#include "gtap/measures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace gtap;
using doctest::Approx;

namespace {

DiscreteMeasure random_measure(std::mt19937_64& rng, int atoms)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Atom> a;
    double total = 0.0;
    for (int k = 0; k < atoms; ++k) {
        a.push_back({u(rng), 0.1 + u(rng)});
        total += a.back().w;
    }
    for (Atom& x : a)
        x.w /= total;
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < a.size(); ++k)
        sum += a[k].w;
    a.back().w = 1.0 - sum;
    return DiscreteMeasure(0.0, 1.0, a);
}

}  // namespace

TEST_CASE("d1 on simple pairs")
{
    const DiscreteMeasure zero = DiscreteMeasure::dirac(0, 1, 0.0), one = DiscreteMeasure::dirac(0, 1, 1.0);
    const DiscreteMeasure half(0, 1, {{0.0, 0.5}, {1.0, 0.5}});
    CHECK(d1(zero, one) == Approx(1.0).epsilon(1e-15));
    CHECK(d1(half, half) == 0.0);
    CHECK(d1(zero, half) == Approx(0.5).epsilon(1e-15));
    CHECK_THROWS(d1(zero, DiscreteMeasure::dirac(-1, 1, 0.0)));
}

TEST_CASE("moments")
{
    const DiscreteMeasure half(0, 1, {{0.0, 0.5}, {1.0, 0.5}});
    CHECK(moment(half, 2) == Approx(0.5).epsilon(1e-15));
    CHECK(moment(DiscreteMeasure::dirac(0, 1, 0.3), 2) == Approx(0.09).epsilon(1e-15));
    std::vector<Atom> grid;
    for (int k = 1; k <= 9; ++k)
        grid.push_back({0.1 * k, 1.0 / 9.0});
    CHECK(moment(DiscreteMeasure(0, 1, grid), 1) == Approx(0.5).epsilon(1e-14));
}

TEST_CASE("measure validation")
{
    CHECK_THROWS_AS(DiscreteMeasure(0, 1, {}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMeasure(0, 1, {{0.5, 0.7}}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMeasure(0, 1, {{1.5, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMeasure(0, 1, {{0.2, -0.5}, {0.3, 1.5}}), std::invalid_argument);
    const DiscreteMeasure merged(0, 1, {{0.4, 0.25}, {0.4, 0.75}});
    CHECK(merged.size() == 1);
}

TEST_CASE("empirical measures")
{
    const std::vector<double> ones(5, 1.0);
    const DiscreteMeasure e1 = empirical(ones);
    REQUIRE(e1.size() == 1);
    CHECK(e1.atoms()[0].x == 1.0);
    const std::vector<double> two{0.0, 1.0};
    const DiscreteMeasure e2 = empirical(two);
    REQUIRE(e2.size() == 2);
    CHECK(e2.atoms()[0].w == Approx(0.5));
    const std::vector<double> sym{-0.3, 0.3};
    const DiscreteMeasure f = empirical(sym, true);
    REQUIRE(f.size() == 1);
    CHECK(f.atoms()[0].x == Approx(0.3));
    CHECK(f.lo() == 0.0);
    CHECK_THROWS(empirical(std::vector<double>{}));
}

TEST_CASE("shift operator")
{
    const OrderParameter z({0.0, 0.6, 1.0}, {0.4, 1.0});
    const OrderParameter same = shift_theta(z, 0.0);
    CHECK(d1(same, z) == 0.0);
    const OrderParameter s = shift_theta(z, 0.5);
    CHECK(s.lo() == 0.0);
    CHECK(s.hi() == Approx(0.5));
    CHECK(s(0.05) == Approx(0.4));
    CHECK(s(0.15) == Approx(1.0));
    const OrderParameter atom_one({0.0, 1.0}, {0.0});
    const OrderParameter t = shift_theta(atom_one, 0.5);
    CHECK(t(0.0) == 0.0);
    CHECK(t(0.49) == 0.0);
    CHECK(t(0.5) == 1.0);
}

TEST_CASE("order parameter and measure round trip")
{
    const DiscreteMeasure m(0, 1, {{0.2, 0.3}, {0.5, 0.3}, {0.9, 0.4}});
    const OrderParameter z = OrderParameter::from_measure(m);
    CHECK(z(0.1) == 0.0);
    CHECK(z(0.3) == Approx(0.3));
    CHECK(z(0.95) == Approx(1.0));
    CHECK(d1(z.to_measure(), m) <= 1e-15);
    const OrderParameter c = OrderParameter({0.0, 0.3, 0.6, 1.0}, {0.2, 0.2, 0.7}).compressed();
    CHECK(c.cells() == 2);
    CHECK(z.integrate([](double s) { return s; }) == Approx(1.0 - m.moment(1)).epsilon(1e-14));
}

TEST_CASE("moment differences are controlled by d1")
{
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const DiscreteMeasure a = random_measure(rng, 1 + trial % 6), b = random_measure(rng, 1 + trial % 4);
        const double d = d1(a, b);
        for (int k = 1; k <= 4; ++k)
            CHECK(std::abs(moment(a, k) - moment(b, k)) <= k * d + 1e-14);
        const DiscreteMeasure c = random_measure(rng, 3);
        CHECK(d1(a, b) == Approx(d1(b, a)).epsilon(1e-14));
        CHECK(d1(a, c) <= d1(a, b) + d1(b, c) + 1e-14);
    }
}
