#include "gtap/cascades.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

using namespace gtap;
using doctest::Approx;

namespace {

double log2cosh(double x) { return std::log(2.0 * std::cosh(x)); }

}  // namespace

TEST_CASE("cascade weights")
{
    const std::vector<double> one{0.5};
    const CascadeSample c = sample_cascade(one, 2000, 7);
    const std::vector<double> w = c.leaf_weights();
    CHECK(w.size() == 2000);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == Approx(1.0).epsilon(1e-12));
    for (std::size_t k = 1; k < w.size(); ++k)
        CHECK(w[k] < w[k - 1]);
    CHECK(c.coverage() > 0.9);
    CHECK(c.coverage() <= 1.0);

    const CascadeSample d = sample_cascade(one, 2000, 7), e = sample_cascade(one, 2000, 8);
    CHECK(d.leaf_weights() == w);
    CHECK(e.leaf_weights() != w);

    const std::vector<double> two{0.3, 0.7};
    const CascadeSample t = sample_cascade(two, 40, 3);
    const std::vector<double> v = t.leaf_weights();
    CHECK(v.size() == 1600);
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == Approx(1.0).epsilon(1e-12));
    for (double x : v)
        CHECK(x > 0.0);

    CHECK_THROWS_AS(sample_cascade(one, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_cascade(std::vector<double>{0.6, 0.4}, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_cascade(std::vector<double>{1.0}, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_cascade(std::vector<double>{0.1, 0.2, 0.3}, 300, 1), std::invalid_argument);
}

TEST_CASE("weights flatten as the parameter approaches one")
{
    const double top_low = sample_cascade(std::vector<double>{0.2}, 2000, 5).leaf_weights()[0];
    const double top_high = sample_cascade(std::vector<double>{0.95}, 2000, 5).leaf_weights()[0];
    CHECK(top_high < top_low);
}

TEST_CASE("tree levels")
{
    const OrderParameter z({0.0, 0.2, 0.5, 0.8, 1.0}, {0.0, 0.3, 0.6, 1.0});
    const TreeLevels tl = tree_levels(z, [](double s) { return s; });
    CHECK(tl.root_var == Approx(0.2));
    REQUIRE(tl.params.size() == 2);
    CHECK(tl.level_var[0] == Approx(0.3));
    CHECK(tl.level_var[1] == Approx(0.3));
    CHECK(tl.leaf_var == Approx(0.2));

    const OrderParameter merged({0.0, 0.5, 1.0}, {0.4, 0.4});
    CHECK(tree_levels(merged, [](double s) { return s; }).params.size() == 1);
    CHECK_THROWS_AS(tree_levels(merged, [](double s) { return -s; }), std::invalid_argument);
}

TEST_CASE("tree field covariance")
{
    const OrderParameter z({0.0, 0.2, 0.5, 0.8, 1.0}, {0.0, 0.3, 0.6, 1.0});
    const TreeLevels tl = tree_levels(z, [](double s) { return s; });
    const CascadeSample c = sample_cascade(tl.params, 3, 1);
    const int draws = 20000;
    // leaf 0 paired with itself, a sibling and a cousin
    const int other[3] = {0, 1, 3};
    const double expected[3] = {1.0, 0.5, 0.2};
    double sum[3] = {}, sq[3] = {};
    for (int d = 0; d < draws; ++d) {
        const std::vector<double> g = sample_tree_field(c, tl, 100 + d);
        REQUIRE(g.size() == 9);
        for (int k = 0; k < 3; ++k) {
            const double x = g[0] * g[other[k]];
            sum[k] += x;
            sq[k] += x * x;
        }
    }
    for (int k = 0; k < 3; ++k) {
        const double mean = sum[k] / draws;
        const double se = std::sqrt((sq[k] / draws - mean * mean) / draws);
        CHECK(std::abs(mean - expected[k]) <= 3.0 * se);
    }
    CHECK(sample_tree_field(c, tl, 5) == sample_tree_field(c, tl, 5));
}

TEST_CASE("zero field variance collapses the cascade")
{
    const ShiftedModel flat(MixedModel::zero(), 0.2);
    const OrderParameter z({0.0, 0.3, 0.8}, {0.4, 0.7});
    const std::vector<double> m{0.3, -0.6, 0.0, 0.9};
    const double lambda = 0.7;
    auto field = [](double a) { return 0.5 * a - 0.2 * a * a; };
    double exact = 0.0;
    for (double a : m) {
        const double y = lambda * a + field(a);
        exact += -a * y + log2cosh(y);
    }
    exact /= m.size();
    CascadeConfig cfg;
    cfg.branching = 50;
    cfg.draws = 3;
    cfg.min_coverage = 0.0;
    const McEstimate e = psi_full_mc(flat, z, m, lambda, field, cfg);
    CHECK(e.mean == Approx(exact).epsilon(1e-12));
    CHECK(e.se <= 1e-12);
    CHECK(psi_pde(flat, z, m, lambda, field) == Approx(exact).epsilon(1e-10));
}

TEST_CASE("cascade estimate matches the PDE at the origin")
{
    const ShiftedModel model(MixedModel({0.0, 0.6}), 0.3);
    const OrderParameter z({0.0, 0.35, 0.7}, {0.5, 1.0});
    const std::vector<double> m{0.0, 0.0};
    auto none = [](double) { return 0.0; };
    CascadeConfig cfg;
    cfg.draws = 60;
    const McEstimate e = psi_full_mc(model, z, m, 0.0, none, cfg);
    const double pde = psi_pde(model, z, m, 0.0, none);
    CHECK(std::abs(e.mean - pde) <= 3.0 * e.se);
    CHECK(e.se < 0.05);
}

TEST_CASE("cascade estimate matches the PDE integral")
{
    const ShiftedModel model(MixedModel({0.2, 0.5, 0.3}), 0.25);
    const OrderParameter z({0.0, 0.15, 0.45, 0.75}, {0.0, 0.5, 1.0});
    const std::vector<double> m{0.3, -0.5, 0.6, 0.1};
    auto field = [](double a) { return 0.2 * a * a * a; };
    CascadeConfig cfg;
    cfg.draws = 60;
    cfg.seed = 11;
    const McEstimate e = psi_full_mc(model, z, m, 0.4, field, cfg);
    const double pde = psi_pde(model, z, m, 0.4, field);
    CHECK(std::abs(e.mean - pde) <= 3.0 * e.se);
    CHECK(psi_full_mc(model, z, m, 0.4, field, cfg).mean == e.mean);
}

TEST_CASE("truncation diagnostics")
{
    const ShiftedModel model(MixedModel({0.0, 0.5}), 0.0);
    const OrderParameter z({0.0, 1.0}, {0.7});
    const std::vector<double> m{0.2, -0.4};
    auto none = [](double) { return 0.0; };
    CascadeConfig cfg;
    cfg.branching = 2;
    cfg.draws = 4;
    cfg.min_coverage = 0.999;
    CHECK_THROWS_AS(psi_full_mc(model, z, m, 0.0, none, cfg), std::runtime_error);

    cfg.min_coverage = 0.0;
    cfg.draws = 200;
    cfg.branching = 5;
    const McEstimate small = psi_full_mc(model, z, m, 0.0, none, cfg);
    cfg.branching = 500;
    const McEstimate large = psi_full_mc(model, z, m, 0.0, none, cfg);
    CHECK(small.mean <= large.mean + 3.0 * std::hypot(small.se, large.se));
}

TEST_CASE("upsilon closed form and estimate")
{
    const MixedModel square({0.0, 1.0});
    const OrderParameter z({0.0, 0.4, 1.0}, {0.0, 0.5});
    CHECK(upsilon(square, z) == Approx(0.21).epsilon(1e-12));
    CHECK(upsilon(square, OrderParameter::constant(0.0, 1.0, 0.0)) == 0.0);

    CascadeConfig cfg;
    cfg.draws = 100;
    const McEstimate e = upsilon_mc(square, z, cfg);
    CHECK(std::abs(e.mean - 0.21) <= 3.0 * e.se);

    const MixedModel mixed({0.1, 0.4, 0.3});
    const OrderParameter w({0.0, 0.3, 0.7, 1.0}, {0.0, 0.5, 1.0});
    const McEstimate f = upsilon_mc(mixed, w, cfg);
    CHECK(std::abs(f.mean - upsilon(mixed, w)) <= 3.0 * f.se);
}
