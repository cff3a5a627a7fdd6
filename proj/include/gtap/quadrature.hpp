#pragma once

#include <functional>
#include <vector>

namespace gtap {

// Nodes and weights with sum_k w_k f(x_k) ~ E f(g) over a standard Gaussian g.
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

const GaussRule& gauss_hermite(int order);
// Nodes and weights for the integral over [a, b].
GaussRule gauss_legendre(int order, double a, double b);

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double abs_tol,
                          double rel_tol = 1e-12);
// E f(mean + sd g) for bounded f by adaptive quadrature against the Gaussian density
double gaussian_expectation(const std::function<double(double)>& f, double mean, double sd, double abs_tol = 1e-14);

}  // namespace gtap
