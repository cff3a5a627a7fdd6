#include "gtap/quadrature.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <stdexcept>

namespace gtap {

namespace {

struct FixedDeleter {
    void operator()(gsl_integration_fixed_workspace* w) const { gsl_integration_fixed_free(w); }
};

GaussRule fixed_rule(const gsl_integration_fixed_type* type, int order, double a, double b)
{
    if (order < 1)
        throw std::invalid_argument("quadrature order must be positive");
    std::unique_ptr<gsl_integration_fixed_workspace, FixedDeleter> ws(
        gsl_integration_fixed_alloc(type, static_cast<std::size_t>(order), a, b, 0.0, 0.0));
    if (!ws)
        throw std::runtime_error("quadrature rule allocation failed");
    const double* x = gsl_integration_fixed_nodes(ws.get());
    const double* w = gsl_integration_fixed_weights(ws.get());
    GaussRule r;
    r.x.assign(x, x + order);
    r.w.assign(w, w + order);
    return r;
}

}  // namespace

const GaussRule& gauss_hermite(int order)
{
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it != cache.end())
        return it->second;
    // GSL weight exp(-x^2); rescale to the standard normal density
    GaussRule r = fixed_rule(gsl_integration_fixed_hermite, order, 0.0, 1.0);
    double total = 0.0;
    for (int k = 0; k < order; ++k) {
        r.x[k] *= std::sqrt(2.0);
        total += r.w[k];
    }
    for (double& w : r.w)
        w /= total;
    // symmetrize against eigen-solver roundoff so even integrands stay even
    for (int k = 0; k < order / 2; ++k) {
        int j = order - 1 - k;
        double x = 0.5 * (r.x[j] - r.x[k]);
        double w = 0.5 * (r.w[j] + r.w[k]);
        r.x[k] = -x;
        r.x[j] = x;
        r.w[k] = r.w[j] = w;
    }
    if (order % 2 == 1)
        r.x[order / 2] = 0.0;
    return cache.emplace(order, std::move(r)).first->second;
}

GaussRule gauss_legendre(int order, double a, double b)
{
    return fixed_rule(gsl_integration_fixed_legendre, order, a, b);
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double abs_tol,
                          double rel_tol)
{
    if (b <= a)
        return 0.0;
    struct Ctx {
        const std::function<double(double)>* f;
    } ctx{&f};
    gsl_function F;
    F.function = [](double x, void* p) { return (*static_cast<Ctx*>(p)->f)(x); };
    F.params = &ctx;
    constexpr std::size_t limit = 1000;
    const std::unique_ptr<gsl_integration_workspace, decltype(&gsl_integration_workspace_free)> ws(
        gsl_integration_workspace_alloc(limit), &gsl_integration_workspace_free);
    if (!ws)
        throw std::bad_alloc();
    double result = 0.0, err = 0.0;
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    const int status =
        gsl_integration_qag(&F, a, b, abs_tol, rel_tol, limit, GSL_INTEG_GAUSS21, ws.get(), &result, &err);
    gsl_set_error_handler(old);
    if (status != GSL_SUCCESS && err > 10.0 * abs_tol)
        throw std::runtime_error("adaptive quadrature did not converge");
    return result;
}

double gaussian_expectation(const std::function<double(double)>& f, double mean, double sd, double abs_tol)
{
    if (sd <= 0.0)
        return f(mean);
    constexpr double width = 12.0;
    const double norm = 1.0 / std::sqrt(2.0 * M_PI);
    return integrate_adaptive([&](double g) { return f(mean + sd * g) * norm * std::exp(-0.5 * g * g); }, -width,
                              width, abs_tol, 1e-13);
}

}  // namespace gtap
