#include "gtap/tap_core.hpp"

#include "level_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

namespace gtap {

namespace {

struct Atoms {
    std::vector<double> a, w;
    double boundary_w = 0.0;
};

// |a|-folded atoms with the boundary mass split off
Atoms fold_atoms(const DiscreteMeasure& mu, double boundary_tol)
{
    Atoms out;
    const DiscreteMeasure folded = mu.folded();
    for (const Atom& at : folded.atoms()) {
        if (at.x >= 1.0 - boundary_tol)
            out.boundary_w += at.w;
        else {
            out.a.push_back(at.x);
            out.w.push_back(at.w);
        }
    }
    return out;
}

double field_bound(const MixedModel& model, double a_max)
{
    return std::atanh(std::min(std::abs(a_max), 1.0 - 1e-15)) + model.xi_prime(1.0) + 1.0;
}

SolverConfig with_margin(const SolverConfig& cfg, double margin)
{
    SolverConfig c = cfg;
    c.field_margin = std::max(c.field_margin, margin);
    return c;
}

double max_of(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

OrderParameter on_interval(const OrderParameter& zeta, double q)
{
    if (std::abs(zeta.lo() - q) < 1e-12)
        return zeta;
    if (zeta.lo() < q)
        return zeta.restricted(q);
    throw std::invalid_argument("order parameter does not cover [q,1]");
}

std::vector<double> theta_increments(const std::vector<double>& nodes, const std::function<double(double)>& theta)
{
    std::vector<double> d(nodes.size() - 1);
    for (std::size_t p = 0; p + 1 < nodes.size(); ++p)
        d[p] = theta(nodes[p + 1]) - theta(nodes[p]);
    return d;
}

std::vector<double> clock_metric(const std::vector<double>& nodes, const std::function<double(double)>& d)
{
    std::vector<double> m(nodes.size() - 1);
    for (std::size_t p = 0; p + 1 < nodes.size(); ++p)
        m[p] = std::max(d(nodes[p + 1]) - d(nodes[p]), 1e-12 * (nodes[p + 1] - nodes[p]));
    return m;
}

std::vector<double> initial_levels(std::size_t n, std::uint64_t seed)
{
    std::vector<double> x(n);
    if (seed == 0) {
        for (std::size_t p = 0; p < n; ++p)
            x[p] = (p + 0.5) / n;
        return x;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : x)
        v = u(rng);
    std::sort(x.begin(), x.end());
    return x;
}

double projected_step_norm(std::span<const double> x, std::span<const double> g, std::span<const double> metric)
{
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        d[i] = x[i] - g[i] / metric[i];
    detail::project_levels(d, metric);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s = std::max(s, std::abs(d[i] - x[i]));
    return s;
}

void project_unit_levels(std::span<double> x, std::span<const double> w) { detail::project_levels(x, w); }

// TAP(mu, zeta) on [q,1] through the original boundary and the conjugates
struct TapObjective {
    const MixedModel* model;
    SolverConfig cfg;
    std::vector<double> nodes;
    Atoms atoms;
    double q;
    double tol;
    std::vector<double> dtheta, dclock;

    mutable double best = std::numeric_limits<double>::infinity();
    mutable std::vector<double> best_x;
    mutable int evaluations = 0;

    TapObjective(const MixedModel& m, SolverConfig c, std::vector<double> n, Atoms at, double q_, double t)
        : model(&m), cfg(std::move(c)), nodes(std::move(n)), atoms(std::move(at)), q(q_), tol(t)
    {
        dtheta = theta_increments(nodes, [&](double s) { return model->theta(s); });
        dclock = theta_increments(nodes, [&](double s) { return model->xi_prime(s); });
    }

    double operator()(std::span<const double> levels, std::span<double> grad) const
    {
        const OrderParameter z(nodes, {levels.begin(), levels.end()});
        const bool want_grad = !grad.empty();
        const PDESolution sol = solve(*model, z, Boundary::original(), cfg, want_grad);
        std::vector<double> xs(atoms.a.size());
        double value = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            xs[k] = atoms.a[k] == 0.0 ? 0.0 : sol.solve_phi_x(0, atoms.a[k], tol);
            value -= atoms.w[k] * atoms.a[k] * xs[k];
        }
        double theta_sum = 0.0, clock_sum = 0.0;
        for (std::size_t p = 0; p < levels.size(); ++p) {
            theta_sum += levels[p] * dtheta[p];
            clock_sum += levels[p] * dclock[p];
        }
        value += 0.5 * atoms.boundary_w * clock_sum - 0.5 * theta_sum;
        if (want_grad) {
            const PointSensitivity ps = point_sensitivity(sol, xs, atoms.w);
            value += ps.value;
            for (std::size_t p = 0; p < levels.size(); ++p)
                grad[p] = ps.dlevels[p] + 0.5 * atoms.boundary_w * dclock[p] - 0.5 * dtheta[p];
        } else {
            for (std::size_t k = 0; k < xs.size(); ++k)
                value += atoms.w[k] * sol.phi_node(0, xs[k]);
        }
        ++evaluations;
        if (value < best) {
            best = value;
            best_x.assign(levels.begin(), levels.end());
        }
        return value;
    }
};

struct BandAtomResult {
    double value = 0.0;
    std::vector<double> dlevels, node_u2, node_uxx2;
    std::vector<double> fields, slopes;
};

// sum_a w_a Phi_{a,zeta}(0, x_a) with level gradient; x_a = v_zeta(a) when points is empty
BandAtomResult band_atoms(const ShiftedModel& model, const Atoms& atoms, const OrderParameter& zeta,
                          const SolverConfig& cfg, const std::vector<double>* points, double tol, bool want_grad)
{
    BandAtomResult out;
    out.dlevels.assign(zeta.cells(), 0.0);
    out.node_u2.assign(zeta.nodes().size(), 0.0);
    out.node_uxx2.assign(zeta.nodes().size(), 0.0);
    for (std::size_t k = 0; k < atoms.a.size(); ++k) {
        const double a = atoms.a[k];
        double margin = field_bound(model.base(), a);
        if (points)
            margin = std::max(margin, std::abs((*points)[k]) + 1.0);
        const PDESolution sol = solve(model, zeta, Boundary::band(a), with_margin(cfg, margin), want_grad);
        double x = 0.0;
        if (points)
            x = (*points)[k];
        else if (a != 0.0)
            x = sol.solve_phi_x(0, 0.0, tol);
        out.fields.push_back(x);
        out.slopes.push_back(sol.phi_x_node(0, x));
        if (want_grad) {
            const double xs[1] = {x};
            const double ws[1] = {atoms.w[k]};
            const PointSensitivity ps = point_sensitivity(sol, xs, ws);
            out.value += ps.value;
            for (std::size_t p = 0; p < out.dlevels.size(); ++p)
                out.dlevels[p] += ps.dlevels[p];
            for (std::size_t p = 0; p < out.node_u2.size(); ++p) {
                out.node_u2[p] += ps.node_u2[p];
                out.node_uxx2[p] += ps.node_uxx2[p];
            }
        } else {
            out.value += atoms.w[k] * sol.phi_node(0, x);
        }
    }
    return out;
}

double theta_penalty(const ShiftedModel& model, const OrderParameter& zeta)
{
    return 0.5 * zeta.integrate([&](double s) { return model.theta(s); });
}

struct BandObjective {
    const ShiftedModel* model;
    SolverConfig cfg;
    std::vector<double> nodes;
    Atoms atoms;
    double tol;
    std::vector<double> dtheta;

    BandObjective(const ShiftedModel& m, SolverConfig c, std::vector<double> n, Atoms at, double t)
        : model(&m), cfg(std::move(c)), nodes(std::move(n)), atoms(std::move(at)), tol(t)
    {
        dtheta = theta_increments(nodes, [&](double s) { return model->theta(s); });
    }

    double operator()(std::span<const double> levels, std::span<double> grad) const
    {
        const OrderParameter z(nodes, {levels.begin(), levels.end()});
        const BandAtomResult r = band_atoms(*model, atoms, z, cfg, nullptr, tol, true);
        double value = r.value;
        for (std::size_t p = 0; p < levels.size(); ++p) {
            value -= 0.5 * levels[p] * dtheta[p];
            grad[p] = r.dlevels[p] - 0.5 * dtheta[p];
        }
        return value;
    }
};

detail::SpgOptions spg_options(const TapConfig& cfg)
{
    detail::SpgOptions o;
    o.max_iter = cfg.max_iter;
    o.step_tol = cfg.step_tol;
    return o;
}

std::vector<double> support_nodes_mask(const OrderParameter& z)
{
    std::vector<double> mask(z.nodes().size(), 0.0);
    double prev = 0.0;
    for (std::size_t p = 0; p < z.cells(); ++p) {
        if (z.levels()[p] - prev > 1e-9)
            mask[p] = 1.0;
        prev = z.levels()[p];
    }
    if (1.0 - prev > 1e-9)
        mask.back() = 1.0;
    return mask;
}

TapCertificate certificate_from(const ShiftedModel& model, const OrderParameter& zeta, const BandAtomResult& r,
                                std::span<const double> grad)
{
    TapCertificate c;
    c.nodes = zeta.nodes();
    const std::vector<double> mask = support_nodes_mask(zeta);
    c.second_sup = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < c.nodes.size(); ++p) {
        const double s = c.nodes[p];
        c.first.push_back(r.node_u2[p] - s);
        c.second.push_back(model.xi_double_prime(s) * r.node_uxx2[p] - 1.0);
        if (mask[p] > 0.0) {
            c.first_sup = std::max(c.first_sup, std::abs(c.first.back()));
            c.second_sup = std::max(c.second_sup, c.second.back());
        }
    }
    if (!std::isfinite(c.second_sup))
        c.second_sup = 0.0;
    const std::vector<double> metric = clock_metric(zeta.nodes(), [&](double s) { return model.xi_prime(s); });
    c.cell_stationarity = projected_step_norm(zeta.levels(), grad, metric);
    return c;
}

double support_offset_of(const OrderParameter& z)
{
    for (std::size_t p = 0; p < z.cells(); ++p)
        if (z.levels()[p] > 1e-9)
            return z.nodes()[p] - z.lo();
    return z.hi() - z.lo();
}

struct BandSearch {
    BandRepresentation rep;
    int evaluations = 0;
};

BandSearch band_search(const ShiftedModel& shifted, const Atoms& atoms, std::vector<double> nodes,
                       std::vector<double> x0, const TapConfig& cfg)
{
    BandSearch out;
    BandObjective obj(shifted, cfg.solver, nodes, atoms, cfg.bisection_tol);
    const std::vector<double> metric = clock_metric(nodes, [&](double s) { return shifted.xi_prime(s); });
    const detail::SpgResult r = detail::spg_minimize(std::cref(obj), std::move(x0), metric, project_unit_levels, spg_options(cfg));
    out.rep.value = r.value;
    out.rep.zeta = OrderParameter(nodes, r.x);
    out.rep.projected_gradient = r.step_norm;
    out.rep.converged = r.converged;
    out.evaluations = r.evaluations;
    return out;
}

}  // namespace

Conjugate lambda_conj(const PDESolution& sol, double a, double boundary_tol, double tol)
{
    if (sol.boundary().kind != BoundaryKind::original)
        throw std::invalid_argument("conjugate needs an original-boundary solution");
    if (std::abs(a) > 1.0)
        throw std::domain_error("conjugate argument outside [-1,1]");
    Conjugate c;
    if (std::abs(a) >= 1.0 - boundary_tol) {
        c.boundary = true;
        c.x_star = std::copysign(std::numeric_limits<double>::infinity(), a);
        c.value = 0.5 * sol.zeta_clock_integral();
        return c;
    }
    c.x_star = a == 0.0 ? 0.0 : sol.solve_phi_x(0, a, tol);
    c.value = sol.phi_node(0, c.x_star) - a * c.x_star;
    return c;
}

Conjugate lambda_conj(const MixedModel& model, double q, double a, const OrderParameter& zeta, const SolverConfig& cfg)
{
    const OrderParameter z = on_interval(zeta, q);
    const PDESolution sol = solve(model, z, Boundary::original(), with_margin(cfg, field_bound(model, a)));
    return lambda_conj(sol, a);
}

double psi(const PDESolution& sol, double a, double tol)
{
    if (std::abs(a) >= 1.0)
        throw std::domain_error("psi needs |a| < 1");
    const Conjugate c = lambda_conj(sol, a, 0.0, tol);
    return c.x_star + a * sol.zeta_clock_integral();
}

double psi(const MixedModel& model, double q, double a, const OrderParameter& zeta, const SolverConfig& cfg)
{
    if (std::abs(a) >= 1.0)
        throw std::domain_error("psi needs |a| < 1");
    const OrderParameter z = on_interval(zeta, q);
    const PDESolution sol = solve(model, z, Boundary::original(), with_margin(cfg, field_bound(model, a)));
    return psi(sol, a);
}

EffectiveField::EffectiveField(ShiftedModel model, OrderParameter zeta, SolverConfig cfg, double tol)
    : model_(std::move(model)), zeta_(std::move(zeta)), cfg_(std::move(cfg)), tol_(tol)
{
    if (std::abs(zeta_.lo()) > 1e-12 || std::abs(zeta_.hi() - model_.length()) > 1e-12)
        throw std::invalid_argument("band order parameter must live on [0, 1-q]");
}

const EffectiveField::Entry& EffectiveField::entry(double a) const
{
    if (std::abs(a) >= 1.0)
        throw std::domain_error("effective field diverges at |a| = 1");
    std::lock_guard<std::mutex> lock(*mu_);
    auto it = cache_.find(a);
    if (it != cache_.end())
        return it->second;
    auto sol = std::make_shared<const PDESolution>(
        solve(model_, zeta_, Boundary::band(a), with_margin(cfg_, field_bound(model_.base(), a))));
    const double root = a == 0.0 ? 0.0 : sol->solve_phi_x(0, 0.0, tol_);
    return cache_.emplace(a, Entry{std::move(sol), root}).first->second;
}

double EffectiveField::operator()(double a) const { return entry(a).root; }

const PDESolution& EffectiveField::band_solution(double a) const { return *entry(a).sol; }

EffectiveField effective_field(const ShiftedModel& model, const OrderParameter& zeta_band, const SolverConfig& cfg)
{
    return EffectiveField(model, zeta_band, cfg);
}

double tap_with_zeta(const MixedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta,
                     const SolverConfig& cfg)
{
    const double q = mu.moment(2);
    if (q >= 1.0 - 1e-12)
        return 0.0;
    const OrderParameter z = on_interval(zeta, q);
    Atoms atoms = fold_atoms(mu, 1e-9);
    const TapObjective obj(model, with_margin(cfg, field_bound(model, max_of(atoms.a))), z.nodes(),
                           std::move(atoms), q, 1e-10);
    return obj(z.levels(), {});
}

TapResult tap_correction(const MixedModel& model, const DiscreteMeasure& mu, const TapConfig& cfg)
{
    TapResult res;
    res.q = mu.moment(2);
    if (res.q >= 1.0 - 1e-12) {
        res.minimizer_zeta = OrderParameter({1.0}, {});
        res.converged = true;
        res.evaluations = 0;
        return res;
    }
    const double q = res.q;
    Atoms atoms = fold_atoms(mu, cfg.boundary_tol);
    const SolverConfig solver = with_margin(cfg.solver, field_bound(model, max_of(atoms.a)));
    const std::vector<double> nodes = detail::partition_nodes(q, 1.0, cfg.r_atoms);
    const TapObjective obj(model, solver, nodes, atoms, q, cfg.bisection_tol);
    const std::vector<double> metric = clock_metric(nodes, [&](double s) { return model.xi_prime(s); });

    const detail::SpgResult r = detail::spg_minimize(std::cref(obj), initial_levels(nodes.size() - 1, cfg.init_seed), metric,
                                                     project_unit_levels, spg_options(cfg));
    res.value = obj.best;
    res.best_evaluated = obj.best;
    res.minimizer_zeta = OrderParameter(nodes, obj.best_x);
    res.projected_gradient = r.step_norm;
    res.iterations = r.iterations;
    res.evaluations = obj.evaluations;
    res.converged = r.converged;
    res.support_offset = support_offset_of(res.minimizer_zeta);

    if (cfg.cross_check) {
        const ShiftedModel shifted = shift(model, q);
        const OrderParameter band = res.minimizer_zeta.translated(q);
        TapConfig warm = cfg;
        warm.step_tol = std::max(cfg.step_tol, 1e-7);
        warm.max_iter = std::min(cfg.max_iter, 60);
        const BandSearch bs = band_search(shifted, atoms, band.nodes(), band.levels(), warm);
        res.representation_value = bs.rep.value;
        res.representation_gap = std::abs(res.value - bs.rep.value);
        res.certificate = optimality_check(shifted, mu, band, cfg.solver);
    }
    return res;
}

TapResult tap_correction(const MixedModel& model, const DiscreteMeasure& mu, int r_atoms)
{
    TapConfig cfg;
    cfg.r_atoms = r_atoms;
    return tap_correction(model, mu, cfg);
}

double band_functional(const ShiftedModel& model, const DiscreteMeasure& mu, const std::function<double(double)>& field,
                       double lambda, const OrderParameter& zeta_band, BandVariant variant, const SolverConfig& cfg)
{
    if (model.length() <= 1e-12)
        return 0.0;
    Atoms atoms;
    std::vector<double> points;
    for (const Atom& at : mu.atoms()) {
        const bool edge = std::abs(at.x) >= 1.0 - 1e-9;
        if (edge && variant == BandVariant::bar)
            continue;
        const double a = edge ? std::copysign(1.0, at.x) : at.x;
        const double v = field(a);
        if (!std::isfinite(v))
            throw std::invalid_argument("field is not finite on the support of mu");
        atoms.a.push_back(a);
        atoms.w.push_back(at.w);
        points.push_back(lambda * a + v);
    }
    const BandAtomResult r = band_atoms(model, atoms, zeta_band, cfg, &points, 1e-10, false);
    return r.value - theta_penalty(model, zeta_band);
}

BandEvaluation band_evaluation(const ShiftedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta_band,
                               const SolverConfig& cfg, double boundary_tol)
{
    BandEvaluation out;
    if (model.length() <= 1e-12)
        return out;
    const Atoms atoms = fold_atoms(mu, boundary_tol);
    BandAtomResult r = band_atoms(model, atoms, zeta_band, cfg, nullptr, 1e-10, true);
    const std::vector<double> dtheta = theta_increments(zeta_band.nodes(), [&](double s) { return model.theta(s); });
    out.value = r.value - theta_penalty(model, zeta_band);
    out.grad.resize(zeta_band.cells());
    for (std::size_t p = 0; p < out.grad.size(); ++p)
        out.grad[p] = r.dlevels[p] - 0.5 * dtheta[p];
    out.fields = std::move(r.fields);
    out.node_u2 = std::move(r.node_u2);
    out.node_uxx2 = std::move(r.node_uxx2);
    return out;
}

BandRepresentation band_representation(const MixedModel& model, const DiscreteMeasure& mu, const TapConfig& cfg)
{
    const double q = mu.moment(2);
    if (q >= 1.0 - 1e-12) {
        BandRepresentation rep;
        rep.converged = true;
        return rep;
    }
    const ShiftedModel shifted = shift(model, q);
    const std::vector<double> nodes = detail::partition_nodes(q, 1.0, cfg.r_atoms, q);
    return band_search(shifted, fold_atoms(mu, cfg.boundary_tol), nodes,
                       initial_levels(nodes.size() - 1, cfg.init_seed), cfg)
        .rep;
}

BandMinimum band_minimize(const ShiftedModel& model, const DiscreteMeasure& mu, const std::function<double(double)>& field,
                          const TapConfig& cfg, double lambda_max)
{
    BandMinimum out;
    if (model.length() <= 1e-12) {
        out.converged = true;
        return out;
    }
    Atoms atoms;
    std::vector<double> vs;
    bool lambda_free = false;
    const DiscreteMeasure folded = mu.folded();
    for (const Atom& at : folded.atoms()) {
        if (at.x >= 1.0 - cfg.boundary_tol)
            continue;
        atoms.a.push_back(at.x);
        atoms.w.push_back(at.w);
        vs.push_back(field(at.x));
        if (at.x > cfg.boundary_tol)
            lambda_free = true;
    }
    const std::vector<double> nodes = detail::partition_nodes(model.q(), 1.0, cfg.r_atoms, model.q());
    const std::size_t P = nodes.size() - 1;
    const std::vector<double> dtheta = theta_increments(nodes, [&](double s) { return model.theta(s); });
    const SolverConfig solver = with_margin(cfg.solver, lambda_max + max_of(vs) + 1.0);

    auto eval = [&](std::span<const double> x, std::span<double> grad) {
        const double lambda = lambda_free ? x[P] : 0.0;
        std::vector<double> points(atoms.a.size());
        for (std::size_t k = 0; k < points.size(); ++k)
            points[k] = lambda * atoms.a[k] + vs[k];
        const OrderParameter z(nodes, {x.begin(), x.begin() + P});
        const BandAtomResult r = band_atoms(model, atoms, z, solver, &points, cfg.bisection_tol, true);
        double value = r.value;
        for (std::size_t p = 0; p < P; ++p) {
            value -= 0.5 * x[p] * dtheta[p];
            grad[p] = r.dlevels[p] - 0.5 * dtheta[p];
        }
        if (lambda_free) {
            double g = 0.0;
            for (std::size_t k = 0; k < points.size(); ++k)
                g += atoms.w[k] * atoms.a[k] * r.slopes[k];
            grad[P] = g;
        }
        return value;
    };
    auto project = [&](std::span<double> x, std::span<const double> w) {
        detail::project_levels(x.first(P), w.first(P));
        if (lambda_free)
            x[P] = std::clamp(x[P], -lambda_max, lambda_max);
    };
    std::vector<double> metric = clock_metric(nodes, [&](double s) { return model.xi_prime(s); });
    std::vector<double> x0 = initial_levels(P, cfg.init_seed);
    if (lambda_free) {
        metric.push_back(1.0);
        x0.push_back(0.0);
    }
    const detail::SpgResult r = detail::spg_minimize(eval, std::move(x0), metric, project, spg_options(cfg));
    out.value = r.value;
    out.lambda = lambda_free ? r.x[P] : 0.0;
    out.zeta = OrderParameter(nodes, {r.x.begin(), r.x.begin() + P});
    out.lambda_saturated = lambda_free && std::abs(out.lambda) >= lambda_max - 1e-9;
    out.converged = r.converged;
    return out;
}

namespace {

struct Refinement {
    std::vector<double> nodes, lo, hi;
};

Refinement refine(const OrderParameter& z0, const OrderParameter& z1)
{
    if (std::abs(z0.lo() - z1.lo()) > 1e-12 || std::abs(z0.hi() - z1.hi()) > 1e-12)
        throw std::invalid_argument("order parameters live on different intervals");
    Refinement r;
    std::vector<double> all = z0.nodes();
    all.insert(all.end(), z1.nodes().begin(), z1.nodes().end());
    std::sort(all.begin(), all.end());
    for (double t : all)
        if (r.nodes.empty() || t - r.nodes.back() > 1e-12)
            r.nodes.push_back(t);
    for (std::size_t p = 0; p + 1 < r.nodes.size(); ++p) {
        const double mid = 0.5 * (r.nodes[p] + r.nodes[p + 1]);
        r.lo.push_back(z0(mid));
        r.hi.push_back(z1(mid));
    }
    return r;
}

Atoms interior_atoms(const DiscreteMeasure& mu)
{
    Atoms out;
    for (const Atom& at : mu.atoms()) {
        if (std::abs(at.x) >= 1.0 - 1e-9)
            continue;
        out.a.push_back(at.x);
        out.w.push_back(at.w);
    }
    return out;
}

}  // namespace

double directional_derivative(const ShiftedModel& model, const DiscreteMeasure& mu,
                              const std::function<double(double)>& v0, const OrderParameter& zeta0,
                              const std::function<double(double)>& v1, const OrderParameter& zeta1,
                              const SolverConfig& cfg)
{
    if (model.length() <= 1e-12)
        return 0.0;
    const Refinement ref = refine(zeta0, zeta1);
    const OrderParameter z(ref.nodes, ref.lo);
    const Atoms atoms = interior_atoms(mu);
    std::vector<double> points;
    for (double a : atoms.a)
        points.push_back(v0(a));
    const BandAtomResult r = band_atoms(model, atoms, z, cfg, &points, 1e-10, true);
    const std::vector<double> dtheta = theta_increments(ref.nodes, [&](double s) { return model.theta(s); });
    double d = 0.0;
    for (std::size_t p = 0; p < ref.lo.size(); ++p)
        d += (ref.hi[p] - ref.lo[p]) * (r.dlevels[p] - 0.5 * dtheta[p]);
    for (std::size_t k = 0; k < atoms.a.size(); ++k)
        d += atoms.w[k] * (v1(atoms.a[k]) - points[k]) * r.slopes[k];
    return d;
}

McEstimate directional_derivative_mc(const ShiftedModel& model, const DiscreteMeasure& mu,
                                     const std::function<double(double)>& v0, const OrderParameter& zeta0,
                                     const std::function<double(double)>& v1, const OrderParameter& zeta1,
                                     std::size_t n_paths, std::uint64_t seed, const SolverConfig& cfg)
{
    McEstimate est;
    if (model.length() <= 1e-12)
        return est;
    const Refinement ref = refine(zeta0, zeta1);
    const OrderParameter z0(ref.nodes, ref.lo), z1(ref.nodes, ref.hi);
    const Atoms atoms = interior_atoms(mu);
    std::vector<double> times, u2, u2_se;
    for (std::size_t k = 0; k < atoms.a.size(); ++k) {
        const double a = atoms.a[k];
        const double x = v0(a);
        const PDESolution sol = solve(model, z0, Boundary::band(a),
                                      with_margin(cfg, std::max(field_bound(model.base(), a), std::abs(x) + 1.0)));
        const ControlCurves c = simulate_control(sol, x, n_paths, cfg.sde_steps, seed + 0x9e3779b97f4a7c15ULL * k);
        if (times.empty()) {
            times = c.times;
            u2.assign(times.size(), 0.0);
            u2_se.assign(times.size(), 0.0);
        }
        for (std::size_t i = 0; i < times.size(); ++i) {
            u2[i] += atoms.w[k] * c.u2_mean[i];
            u2_se[i] += atoms.w[k] * c.u2_se[i];
        }
        est.mean += atoms.w[k] * (v1(a) - x) * sol.phi_x_node(0, x);
    }
    if (atoms.a.empty())
        return est;
    // trapezoid with the zeta difference taken at interval midpoints
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double t0 = times[i], t1 = times[i + 1];
        const double dz = z1(0.5 * (t0 + t1)) - z0(0.5 * (t0 + t1));
        if (dz == 0.0)
            continue;
        const double g0 = model.xi_double_prime(t0), g1 = model.xi_double_prime(t1);
        const double dt = t1 - t0;
        est.mean += 0.25 * dz * dt * (g0 * (u2[i] - t0) + g1 * (u2[i + 1] - t1));
        est.se += 0.25 * std::abs(dz) * dt * (g0 * u2_se[i] + g1 * u2_se[i + 1]);
    }
    return est;
}

TapCertificate optimality_check(const ShiftedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta_band,
                                const SolverConfig& cfg)
{
    if (model.length() <= 1e-12)
        return {};
    const Atoms atoms = fold_atoms(mu, 1e-9);
    const BandAtomResult r = band_atoms(model, atoms, zeta_band, cfg, nullptr, 1e-10, true);
    const std::vector<double> dtheta = theta_increments(zeta_band.nodes(), [&](double s) { return model.theta(s); });
    std::vector<double> grad(zeta_band.cells());
    for (std::size_t p = 0; p < grad.size(); ++p)
        grad[p] = r.dlevels[p] - 0.5 * dtheta[p];
    return certificate_from(model, zeta_band, r, grad);
}

}  // namespace gtap
