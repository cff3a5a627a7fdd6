#include "gtap/cascades.hpp"
#include "gtap/disorder.hpp"
#include "gtap/io.hpp"
#include "gtap/measures.hpp"
#include "gtap/model.hpp"
#include "gtap/parisi_pde.hpp"
#include "gtap/rs_analysis.hpp"
#include "gtap/tap_core.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace gtap;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { ok = 0, numerical = 1, config = 2 };

struct Options {
    std::string model;
    std::string mu;
    std::string out = ".";
    std::uint64_t seed = 1;
    double grid_step = 1.0 / 64.0;
    double x_max = 0.0;
    int gh_order = 40;
    int r_atoms = 24;
    int replicas = 2;
    double eps = 0.2;
    double delta = 0.2;
    int spins = 8;
    int draws = 40;
    int branching = 2000;
    int starts = 3;
    int steps = 2;
    std::vector<double> betas{0.5, 1.0, 1.5, 2.0, 3.0};
    std::vector<double> fields{0.1, 0.5, 1.0};
};

SolverConfig solver_of(const Options& o)
{
    if (!(o.grid_step > 0.0))
        throw io::ConfigError("--grid-step", 0, "grid step must be positive");
    SolverConfig c;
    c.grid_step = o.grid_step;
    c.x_max = o.x_max;
    c.gh_order = o.gh_order;
    return c;
}

TapConfig tap_config(const Options& o)
{
    if (o.r_atoms < 1)
        throw io::ConfigError("--r-atoms", 0, "r_atoms must be at least 1");
    TapConfig c;
    c.solver = solver_of(o);
    c.r_atoms = o.r_atoms;
    return c;
}

MixedModel model_of(const Options& o)
{
    return o.model.empty() ? MixedModel::sk(1.0) : io::load_model(o.model);
}

MixedModel required_model(const Options& o)
{
    if (o.model.empty())
        throw io::ConfigError("--model", 0, "a model file is required");
    return io::load_model(o.model);
}

DiscreteMeasure required_measure(const Options& o)
{
    if (o.mu.empty())
        throw io::ConfigError("--mu", 0, "a measure file is required");
    return io::load_measure(o.mu);
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

std::vector<double> random_m(int n, double scale, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> m(n);
    for (double& x : m)
        x = u(rng);
    return m;
}

double norm_sq_mean(const std::vector<double>& m)
{
    double s = 0.0;
    for (double x : m)
        s += x * x;
    return s / m.size();
}

int cmd_correction(const Options& o)
{
    const MixedModel model = required_model(o);
    const DiscreteMeasure mu = required_measure(o);
    const TapResult r = tap_correction(model, mu, tap_config(o));
    const double classical = classical_tap(model, mu);
    ordered_json j{{"command", "correction"},
                   {"model", io::to_json(model)},
                   {"mu", io::to_json(mu)},
                   {"tap", io::to_json(r)},
                   {"classical_tap", classical},
                   {"tap_minus_classical", r.value - classical}};
    const fs::path out(o.out);
    if (r.q < 1.0 - 1e-12) {
        const RsDiagnostics d = is_replica_symmetric(shift(model, r.q), mu);
        j["rs"] = io::to_json(d);
        std::ostringstream csv;
        write_gamma_csv(csv, d);
        io::write_text(out / "gamma.csv", csv.str());
    } else {
        j["rs"] = nullptr;
    }
    io::write_text(out / "correction.json", dump(j));
    std::cout << "tap " << r.value << " classical " << classical << " converged " << r.converged << "\n";
    return ok;
}

int cmd_rs_scan(const Options& o)
{
    const fs::path out(o.out);
    if (!o.mu.empty()) {
        const MixedModel model = required_model(o);
        const DiscreteMeasure mu = required_measure(o);
        const double q = mu.moment(2);
        if (q >= 1.0 - 1e-12)
            throw io::ConfigError(o.mu, 0, "replica symmetry scan needs a measure other than the atom at 1");
        const RsDiagnostics d = is_replica_symmetric(shift(model, q), mu);
        std::ostringstream csv;
        write_gamma_csv(csv, d);
        io::write_text(out / "gamma.csv", csv.str());
        io::write_text(out / "rs.json", dump({{"command", "rs-scan"}, {"q", q}, {"rs", io::to_json(d)}}));
        std::cout << "sup_gamma " << d.sup_gamma << " is_rs " << d.is_rs << "\n";
    }
    std::vector<AtReport> rows;
    for (double b : o.betas)
        for (double h : o.fields)
            rows.push_back(at_line_scan(b, h));
    std::ostringstream csv;
    write_at_csv(csv, rows);
    io::write_text(out / "at_plefka.csv", csv.str());
    std::cout << "at rows " << rows.size() << "\n";
    return ok;
}

int cmd_parisi(const Options& o)
{
    const MixedModel model = required_model(o);
    const ParisiMeasureResult r = parisi_measure(model, o.r_atoms, solver_of(o));
    const ordered_json j{{"command", "parisi"},
                         {"model", io::to_json(model)},
                         {"value", r.value},
                         {"zeta", io::to_json(r.zeta)},
                         {"projected_gradient", r.projected_gradient},
                         {"iterations", r.iterations},
                         {"converged", r.converged},
                         {"node_residual", r.node_residual}};
    io::write_text(fs::path(o.out) / "parisi.json", dump(j));
    std::cout << "parisi " << r.value << " converged " << r.converged << "\n";
    return ok;
}

int cmd_tap_solve(const Options& o)
{
    const MixedModel model = required_model(o);
    if (o.spins < 1 || o.spins > DisorderSample::max_spins)
        throw io::ConfigError("--N", 0, "N must lie in [1, 20]");
    const DisorderSample s = sample(o.spins, model, o.seed);
    const TapConfig cfg = tap_config(o);
    std::ostringstream csv;
    csv.precision(12);
    csv << "start,kind,classical_converged,converged,diverged,iterations,residual,q,objective\n";

    const DisorderSample flat = sample(o.spins, MixedModel::zero(), o.seed);
    const std::vector<double> zero(o.spins, 0.0);
    const double zero_res = tap_equation_residual(flat, 0.0, OrderParameter::constant(0.0, 1.0, 1.0), zero);
    csv << "-1,zero_disorder,1,1,0,0," << zero_res << ",0,0\n";

    std::optional<std::pair<double, std::vector<double>>> first;
    for (int k = 0; k < o.starts; ++k) {
        const TapSolveResult c = solve_classical_tap(s, random_m(o.spins, 0.5, o.seed * 1000003ULL + k));
        csv << k << ",tap," << c.converged << ',';
        if (!c.converged) {
            csv << "0," << c.diverged << ',' << c.iterations << ',' << c.residual << ",,\n";
            continue;
        }
        const double q = norm_sq_mean(c.m);
        const TapResult t = tap_correction(model, empirical(c.m, true), cfg);
        TapSolveOptions opt;
        opt.solver = cfg.solver;
        const TapSolveResult r = solve_tap_equations(s, q, t.minimizer_zeta, c.m, opt);
        const double objective = s.energy(r.m) / o.spins + tap_of(model, r.m, cfg);
        csv << r.converged << ',' << r.diverged << ',' << r.iterations << ',' << r.residual << ',' << q << ','
            << objective << "\n";
        if (r.converged && !first)
            first.emplace(q, r.m);
    }
    const fs::path out(o.out);
    io::write_text(out / "fixed_points.csv", csv.str());
    if (first && o.steps > 0) {
        const AscentResult a = tap_ascent(s, first->first, o.steps, first->second, cfg);
        std::ostringstream tcsv;
        write_trajectory_csv(tcsv, a);
        io::write_text(out / "trajectory.csv", tcsv.str());
    }
    std::cout << "starts " << o.starts << " ascent " << (first ? "yes" : "no") << "\n";
    return ok;
}

struct CheckRow {
    std::string name;
    bool pass;
    double value;
    double reference;
    double tolerance;
};

std::vector<CheckRow> mc_checks(const Options& o)
{
    std::vector<CheckRow> rows;
    const MixedModel model = model_of(o);
    const SolverConfig solver = solver_of(o);

    {
        const DiscreteMeasure mu(-1.0, 1.0, {{-0.6, 0.5}, {0.3, 0.5}});
        TapConfig cfg = tap_config(o);
        cfg.r_atoms = std::min(cfg.r_atoms, 8);
        const double t = tap_correction(MixedModel::zero(), mu, cfg).value;
        const double c = classical_tap(MixedModel::zero(), mu);
        rows.push_back({"zero_model", std::abs(t - c) <= 1e-8, t, c, 1e-8});
    }
    {
        const int n = std::min(o.spins, 10);
        const std::vector<double> m = random_m(n, 0.8, o.seed);
        const ShiftedModel sh = shift(model, norm_sq_mean(m));
        const double L = sh.length();
        const OrderParameter zeta({0.0, 0.5 * L, L}, {0.5, 1.0});
        const auto v = [&](double a) { return v_rs(sh, a); };
        CascadeConfig cc;
        cc.branching = o.branching;
        cc.draws = o.draws;
        cc.seed = o.seed;
        const McEstimate mc = psi_full_mc(sh, zeta, m, 0.2, v, cc);
        const double pde = psi_pde(sh, zeta, m, 0.2, v, solver);
        rows.push_back({"cascade_pde", std::abs(mc.mean - pde) <= 3.0 * mc.se, mc.mean, pde, 3.0 * mc.se});
        const OrderParameter uz({0.0, 0.4, 0.8, 1.0}, {0.0, 0.5, 1.0});
        const McEstimate um = upsilon_mc(model, uz, cc);
        const double uc = upsilon(model, uz);
        rows.push_back({"upsilon", std::abs(um.mean - uc) <= 3.0 * um.se, um.mean, uc, 3.0 * um.se});
    }
    {
        const OrderParameter zeta({0.3, 0.6, 1.0}, {0.4, 0.9});
        const PDESolution sol = solve(model, zeta, Boundary::original(), solver);
        const ControlCurves cc = simulate_control(sol, 0.3, 20000, 400, o.seed);
        const double lhs = sol.phi_xx_node(0, 0.3);
        const double rhs = 1.0 - cc.jump_sum_mean;
        rows.push_back({"sde_identity", std::abs(lhs - rhs) <= 3.0 * cc.jump_sum_se, rhs, lhs, 3.0 * cc.jump_sum_se});
    }
    {
        const int n = std::min(o.spins, 12);
        int violations = 0;
        for (int d = 0; d < 5; ++d) {
            const DisorderSample s = sample(n, model, o.seed * 7919ULL + d);
            const Enumeration e(s);
            const double F = free_energy(e);
            for (int k = 0; k < 4; ++k) {
                BandSpec b;
                b.m = random_m(n, 0.9, o.seed * 104729ULL + 10 * d + k);
                b.eps = o.eps;
                b.delta = o.delta;
                const double h = s.energy(b.m) / n;
                double prev = F;
                for (int r = 1; r <= o.replicas; ++r) {
                    b.replicas = r;
                    const double t = h + tap_Nn(e, s, b);
                    if (t > prev)
                        ++violations;
                    prev = t;
                }
            }
        }
        rows.push_back({"exact_chain", violations == 0, static_cast<double>(violations), 0.0, 0.0});
    }
    {
        BandSpec b;
        b.m = std::vector<double>(std::min(o.spins, 12), 0.0);
        b.eps = o.eps;
        b.delta = o.delta;
        b.replicas = o.replicas;
        const ConcentrationReport r = concentration_experiment(model, static_cast<int>(b.m.size()), b, o.draws, o.seed);
        int failed = 0;
        for (const TailCell& c : r.cells)
            failed += !c.below;
        rows.push_back({"concentration", failed <= 1, static_cast<double>(failed), 1.0, 0.0});
    }
    return rows;
}

void write_rows(std::ostream& os, const std::vector<CheckRow>& rows)
{
    os.precision(12);
    os << "check,status,value,reference,tolerance\n";
    for (const CheckRow& r : rows)
        os << r.name << ',' << (r.pass ? "pass" : "fail") << ',' << r.value << ',' << r.reference << ','
           << r.tolerance << '\n';
}

int cmd_mc_verify(const Options& o)
{
    const std::vector<CheckRow> rows = mc_checks(o);
    std::ostringstream csv;
    write_rows(csv, rows);
    io::write_text(fs::path(o.out) / "mc_verify.csv", csv.str());
    std::cout << csv.str();
    return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; }) ? ok : numerical;
}

std::vector<CheckRow> property_checks(const Options& o)
{
    std::vector<CheckRow> rows;
    const MixedModel model = model_of(o);
    const SolverConfig solver = solver_of(o);
    const double q = 0.3, a = 0.4;
    const ShiftedModel sh = shift(model, q);

    {
        const PDESolution band = solve(sh, OrderParameter::constant(0.0, sh.length(), 1.0), Boundary::band(a), solver);
        double err = 0.0;
        for (double x = -5.0; x <= 5.0; x += 0.25)
            err = std::max(err, std::abs(band.phi_node(0, x) - band_rs_phi(sh, a, 0.0, x)));
        rows.push_back({"band_closed_form", err <= 1e-6, err, 0.0, 1e-6});
    }
    const OrderParameter zeta({q, 0.55, 1.0}, {0.3, 0.8});
    const PDESolution orig = solve(model, zeta, Boundary::original(), solver);
    {
        const PDESolution band = solve(sh, zeta.translated(q), Boundary::band(a), solver);
        double err = 0.0;
        for (double x : {-1.0, 0.0, 0.7})
            err = std::max(err, std::abs(unify(band, orig, x) - band.phi_node(0, x)));
        rows.push_back({"unification", err <= 1e-6, err, 0.0, 1e-6});
    }
    {
        const double l0 = lambda_conj(orig, 0.0).value;
        const double ref = orig.phi_node(0, 0.0);
        rows.push_back({"conjugate_at_zero", std::abs(l0 - ref) <= 1e-8, l0, ref, 1e-8});
        const double l1 = lambda_conj(orig, 1.0).value;
        const double half = 0.5 * orig.zeta_clock_integral();
        rows.push_back({"conjugate_at_one", std::abs(l1 - half) <= 1e-6, l1, half, 1e-6});
    }
    {
        const EffectiveField v = effective_field(sh, zeta.translated(q), solver);
        const double v0 = v(0.0);
        rows.push_back({"effective_field_zero", std::abs(v0) <= 1e-10, v0, 0.0, 1e-10});
        const double r = v.band_solution(a).phi_x_node(0, v(a));
        rows.push_back({"effective_field_root", std::abs(r) <= 1e-8, r, 0.0, 1e-8});
    }
    {
        const double beta = 0.8;
        const DiscreteMeasure mu(-1.0, 1.0, {{-0.5, 0.3}, {0.2, 0.4}, {0.6, 0.3}});
        const RsDiagnostics d = is_replica_symmetric(shift(MixedModel::sk(beta), mu.moment(2)), mu);
        const double ref = beta * beta * (plefka(mu, beta).lhs - 1.0);
        rows.push_back({"plefka_curvature", std::abs(d.gamma_second_deriv_at_0 - ref) <= 1e-4,
                        d.gamma_second_deriv_at_0, ref, 1e-4});
    }
    {
        const DisorderSample flat = sample(4, MixedModel::zero(), o.seed);
        const std::vector<double> zero(4, 0.0);
        const double r = tap_equation_residual(flat, 0.0, OrderParameter::constant(0.0, 1.0, 1.0), zero);
        rows.push_back({"zero_disorder_fixed_point", r == 0.0, r, 0.0, 0.0});
    }
    {
        const std::vector<double> p{0.5};
        const CascadeSample c1 = sample_cascade(p, 200, o.seed), c2 = sample_cascade(p, 200, o.seed);
        const std::vector<double> w1 = c1.leaf_weights(), w2 = c2.leaf_weights();
        double total = 0.0;
        for (double w : w1)
            total += w;
        rows.push_back({"cascade_determinism", w1 == w2 && std::abs(total - 1.0) <= 1e-12, total, 1.0, 1e-12});
    }
    return rows;
}

int run_check(const Options& o)
{
    std::vector<CheckRow> rows = property_checks(o);
    ordered_json checks = ordered_json::array();
    bool pass = true;
    for (const CheckRow& r : rows) {
        checks.push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"reference", r.reference},
                          {"tolerance", r.tolerance}});
        pass = pass && r.pass;
    }
    std::cout << ordered_json{{"verdict", pass ? "pass" : "fail"}, {"checks", checks}}.dump() << "\n";
    return pass ? ok : numerical;
}

void add_common(CLI::App* app, Options& o)
{
    app->add_option("--model", o.model, "model JSON file");
    app->add_option("--mu", o.mu, "magnetization measure JSON file");
    app->add_option("--seed", o.seed, "random seed");
    app->add_option("--out", o.out, "output directory");
    app->add_option("--grid-step", o.grid_step, "PDE grid step");
    app->add_option("--x-max", o.x_max, "PDE half-width, 0 for automatic");
    app->add_option("--gh-order", o.gh_order, "Gauss-Hermite order");
    app->add_option("--r-atoms", o.r_atoms, "cells of the order parameter partition");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generalized TAP correction toolkit"};
    Options o;
    bool check = false;
    app.add_flag("--check", check, "run the property suite and print a JSON verdict");
    add_common(&app, o);

    CLI::App* correction = app.add_subcommand("correction", "TAP correction of a magnetization measure");
    add_common(correction, o);

    CLI::App* rs = app.add_subcommand("rs-scan", "Gamma curve and AT/Plefka table");
    add_common(rs, o);
    rs->add_option("--betas", o.betas, "inverse temperatures of the AT table");
    rs->add_option("--fields", o.fields, "external fields of the AT table");

    CLI::App* mc = app.add_subcommand("mc-verify", "Monte Carlo and enumeration checks");
    add_common(mc, o);
    mc->add_option("--n", o.replicas, "replicas in the band");
    mc->add_option("--eps", o.eps, "band width");
    mc->add_option("--delta", o.delta, "replica overlap width");
    mc->add_option("--N", o.spins, "spins");
    mc->add_option("--draws", o.draws, "Monte Carlo draws");
    mc->add_option("--branching", o.branching, "cascade truncation per level");

    CLI::App* tap = app.add_subcommand("tap-solve", "TAP equation fixed points and ascent");
    add_common(tap, o);
    tap->add_option("--N", o.spins, "spins");
    tap->add_option("--starts", o.starts, "random starts");
    tap->add_option("--steps", o.steps, "ascent steps from the first fixed point");

    CLI::App* parisi = app.add_subcommand("parisi", "Parisi measure of a model");
    add_common(parisi, o);

    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config;
    }

    try {
        if (check)
            return run_check(o);
        if (*correction)
            return cmd_correction(o);
        if (*rs)
            return cmd_rs_scan(o);
        if (*mc)
            return cmd_mc_verify(o);
        if (*tap)
            return cmd_tap_solve(o);
        if (*parisi)
            return cmd_parisi(o);
        std::cerr << app.help();
        return config;
    } catch (const io::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical;
    }
}
