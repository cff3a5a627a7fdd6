#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"
#include "gtap/parisi_pde.hpp"
#include "gtap/tap_core.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

namespace gtap {

class DisorderSample {
public:
    static constexpr int max_spins = 20;

    DisorderSample(int n_spins, MixedModel model, std::uint64_t seed);

    int size() const { return n_; }
    const MixedModel& model() const { return model_; }
    std::uint64_t seed() const { return seed_; }
    // row-major N^p Gaussian coefficients of degree p; empty when beta_p = 0
    const std::vector<double>& tensor(std::size_t p) const { return tensors_[p - 1]; }

    double energy(std::span<const double> m) const;
    std::vector<double> gradient(std::span<const double> m) const;

private:
    int n_;
    MixedModel model_;
    std::uint64_t seed_;
    std::vector<std::vector<double>> tensors_;
};

DisorderSample sample(int n_spins, const MixedModel& model, std::uint64_t seed);
double energy(const DisorderSample& s, std::span<const double> m);
std::vector<double> gradient(const DisorderSample& s, std::span<const double> m);

// Energies of all 2^N configurations; bit i of the index set means sigma_i = -1.
class Enumeration {
public:
    explicit Enumeration(const DisorderSample& s);
    int size() const { return n_; }
    std::size_t count() const { return energies_.size(); }
    double energy(std::size_t config) const { return energies_[config]; }
    double max_energy() const { return max_; }
    // exp(H - max H)
    double weight(std::size_t config) const { return weights_[config]; }
    double spin(std::size_t config, int i) const { return (config >> i) & 1u ? -1.0 : 1.0; }
    double overlap(std::size_t a, std::size_t b) const;

private:
    int n_;
    std::vector<double> energies_, weights_;
    double max_;
};

// (1/N) log sum over all configurations of exp H
double free_energy(const DisorderSample& s);
double free_energy(const Enumeration& e);

struct BandSpec {
    std::vector<double> m;
    double eps = 0.2;
    double delta = 0.2;
    int replicas = 1;
};

// configurations with |m.(sigma - m)| / N < eps
std::vector<std::size_t> band_members(const Enumeration& e, std::span<const double> m, double eps);

// log of the band partition sum over B_n, written as max H + log_sum with log_sum per replica
struct BandPartition {
    bool empty = true;
    double max_energy = 0.0;
    // (1/n) log sum_{B_n} prod_i exp(H(sigma^i) - max H)
    double log_sum = 0.0;
    std::size_t members = 0;
    int spins = 1;
    // (1/N)(max H + log_sum), or -inf when empty
    double per_spin() const;
};

BandPartition band_partition(const Enumeration& e, const BandSpec& band);

inline constexpr int enumeration_budget_bits = 28;

// (1/(nN)) log sum_{B_n} exp sum_i [H(sigma^i) - H(m)]; -inf when B_n is empty
double tap_Nn(const DisorderSample& s, const BandSpec& band);
double tap_Nn(const Enumeration& e, const DisorderSample& s, const BandSpec& band);

struct TailCell {
    double t = 0.0;
    double empirical = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool below = false;
};

struct ConcentrationReport {
    std::vector<double> values;
    double mean = 0.0;
    double sd = 0.0;
    double c_xi = 0.0;
    std::vector<TailCell> cells;
};

// c_xi = 1 / (4 max(4 xi(1), 2 xi'(1)))
double concentration_constant(const MixedModel& model);
double concentration_bound(const MixedModel& model, int n_spins, const BandSpec& band, double t);

ConcentrationReport concentration_experiment(const MixedModel& model, int n_spins, const BandSpec& band, int n_draws,
                                             std::uint64_t seed, const std::vector<double>& ts = {0.05, 0.1});
void write_tail_csv(std::ostream& os, const ConcentrationReport& r);

struct TapSolveOptions {
    double damping = 0.3;
    int max_iter = 5000;
    double tol = 1e-10;
    // residual growth over this many steps counts as divergence
    int divergence_window = 20;
    SolverConfig solver;
};

struct TapSolveResult {
    std::vector<double> m;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
};

// m_i -> d_x Phi_zeta(q, grad H(m)_i - m_i xi''(q) int_q^1 zeta), renormalized to |m|^2 = Nq
TapSolveResult solve_tap_equations(const DisorderSample& s, double q, const OrderParameter& zeta,
                                   std::vector<double> m_init, const TapSolveOptions& opt = {});
double tap_equation_residual(const DisorderSample& s, double q, const OrderParameter& zeta, std::span<const double> m,
                             const SolverConfig& cfg = {});

// classical equations m = tanh(grad H(m) - m xi''(q)(1-q)) with q = |m|^2/N updated each step
TapSolveResult solve_classical_tap(const DisorderSample& s, std::vector<double> m_init,
                                   const TapSolveOptions& opt = {});

struct TapGradient {
    // -(1/N)(Psibar_i + m_i xi''(q) int_q^1 zeta)
    std::vector<double> formula;
    // -(1/N)(Psibar_i + m_i xi''(q) mean_j d_xx Phi(q, Psibar_j)) at the partition minimizer
    std::vector<double> partition;
    TapResult tap;
};

TapGradient grad_tap(const MixedModel& model, std::span<const double> m, const TapConfig& cfg = {});
// TAP(mu_m) for the folded empirical measure of m
double tap_of(const MixedModel& model, std::span<const double> m, const TapConfig& cfg = {});

struct AscentStep {
    std::vector<double> m;
    double value = 0.0;
};

struct AscentResult {
    std::vector<AscentStep> trajectory;
    double free_energy = 0.0;
    bool line_search_failed = false;
};

AscentResult tap_ascent(const DisorderSample& s, double q, int steps, std::vector<double> m_init,
                        const TapConfig& cfg = {});
void write_trajectory_csv(std::ostream& os, const AscentResult& r);

}  // namespace gtap
