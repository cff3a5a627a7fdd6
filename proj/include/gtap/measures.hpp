#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace gtap {

struct Atom {
    double x;
    double w;
};

// Atomic probability measure on [lo, hi] with strictly increasing locations.
class DiscreteMeasure {
public:
    static constexpr double merge_tol = 1e-12;
    static constexpr std::size_t max_atoms = 64;

    DiscreteMeasure(double lo, double hi, std::vector<Atom> atoms, std::size_t atom_limit = max_atoms);

    static DiscreteMeasure dirac(double lo, double hi, double at);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }

    // right-continuous distribution function
    double cdf(double s) const;
    double moment(int k) const;
    // image under x -> |x|, carried on [0, max(|lo|,|hi|)]
    DiscreteMeasure folded() const;

private:
    double lo_, hi_;
    std::vector<Atom> atoms_;
};

// CDF step function zeta on [lo, hi]: level p on [node p, node p+1), value 1 at hi.
// Equal consecutive levels are allowed; compressed() merges them.
class OrderParameter {
public:
    OrderParameter(std::vector<double> nodes, std::vector<double> levels);

    static OrderParameter constant(double lo, double hi, double level);
    static OrderParameter from_measure(const DiscreteMeasure& m);

    double lo() const { return nodes_.front(); }
    double hi() const { return nodes_.back(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& levels() const { return levels_; }
    std::size_t cells() const { return levels_.size(); }

    double operator()(double s) const;
    // sum_p level_p (G(node_{p+1}) - G(node_p)), i.e. the integral of G' zeta
    double integrate(const std::function<double(double)>& antiderivative) const;
    DiscreteMeasure to_measure() const;
    OrderParameter compressed(double tol = 0.0) const;
    // zeta(s + q) on [lo - q, hi - q]
    OrderParameter translated(double q) const;
    // restriction to [q, hi]
    OrderParameter restricted(double q) const;

private:
    std::vector<double> nodes_;
    std::vector<double> levels_;
};

double d1(const DiscreteMeasure& a, const DiscreteMeasure& b);
double d1(const OrderParameter& a, const OrderParameter& b);
double moment(const DiscreteMeasure& m, int k);
DiscreteMeasure empirical(std::span<const double> m, bool fold = false);
// theta_q zeta(t) = zeta(t + q) for zeta on [0,1]
OrderParameter shift_theta(const OrderParameter& zeta, double q);

}  // namespace gtap
