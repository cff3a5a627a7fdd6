#include "gtap/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtap {

DiscreteMeasure::DiscreteMeasure(double lo, double hi, std::vector<Atom> atoms, std::size_t atom_limit)
    : lo_(lo), hi_(hi)
{
    if (!(lo <= hi))
        throw std::invalid_argument("measure interval must satisfy lo <= hi");
    if (atoms.empty())
        throw std::invalid_argument("measure needs at least one atom");
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });
    double total = 0.0;
    for (const Atom& a : atoms) {
        if (!(a.w > 0.0))
            throw std::invalid_argument("atom weights must be positive");
        if (a.x < lo - merge_tol || a.x > hi + merge_tol)
            throw std::invalid_argument("atom location outside the measure interval");
        total += a.w;
        Atom c{std::clamp(a.x, lo, hi), a.w};
        if (!atoms_.empty() && c.x - atoms_.back().x <= merge_tol)
            atoms_.back().w += c.w;
        else
            atoms_.push_back(c);
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("atom weights must sum to one");
    if (atoms_.size() > atom_limit)
        throw std::invalid_argument("too many atoms in measure");
}

DiscreteMeasure DiscreteMeasure::dirac(double lo, double hi, double at)
{
    return DiscreteMeasure(lo, hi, {{at, 1.0}});
}

double DiscreteMeasure::cdf(double s) const
{
    double c = 0.0;
    for (const Atom& a : atoms_) {
        if (a.x > s)
            break;
        c += a.w;
    }
    return std::min(c, 1.0);
}

double DiscreteMeasure::moment(int k) const
{
    double r = 0.0;
    for (const Atom& a : atoms_)
        r += a.w * std::pow(a.x, k);
    return r;
}

DiscreteMeasure DiscreteMeasure::folded() const
{
    std::vector<Atom> f;
    f.reserve(atoms_.size());
    for (const Atom& a : atoms_)
        f.push_back({std::abs(a.x), a.w});
    return DiscreteMeasure(0.0, std::max(std::abs(lo_), std::abs(hi_)), std::move(f), 2 * atoms_.size());
}

double moment(const DiscreteMeasure& m, int k)
{
    if (k < 1)
        throw std::invalid_argument("moment order must be at least 1");
    return m.moment(k);
}

namespace {

// Integral of |F - G| for right-continuous step functions given by breakpoints.
template <class F, class G>
double step_l1(std::vector<double> cuts, double lo, double hi, F f, G g)
{
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double r = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i], b = cuts[i + 1];
        if (a < lo || b > hi || b <= a)
            continue;
        r += std::abs(f(a) - g(a)) * (b - a);
    }
    return r;
}

}  // namespace

double d1(const DiscreteMeasure& a, const DiscreteMeasure& b)
{
    if (a.lo() != b.lo() || a.hi() != b.hi())
        throw std::invalid_argument("d1 requires measures on the same interval");
    std::vector<double> cuts;
    for (const Atom& x : a.atoms())
        cuts.push_back(x.x);
    for (const Atom& x : b.atoms())
        cuts.push_back(x.x);
    return step_l1(std::move(cuts), a.lo(), a.hi(), [&](double s) { return a.cdf(s); },
                   [&](double s) { return b.cdf(s); });
}

double d1(const OrderParameter& a, const OrderParameter& b)
{
    if (std::abs(a.lo() - b.lo()) > 1e-12 || std::abs(a.hi() - b.hi()) > 1e-12)
        throw std::invalid_argument("d1 requires order parameters on the same interval");
    std::vector<double> cuts = a.nodes();
    cuts.insert(cuts.end(), b.nodes().begin(), b.nodes().end());
    return step_l1(std::move(cuts), a.lo(), a.hi(), [&](double s) { return a(s); },
                   [&](double s) { return b(s); });
}

DiscreteMeasure empirical(std::span<const double> m, bool fold)
{
    if (m.empty())
        throw std::invalid_argument("empirical measure of an empty vector");
    std::vector<Atom> atoms;
    atoms.reserve(m.size());
    const double w = 1.0 / static_cast<double>(m.size());
    for (double x : m) {
        if (!(std::abs(x) <= 1.0))
            throw std::invalid_argument("magnetization entries must lie in [-1,1]");
        atoms.push_back({fold ? std::abs(x) : x, w});
    }
    // renormalize against rounding in N * (1/N)
    double total = w * static_cast<double>(m.size());
    for (Atom& a : atoms)
        a.w /= total;
    return DiscreteMeasure(fold ? 0.0 : -1.0, 1.0, std::move(atoms), m.size());
}

OrderParameter::OrderParameter(std::vector<double> nodes, std::vector<double> levels)
    : nodes_(std::move(nodes)), levels_(std::move(levels))
{
    if (nodes_.empty() || nodes_.size() != levels_.size() + 1)
        throw std::invalid_argument("order parameter needs one more node than levels");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
        if (!(nodes_[i] < nodes_[i + 1]))
            throw std::invalid_argument("order parameter nodes must be strictly increasing");
    for (std::size_t p = 0; p < levels_.size(); ++p) {
        if (!(levels_[p] >= 0.0 && levels_[p] <= 1.0))
            throw std::invalid_argument("order parameter levels must lie in [0,1]");
        if (p > 0 && levels_[p] < levels_[p - 1])
            throw std::invalid_argument("order parameter levels must be nondecreasing");
    }
}

OrderParameter OrderParameter::constant(double lo, double hi, double level)
{
    if (hi <= lo)
        return OrderParameter({lo}, {});
    return OrderParameter({lo, hi}, {level});
}

OrderParameter OrderParameter::from_measure(const DiscreteMeasure& m)
{
    if (m.hi() <= m.lo())
        return OrderParameter({m.lo()}, {});
    std::vector<double> nodes{m.lo()};
    std::vector<double> levels;
    double c = 0.0;
    for (const Atom& a : m.atoms()) {
        if (a.x >= m.hi())
            break;
        if (a.x <= m.lo()) {
            c += a.w;
            continue;
        }
        levels.push_back(std::min(c, 1.0));
        nodes.push_back(a.x);
        c += a.w;
    }
    levels.push_back(std::min(c, 1.0));
    nodes.push_back(m.hi());
    return OrderParameter(std::move(nodes), std::move(levels));
}

double OrderParameter::operator()(double s) const
{
    if (s >= hi())
        return 1.0;
    if (s < lo())
        return 0.0;
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), s);
    return levels_[static_cast<std::size_t>(it - nodes_.begin()) - 1];
}

double OrderParameter::integrate(const std::function<double(double)>& antiderivative) const
{
    double r = 0.0;
    for (std::size_t p = 0; p < levels_.size(); ++p)
        if (levels_[p] != 0.0)
            r += levels_[p] * (antiderivative(nodes_[p + 1]) - antiderivative(nodes_[p]));
    return r;
}

DiscreteMeasure OrderParameter::to_measure() const
{
    std::vector<Atom> atoms;
    double prev = 0.0;
    for (std::size_t p = 0; p < levels_.size(); ++p) {
        if (levels_[p] > prev)
            atoms.push_back({nodes_[p], levels_[p] - prev});
        prev = std::max(prev, levels_[p]);
    }
    if (prev < 1.0)
        atoms.push_back({hi(), 1.0 - prev});
    double total = 0.0;
    for (const Atom& a : atoms)
        total += a.w;
    for (Atom& a : atoms)
        a.w /= total;
    return DiscreteMeasure(lo(), hi(), std::move(atoms), atoms.size() + 1);
}

OrderParameter OrderParameter::compressed(double tol) const
{
    if (levels_.empty())
        return *this;
    std::vector<double> nodes{nodes_.front()};
    std::vector<double> levels{levels_.front()};
    for (std::size_t p = 1; p < levels_.size(); ++p) {
        if (levels_[p] - levels.back() <= tol)
            continue;
        nodes.push_back(nodes_[p]);
        levels.push_back(levels_[p]);
    }
    nodes.push_back(nodes_.back());
    return OrderParameter(std::move(nodes), std::move(levels));
}

OrderParameter OrderParameter::translated(double q) const
{
    std::vector<double> nodes = nodes_;
    for (double& t : nodes)
        t -= q;
    return OrderParameter(std::move(nodes), levels_);
}

OrderParameter OrderParameter::restricted(double q) const
{
    if (q <= lo())
        return *this;
    if (q >= hi())
        return OrderParameter({hi()}, {});
    std::vector<double> nodes{q};
    std::vector<double> levels{(*this)(q)};
    for (std::size_t p = 1; p + 1 < nodes_.size(); ++p) {
        if (nodes_[p] <= q + 1e-14)
            continue;
        nodes.push_back(nodes_[p]);
        levels.push_back(levels_[p]);
    }
    nodes.push_back(hi());
    return OrderParameter(std::move(nodes), std::move(levels));
}

OrderParameter shift_theta(const OrderParameter& zeta, double q)
{
    if (!(q >= 0.0 && q <= 1.0))
        throw std::domain_error("shift parameter q outside [0,1]");
    return zeta.restricted(zeta.lo() + q).translated(zeta.lo() + q);
}

}  // namespace gtap
