#include "gtap/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gtap::io {

using nlohmann::json;
using nlohmann::ordered_json;

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line)
{
}

namespace {

int line_of_offset(std::string_view text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
}

int line_of_key(std::string_view text, const std::string& key)
{
    const std::size_t at = text.find('"' + key + '"');
    return at == std::string_view::npos ? 0 : line_of_offset(text, at);
}

json parse_object(std::string_view text, const std::string& source)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const int line = e.byte > 0 ? line_of_offset(text, e.byte - 1) : 0;
        std::string msg = e.what();
        const std::size_t colon = msg.rfind(": ");
        throw ConfigError(source, line, "malformed JSON (" + (colon == std::string::npos ? msg : msg.substr(colon + 2)) + ")");
    }
    if (!j.is_object())
        throw ConfigError(source, 1, "top level must be a JSON object");
    return j;
}

double number(const json& j, std::string_view text, const std::string& source, const std::string& key)
{
    if (!j.is_number())
        throw ConfigError(source, line_of_key(text, key), "'" + key + "' must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v))
        throw ConfigError(source, line_of_key(text, key), "'" + key + "' must be finite");
    return v;
}

void reject_unknown(const json& j, std::string_view text, const std::string& source,
                     std::initializer_list<std::string_view> known)
{
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError(source, line_of_key(text, k), "unknown key '" + k + "'");
}

}  // namespace

MixedModel parse_model(std::string_view text, const std::string& source)
{
    const json j = parse_object(text, source);
    reject_unknown(j, text, source, {"coeffs_sq", "sk_beta", "h"});
    const double h = j.contains("h") ? number(j["h"], text, source, "h") : 0.0;
    if (j.contains("coeffs_sq") == j.contains("sk_beta"))
        throw ConfigError(source, 1, "give exactly one of 'coeffs_sq' or 'sk_beta'");
    if (j.contains("sk_beta")) {
        const double b = number(j["sk_beta"], text, source, "sk_beta");
        return MixedModel({0.0, 0.5 * b * b}, h);
    }
    const json& c = j["coeffs_sq"];
    const int line = line_of_key(text, "coeffs_sq");
    if (!c.is_array())
        throw ConfigError(source, line, "'coeffs_sq' must be an array");
    std::vector<double> coeffs;
    for (const json& x : c) {
        if (!x.is_number() || !std::isfinite(x.get<double>()) || x.get<double>() < 0.0)
            throw ConfigError(source, line, "'coeffs_sq' entries must be nonnegative numbers");
        coeffs.push_back(x.get<double>());
    }
    try {
        return MixedModel(std::move(coeffs), h);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source, line, e.what());
    }
}

DiscreteMeasure parse_measure(std::string_view text, const std::string& source)
{
    const json j = parse_object(text, source);
    reject_unknown(j, text, source, {"interval", "atoms"});
    double lo = 0.0, hi = 1.0;
    if (j.contains("interval")) {
        const json& iv = j["interval"];
        if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
            throw ConfigError(source, line_of_key(text, "interval"), "'interval' must be [lo, hi]");
        lo = iv[0].get<double>();
        hi = iv[1].get<double>();
    }
    if (!j.contains("atoms"))
        throw ConfigError(source, 1, "missing 'atoms'");
    const int line = line_of_key(text, "atoms");
    const json& a = j["atoms"];
    if (!a.is_array() || a.empty())
        throw ConfigError(source, line, "'atoms' must be a nonempty array of [x, w] pairs");
    std::vector<Atom> atoms;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const json& p = a[k];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ConfigError(source, line, "atom " + std::to_string(k) + " must be [x, w]");
        atoms.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    try {
        return DiscreteMeasure(lo, hi, std::move(atoms));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source, line, e.what());
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

MixedModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path), path.string()); }

DiscreteMeasure load_measure(const std::filesystem::path& path)
{
    return parse_measure(read_file(path), path.string());
}

ordered_json to_json(const MixedModel& m)
{
    return {{"coeffs_sq", m.coeffs_sq()}, {"h", m.external_field()}};
}

ordered_json to_json(const DiscreteMeasure& m)
{
    ordered_json atoms = ordered_json::array();
    for (const Atom& a : m.atoms())
        atoms.push_back({a.x, a.w});
    return {{"interval", {m.lo(), m.hi()}}, {"atoms", atoms}};
}

ordered_json to_json(const OrderParameter& z)
{
    return {{"nodes", z.nodes()}, {"levels", z.levels()}};
}

ordered_json to_json(const TapCertificate& c)
{
    return {{"nodes", c.nodes},
            {"first", c.first},
            {"second", c.second},
            {"first_sup", c.first_sup},
            {"second_sup", c.second_sup},
            {"cell_stationarity", c.cell_stationarity}};
}

ordered_json to_json(const TapResult& r)
{
    return {{"value", r.value},
            {"q", r.q},
            {"minimizer_zeta", to_json(r.minimizer_zeta)},
            {"support_offset", r.support_offset},
            {"certificate", to_json(r.certificate)},
            {"representation_value", r.representation_value},
            {"representation_gap", r.representation_gap},
            {"projected_gradient", r.projected_gradient},
            {"iterations", r.iterations},
            {"evaluations", r.evaluations},
            {"converged", r.converged}};
}

ordered_json to_json(const RsDiagnostics& d)
{
    return {{"sup_gamma", d.sup_gamma},
            {"margin", d.margin},
            {"is_rs", d.is_rs},
            {"gamma_second_deriv_at_0", d.gamma_second_deriv_at_0},
            {"plefka_lhs", d.plefka_lhs},
            {"grid_points", d.gamma_curve.size()}};
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError(path.string(), 0, "cannot write file");
    out << text;
}

}  // namespace gtap::io
