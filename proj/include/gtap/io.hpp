#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"
#include "gtap/rs_analysis.hpp"
#include "gtap/tap_core.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gtap::io {

// Invalid input file; line is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& what);
    int line() const { return line_; }

private:
    int line_;
};

// {"coeffs_sq": [c_1, ..., c_P], "h": 0} or {"sk_beta": b, "h": 0}
MixedModel parse_model(std::string_view text, const std::string& source = "model");
// {"interval": [lo, hi], "atoms": [[x, w], ...]}
DiscreteMeasure parse_measure(std::string_view text, const std::string& source = "measure");

std::string read_file(const std::filesystem::path& path);
MixedModel load_model(const std::filesystem::path& path);
DiscreteMeasure load_measure(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const MixedModel& m);
nlohmann::ordered_json to_json(const DiscreteMeasure& m);
nlohmann::ordered_json to_json(const OrderParameter& z);
nlohmann::ordered_json to_json(const TapCertificate& c);
nlohmann::ordered_json to_json(const TapResult& r);
// summary fields only; the curve goes to CSV
nlohmann::ordered_json to_json(const RsDiagnostics& d);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gtap::io
