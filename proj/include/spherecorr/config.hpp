#pragma once

// Configuration files. A config is a JSON object of sections; it can be
// written as JSON or in a TOML subset: [section] / [a.b] headers,
// key = value lines with strings, integers, floats, booleans and flat
// arrays of those, and # comments. Multi-line values, inline tables,
// dates and escapes beyond \" \\ \n \t are not supported.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace spherecorr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json parse_toml(std::string_view text);

// Chooses the parser by extension (.json, otherwise TOML).
nlohmann::json load_config_file(const std::filesystem::path& path);

// Recursively copies values of overlay into base. Every key of overlay must
// already exist in base with a compatible type (numbers interconvert
// between integer and float; integer slots reject fractional values).
void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& where = "");

// "a.b=value" with a TOML-syntax value; unquoted non-numeric values are
// taken as strings. Throws ConfigError for unknown keys or bad values.
void apply_override(nlohmann::json& cfg, std::string_view assignment);

}  // namespace spherecorr
