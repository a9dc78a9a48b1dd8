#pragma once

#include "nestco/analysis.hpp"
#include "nestco/experiments.hpp"
#include "nestco/optim.hpp"
#include "nestco/toy.hpp"
#include "nestco/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

// JSON experiment documents. Parsers overlay a document onto the defaults of
// the target struct and reject unknown keys so typos never pass silently.

namespace nestco::config {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads a JSON document; an empty path yields an empty object.
json load(const std::filesystem::path& path);

/// Applies "a.b.c=value". The value is parsed as JSON and falls back to a
/// plain string, so `--set noise.kind=symmetric` needs no quoting.
void apply_override(json& doc, const std::string& assignment);

/// Throws ConfigError naming the first top-level key not in `allowed`.
void allow_keys(const json& doc, std::initializer_list<std::string_view> allowed);

void from_json(const json& j, LrSchedule& out);
void from_json(const json& j, noise::NoiseSpec& out);
void from_json(const json& j, train::StageOneConfig& out);
void from_json(const json& j, train::CoTeachConfig& out);
void from_json(const json& j, analysis::ProbeConfig& out);
void from_json(const json& j, toy::ToyConfig& out);
void from_json(const json& j, exp::BlobData& out);
void from_json(const json& j, exp::ModelConfig& out);

json to_json(const LrSchedule& s);
json to_json(const noise::NoiseSpec& s);
json to_json(const train::StageOneConfig& s);
json to_json(const train::CoTeachConfig& s);
json to_json(const analysis::ProbeConfig& s);
json to_json(const toy::ToyConfig& s);
json to_json(const exp::BlobData& s);
json to_json(const exp::ModelConfig& s);

} // namespace nestco::config
