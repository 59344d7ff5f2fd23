#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ldm {

using nlohmann::json;

struct Validation {
    std::vector<std::string> violations;
    std::vector<std::string> warnings;
    bool ok() const { return violations.empty(); }
};

/// Full schema walk: unknown keys are violations (fail closed), known fields
/// are checked against the module invariants. Messages name field paths.
Validation validate_config(const json& config);

/// Throws Error(ConfigInvalid) naming the first violation.
void require_valid(const json& config);

/// Canonical content hash of a config (whitespace-insensitive).
std::string config_hash(const json& config);

json load_config_file(const std::string& path);

}  // namespace ldm
