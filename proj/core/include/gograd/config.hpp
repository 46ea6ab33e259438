#pragma once

#include <string>
#include <vector>

#include "gograd/experiments.hpp"

namespace gograd {

// Loads an experiment configuration from a TOML (primary) or JSON file,
// applies `key=value` overrides on top, validates, and returns the struct.
// Unknown keys - in the file or in an override - raise ConfigError naming
// the key. Values in overrides use the same literal grammar as the file
// (numbers, true/false, quoted or bare strings, [a, b, c] arrays).
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});

// Same, from in-memory text ("toml" or "json").
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& format,
                                         const std::vector<std::string>& overrides = {});

// Full resolved configuration (defaults + file + overrides) as JSON, so a
// run can be replayed from its own output directory.
std::string resolved_config_json(const ExperimentConfig& config);

}  // namespace gograd
