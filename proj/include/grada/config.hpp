#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grada/training.hpp"

namespace grada {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// TrainConfig plus the paths a command needs.
struct ExperimentConfig {
  TrainConfig train;
  std::string source;
  std::string target;
  std::string out = "out";
};

/// Reads flat `key = value` lines; `#` starts a comment. Throws ConfigError
/// naming the key on unknown keys or unparsable values.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

/// Sets one key; the same keys as the config file.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> effective_settings(const ExperimentConfig& cfg);

}  // namespace grada
