#include "grada/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

namespace grada {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec == std::errc() && ptr == v.data() + v.size() && std::isfinite(d)) return d;
  throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long u = std::stoull(v, &pos);
      if (pos == v.size()) return u;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': not a non-negative integer: '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

Field size_field(std::size_t TrainConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.*m = to_uint(k, v); },
          [m](const ExperimentConfig& c) { return std::to_string(c.train.*m); }};
}

Field seed_field(std::uint64_t TrainConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.*m = to_uint(k, v); },
          [m](const ExperimentConfig& c) { return std::to_string(c.train.*m); }};
}

Field double_field(double TrainConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.*m = to_double(k, v); },
          [m](const ExperimentConfig& c) { return fmt(c.train.*m); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"batch_size", size_field(&TrainConfig::batch_size)},
      {"learning_rate", double_field(&TrainConfig::learning_rate)},
      {"dropout", double_field(&TrainConfig::dropout)},
      {"encoder_hidden", size_field(&TrainConfig::encoder_hidden)},
      {"decoder_hidden", size_field(&TrainConfig::decoder_hidden)},
      {"latent_dim", size_field(&TrainConfig::latent_dim)},
      {"classifier_hidden", size_field(&TrainConfig::classifier_hidden)},
      {"lr_decay", double_field(&TrainConfig::lr_decay)},
      {"lambda_e", double_field(&TrainConfig::lambda_e)},
      {"lambda_cls", double_field(&TrainConfig::lambda_cls)},
      {"lambda_elbo", double_field(&TrainConfig::lambda_elbo)},
      {"lambda_nwd", double_field(&TrainConfig::lambda_nwd)},
      {"weight_decay", double_field(&TrainConfig::weight_decay)},
      {"p_add", double_field(&TrainConfig::p_add)},
      {"p_drop", double_field(&TrainConfig::p_drop)},
      {"epochs", size_field(&TrainConfig::epochs)},
      {"seed", seed_field(&TrainConfig::seed)},
      {"ablation_mode",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               try {
                 c.train.ablation_mode = parse_ablation(v);
               } catch (const std::invalid_argument& e) {
                 throw ConfigError("config key '" + k + "': " + e.what());
               }
             },
             [](const ExperimentConfig& c) { return to_string(c.train.ablation_mode); }}},
      {"train_fraction", double_field(&TrainConfig::train_fraction)},
      {"standardize", Field{[](ExperimentConfig& c, const std::string& k,
                               const std::string& v) { c.train.standardize = to_bool(k, v); },
                            [](const ExperimentConfig& c) { return std::string(c.train.standardize ? "true" : "false"); }}},
      {"source", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.source = v; },
                       [](const ExperimentConfig& c) { return c.source; }}},
      {"target", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.target = v; },
                       [](const ExperimentConfig& c) { return c.target; }}},
      {"out", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = v; },
                    [](const ExperimentConfig& c) { return c.out; }}},
  };
  return table;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

std::vector<std::pair<std::string, std::string>> effective_settings(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(cfg));
  return out;
}

}  // namespace grada
