#include "gograd/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gograd {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Turns one TOML-style literal into a json value: quoted string, boolean,
// number, single-line array, or bare word (treated as a string).
json parse_literal(const std::string& raw) {
  const std::string v = trim(raw);
  if (v.empty()) bad("empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') bad("unterminated string: " + v);
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']') bad("unterminated array: " + v);
    json arr = json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string item;
    int depth = 0;
    bool in_str = false;
    auto flush = [&]() {
      const std::string t = trim(item);
      if (!t.empty()) arr.push_back(parse_literal(t));
      item.clear();
    };
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (!in_str) {
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (c == ',' && depth == 0) {
          flush();
          continue;
        }
      }
      item.push_back(c);
    }
    flush();
    return arr;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  // Number, else bare word as string.
  try {
    size_t pos = 0;
    if (v.find_first_of(".eE") != std::string::npos ||
        v.find("inf") != std::string::npos) {
      const double d = std::stod(v, &pos);
      if (pos == v.size()) return d;
    } else {
      const long long i = std::stoll(v, &pos);
      if (pos == v.size()) return i;
    }
  } catch (...) {
  }
  return v;
}

// Flat TOML subset: comments, [section] prefixes (joined with '.'),
// key = value with single-line literals.
json parse_toml_subset(const std::string& text) {
  json doc = json::object();
  std::istringstream in(text);
  std::string line;
  std::string prefix;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside of strings.
    bool in_str = false;
    std::string payload;
    for (char c : line) {
      if (c == '"') in_str = !in_str;
      if (c == '#' && !in_str) break;
      payload.push_back(c);
    }
    payload = trim(payload);
    if (payload.empty()) continue;
    if (payload.front() == '[') {
      if (payload.back() != ']') {
        bad("line " + std::to_string(lineno) + ": malformed section header");
      }
      prefix = trim(payload.substr(1, payload.size() - 2));
      if (!prefix.empty()) prefix += ".";
      continue;
    }
    const size_t eq = payload.find('=');
    if (eq == std::string::npos) {
      bad("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = prefix + trim(payload.substr(0, eq));
    if (key.empty()) bad("line " + std::to_string(lineno) + ": empty key");
    doc[key] = parse_literal(payload.substr(eq + 1));
  }
  return doc;
}

template <typename T>
void assign_number(const json& v, T& out, const std::string& key) {
  if (!v.is_number()) bad(key + ": expected a number");
  out = v.get<T>();
}

void assign_doubles(const json& v, std::vector<double>& out,
                    const std::string& key) {
  if (!v.is_array()) bad(key + ": expected an array of numbers");
  out.clear();
  for (const auto& e : v) {
    if (!e.is_number()) bad(key + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
}

void assign_strings(const json& v, std::vector<std::string>& out,
                    const std::string& key) {
  if (!v.is_array()) bad(key + ": expected an array of strings");
  out.clear();
  for (const auto& e : v) {
    if (!e.is_string()) bad(key + ": expected an array of strings");
    out.push_back(e.get<std::string>());
  }
}

void apply_key(ExperimentConfig& c, const std::string& key, const json& v) {
  if (key == "experiment") {
    if (!v.is_string()) bad("experiment: expected a string");
    c.experiment = v.get<std::string>();
  } else if (key == "seed") {
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
      bad("seed: expected an integer");
    }
    c.seed = v.get<std::uint64_t>();
  } else if (key == "iterations") {
    assign_number(v, c.iterations, key);
  } else if (key == "variance_probes") {
    assign_number(v, c.variance_probes, key);
  } else if (key == "threads") {
    assign_number(v, c.threads, key);
  } else if (key == "target_params") {
    assign_doubles(v, c.target_params, key);
  } else if (key == "init_params") {
    assign_doubles(v, c.init_params, key);
  } else if (key == "estimators") {
    assign_strings(v, c.estimators, key);
  } else if (key == "optimizer" || key == "optimizer.kind") {
    if (!v.is_string()) bad(key + ": expected a string");
    c.optimizer.kind = v.get<std::string>();
  } else if (key == "learning_rate" || key == "optimizer.learning_rate") {
    assign_number(v, c.optimizer.learning_rate, key);
  } else if (key == "beta1" || key == "optimizer.beta1") {
    assign_number(v, c.optimizer.beta1, key);
  } else if (key == "beta2" || key == "optimizer.beta2") {
    assign_number(v, c.optimizer.beta2, key);
  } else if (key == "eps" || key == "optimizer.eps") {
    assign_number(v, c.optimizer.eps, key);
  } else if (key == "latent_bits") {
    assign_number(v, c.latent_bits, key);
  } else if (key == "data_dim") {
    assign_number(v, c.data_dim, key);
  } else if (key == "n_data") {
    assign_number(v, c.n_data, key);
  } else if (key == "checkpoint_every") {
    assign_number(v, c.checkpoint_every, key);
  } else if (key == "checkpoint_probes") {
    assign_number(v, c.checkpoint_probes, key);
  } else if (key == "suite_samples") {
    assign_number(v, c.suite_samples, key);
  } else {
    bad("unknown configuration key '" + key + "'");
  }
}

// Sectioned and flat spellings of the optimizer keys are the same setting;
// canonicalize before storing so later overrides always win.
std::string canonical_key(const std::string& key) {
  if (key == "optimizer.kind") return "optimizer";
  if (key.rfind("optimizer.", 0) == 0) return key.substr(10);
  return key;
}

json flatten(const json& doc, const std::string& prefix = "") {
  json out = json::object();
  for (const auto& [k, v] : doc.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      const json sub = flatten(v, key);
      for (const auto& [k2, v2] : sub.items()) out[k2] = v2;
    } else {
      out[key] = v;
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(
    const std::string& text, const std::string& format,
    const std::vector<std::string>& overrides) {
  json raw;
  if (format == "json") {
    json parsed;
    try {
      parsed = json::parse(text);
    } catch (const std::exception& e) {
      bad(std::string("config: invalid json: ") + e.what());
    }
    if (!parsed.is_object()) bad("config: json root must be an object");
    raw = flatten(parsed);
  } else if (format == "toml") {
    raw = parse_toml_subset(text);
  } else {
    bad("config: unknown format '" + format + "'");
  }
  json doc = json::object();
  for (const auto& [k, v] : raw.items()) doc[canonical_key(k)] = v;

  for (const auto& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      bad("override '" + ov + "': expected key=value");
    }
    doc[canonical_key(trim(ov.substr(0, eq)))] =
        parse_literal(ov.substr(eq + 1));
  }

  ExperimentConfig c;
  for (const auto& [k, v] : doc.items()) apply_key(c, k, v);
  return c;
}

ExperimentConfig load_experiment_config(
    const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) bad("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const bool is_json = path.size() > 5 && path.substr(path.size() - 5) == ".json";
  return parse_experiment_config(ss.str(), is_json ? "json" : "toml",
                                 overrides);
}

std::string resolved_config_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["iterations"] = c.iterations;
  j["variance_probes"] = c.variance_probes;
  j["threads"] = c.threads;
  j["target_params"] = c.target_params;
  j["init_params"] = c.init_params;
  j["estimators"] = c.estimators;
  j["optimizer"] = {{"kind", c.optimizer.kind},
                    {"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  j["latent_bits"] = c.latent_bits;
  j["data_dim"] = c.data_dim;
  j["n_data"] = c.n_data;
  j["checkpoint_every"] = c.checkpoint_every;
  j["checkpoint_probes"] = c.checkpoint_probes;
  j["suite_samples"] = c.suite_samples;
  return j.dump(2);
}

}  // namespace gograd
