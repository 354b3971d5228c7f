#ifndef MOSAICGEN_CONFIG_HPP
#define MOSAICGEN_CONFIG_HPP

// Flat "key = value" run configuration. Every key in kConfigKeys must be
// present; `label_grid` is the only optional key. '#' starts a comment.

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/pipeline.hpp"

namespace mosaicgen {

inline constexpr std::array<std::string_view, 18> kConfigKeys = {
    "level",      "scale",      "steps",  "train_steps", "beta_start",      "beta_end",
    "cfg_scale",  "w0",         "gamma",  "blur_sigma",  "objective",       "adain",
    "noise_mode", "parameterization", "jacobian", "step_order", "redenoise", "seed"};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true|false, got '" + v + "'");
}

template <typename Fn>
auto as_config_error(const std::string& key, Fn fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

/// Whitespace-separated labels, row-major.
inline std::vector<std::string> read_label_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read label grid " + path.string());
  std::vector<std::string> labels;
  std::string tok;
  while (in >> tok) labels.push_back(tok);
  if (labels.empty()) throw ConfigError("label grid " + path.string() + " is empty");
  return labels;
}

/// Builds a config from parsed key/value pairs. Relative label_grid paths are
/// resolved against `base_dir`.
inline MosaicConfig config_from_map(const std::map<std::string, std::string>& kv,
                                    const std::filesystem::path& base_dir = {}) {
  for (const auto& [k, v] : kv) {
    const bool known = k == "label" || k == "label_grid" ||
                       std::find(kConfigKeys.begin(), kConfigKeys.end(), k) != kConfigKeys.end();
    if (!known) throw ConfigError("unknown config key '" + k + "'");
  }
  auto get = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(std::string(key));
    if (it == kv.end()) throw ConfigError("missing config key '" + std::string(key) + "'");
    return it->second;
  };
  for (auto key : kConfigKeys) get(key);
  if (!kv.count("label") && !kv.count("label_grid")) throw ConfigError("missing config key 'label'");

  using namespace detail;
  MosaicConfig c;
  c.level = static_cast<int>(parse_int("level", get("level")));
  c.scale = static_cast<int>(parse_int("scale", get("scale")));
  c.steps = static_cast<int>(parse_int("steps", get("steps")));
  c.train_steps = static_cast<int>(parse_int("train_steps", get("train_steps")));
  c.beta_start = parse_double("beta_start", get("beta_start"));
  c.beta_end = parse_double("beta_end", get("beta_end"));
  c.cfg_scale = parse_double("cfg_scale", get("cfg_scale"));
  c.w0 = parse_double("w0", get("w0"));
  c.gamma = parse_double("gamma", get("gamma"));
  const std::string& bs = get("blur_sigma");
  c.blur_sigma = bs == "auto" ? std::nullopt : std::optional<double>(parse_double("blur_sigma", bs));
  c.objective = as_config_error("objective", [&] { return parse_objective(get("objective")); });
  c.adain = parse_bool("adain", get("adain"));
  c.noise_mode = as_config_error("noise_mode", [&] { return parse_noise_mode(get("noise_mode")); });
  c.parameterization = as_config_error("parameterization", [&] { return parse_parameterization(get("parameterization")); });
  c.jacobian = as_config_error("jacobian", [&] { return parse_jacobian_mode(get("jacobian")); });
  c.order = as_config_error("step_order", [&] { return parse_step_order(get("step_order")); });
  c.redenoise = parse_bool("redenoise", get("redenoise"));
  const long long seed = parse_int("seed", get("seed"));
  if (seed < 0) throw ConfigError("config key 'seed': must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  if (const auto it = kv.find("label_grid"); it != kv.end()) {
    std::filesystem::path p = it->second;
    if (p.is_relative()) p = base_dir / p;
    c.labels = read_label_grid(p);
  } else {
    c.labels = {kv.at("label")};
  }
  c.validate();
  return c;
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key or value");
    }
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate config key '" + key + "'");
  }
  return kv;
}

inline nlohmann::ordered_json config_to_json(const MosaicConfig& c) {
  nlohmann::ordered_json j;
  j["level"] = c.level;
  j["scale"] = c.scale;
  j["steps"] = c.steps;
  j["train_steps"] = c.train_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["cfg_scale"] = c.cfg_scale;
  j["w0"] = c.w0;
  j["gamma"] = c.gamma;
  if (c.blur_sigma) {
    j["blur_sigma"] = *c.blur_sigma;
  } else {
    j["blur_sigma"] = "auto";
  }
  j["objective"] = to_string(c.objective);
  j["adain"] = c.adain;
  j["noise_mode"] = to_string(c.noise_mode);
  j["parameterization"] = to_string(c.parameterization);
  j["jacobian"] = to_string(c.jacobian);
  j["step_order"] = to_string(c.order);
  j["redenoise"] = c.redenoise;
  j["seed"] = c.seed;
  j["labels"] = c.labels;
  return j;
}

/// Inverse of config_to_json; used to replay a run manifest.
/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline MosaicConfig config_from_json(const nlohmann::json& j) {
  std::map<std::string, std::string> kv;
  for (auto key : kConfigKeys) {
    const std::string k(key);
    if (!j.contains(k)) throw ConfigError("missing config key '" + k + "'");
    const auto& v = j.at(k);
    if (v.is_string()) {
      kv[k] = v.get<std::string>();
    } else if (v.is_boolean()) {
      kv[k] = v.get<bool>() ? "true" : "false";
    } else if (v.is_number_float()) {
      kv[k] = format_double(v.get<double>());
    } else {
      kv[k] = v.dump();
    }
  }
  if (!j.contains("labels") || !j.at("labels").is_array() || j.at("labels").empty()) {
    throw ConfigError("missing config key 'labels'");
  }
  kv["label"] = "_";
  MosaicConfig c = config_from_map(kv);
  c.labels = j.at("labels").get<std::vector<std::string>>();
  c.validate();
  return c;
}

/// Reads either a key/value config file or a run manifest (.json, "config" object).
inline MosaicConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j.contains("config") ? j.at("config") : j);
  }
  return config_from_map(parse_key_values(in, path.string()), path.parent_path());
}

/// Key/value text that load_config reads back to the same config.
inline std::string config_to_text(const MosaicConfig& c) {
  const auto f = format_double;
  std::ostringstream os;
  os << "level = " << c.level << "\n"
     << "scale = " << c.scale << "\n"
     << "steps = " << c.steps << "\n"
     << "train_steps = " << c.train_steps << "\n"
     << "beta_start = " << f(c.beta_start) << "\n"
     << "beta_end = " << f(c.beta_end) << "\n"
     << "cfg_scale = " << f(c.cfg_scale) << "\n"
     << "w0 = " << f(c.w0) << "\n"
     << "gamma = " << f(c.gamma) << "\n";
  if (c.blur_sigma) {
    os << "blur_sigma = " << f(*c.blur_sigma) << "\n";
  } else {
    os << "blur_sigma = auto\n";
  }
  os << "objective = " << to_string(c.objective) << "\n"
     << "adain = " << (c.adain ? "true" : "false") << "\n"
     << "noise_mode = " << to_string(c.noise_mode) << "\n"
     << "parameterization = " << to_string(c.parameterization) << "\n"
     << "jacobian = " << to_string(c.jacobian) << "\n"
     << "step_order = " << to_string(c.order) << "\n"
     << "redenoise = " << (c.redenoise ? "true" : "false") << "\n"
     << "seed = " << c.seed << "\n";
  if (c.labels.size() == 1) os << "label = " << c.labels.front() << "\n";
  return os.str();
}

}  // namespace mosaicgen

#endif  // MOSAICGEN_CONFIG_HPP
