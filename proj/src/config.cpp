#include "baris/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace baris {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError(where + ": expected integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError(where + ": expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError(where + ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value, const std::string& where) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"train.epochs", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.epochs = parse_int(v, w); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.batch_size = parse_int(v, w); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.learning_rate = parse_double(v, w); }},
      {"train.optimizer", [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v == "sgd") c.optimizer = Optimizer::sgd;
         else if (v == "adamw") c.optimizer = Optimizer::adamw;
         else throw ConfigError(w + ": optimizer must be sgd|adamw, got '" + v + "'"); }},
      {"train.seed", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.seed = parse_u64(v, w); }},
      {"train.loss", [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v == "ce_only") c.loss = LossKind::ce_only;
         else if (v == "ce_plus_bace") c.loss = LossKind::ce_plus_bace;
         else throw ConfigError(w + ": loss must be ce_only|ce_plus_bace, got '" + v + "'"); }},
      {"train.freeze", [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v == "none") c.freeze = FreezeMode::none;
         else if (v == "era") c.freeze = FreezeMode::era;
         else throw ConfigError(w + ": freeze must be none|era, got '" + v + "'"); }},
      {"decoder.num_refine_blocks", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.decoder.num_refine_blocks = parse_int(v, w); }},
      {"decoder.channels", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.decoder.channels = parse_int(v, w); }},
      {"decoder.num_classes", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.decoder.num_classes = parse_int(v, w); }},
      {"decoder.ffn_hidden_ratio", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.decoder.ffn_hidden_ratio = parse_int(v, w); }},
      {"era.enabled", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.era_enabled = parse_bool(v, w); }},
      {"era.gamma", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.era.gamma = parse_int(v, w); }},
      {"era.num_envs", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.era.num_envs = parse_int(v, w); }},
      {"era.ca_reduction", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.era.ca_reduction = parse_int(v, w); }},
      {"bace.scale", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.bace.scale = parse_int(v, w); }},
      {"bace.lambda", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.bace.lambda = parse_double(v, w); }},
      {"bace.pool", [](RunConfig& c, const std::string& v, const std::string& w) {
         if (v == "max") c.bace.pool = BacePool::max;
         else if (v == "avg") c.bace.pool = BacePool::avg;
         else throw ConfigError(w + ": pool must be max|avg, got '" + v + "'"); }},
      {"scene.height", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.height = parse_int(v, w); }},
      {"scene.width", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.width = parse_int(v, w); }},
      {"scene.min_instances", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.min_instances = parse_int(v, w); }},
      {"scene.max_instances", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.max_instances = parse_int(v, w); }},
      {"scene.atten_r_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_r.lo = (float)parse_double(v, w); }},
      {"scene.atten_r_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_r.hi = (float)parse_double(v, w); }},
      {"scene.atten_g_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_g.lo = (float)parse_double(v, w); }},
      {"scene.atten_g_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_g.hi = (float)parse_double(v, w); }},
      {"scene.atten_b_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_b.lo = (float)parse_double(v, w); }},
      {"scene.atten_b_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.atten_b.hi = (float)parse_double(v, w); }},
      {"scene.blur_sigma_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.blur_sigma.lo = (float)parse_double(v, w); }},
      {"scene.blur_sigma_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.blur_sigma.hi = (float)parse_double(v, w); }},
      {"scene.haze_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.haze.lo = (float)parse_double(v, w); }},
      {"scene.haze_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.haze.hi = (float)parse_double(v, w); }},
      {"scene.noise_sigma_lo", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.noise_sigma.lo = (float)parse_double(v, w); }},
      {"scene.noise_sigma_hi", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.scene.noise_sigma.hi = (float)parse_double(v, w); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError(where + ": unknown key '" + key + "'");
  it->second(*this, value, where);
}

void RunConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (decoder.num_refine_blocks < 1) throw ConfigError("decoder.num_refine_blocks must be >= 1");
  if (decoder.channels < 1) throw ConfigError("decoder.channels must be >= 1");
  if (bace.scale < 1) throw ConfigError("bace.scale must be >= 1");
  if (freeze == FreezeMode::era && !era_enabled)
    throw ConfigError("train.freeze = era requires era.enabled = true");
  if (era_enabled) {
    EraConfig e = era;
    e.channels = decoder.channels;
    e.compressed();  // throws on bad gamma
    if (e.num_envs < 1) throw ConfigError("era.num_envs must be >= 1");
  }
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + ": malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any [section]");
    cfg.set(section + "." + key, value, where);
  }
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["train"] = {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"optimizer", optimizer == Optimizer::sgd ? "sgd" : "adamw"},
      {"seed", seed},
      {"loss", loss == LossKind::ce_only ? "ce_only" : "ce_plus_bace"},
      {"freeze", freeze == FreezeMode::none ? "none" : "era"},
  };
  j["decoder"] = {
      {"num_refine_blocks", decoder.num_refine_blocks},
      {"channels", decoder.channels},
      {"num_classes", decoder.num_classes},
      {"ffn_hidden_ratio", decoder.ffn_hidden_ratio},
  };
  j["era"] = {
      {"enabled", era_enabled},
      {"gamma", era.gamma},
      {"num_envs", era.num_envs},
      {"ca_reduction", era.ca_reduction},
  };
  j["bace"] = {
      {"scale", bace.scale},
      {"lambda", bace.lambda},
      {"pool", bace.pool == BacePool::max ? "max" : "avg"},
  };
  j["scene"] = {
      {"height", scene.height},
      {"width", scene.width},
      {"min_instances", scene.min_instances},
      {"max_instances", scene.max_instances},
      {"atten_r_lo", scene.atten_r.lo}, {"atten_r_hi", scene.atten_r.hi},
      {"atten_g_lo", scene.atten_g.lo}, {"atten_g_hi", scene.atten_g.hi},
      {"atten_b_lo", scene.atten_b.lo}, {"atten_b_hi", scene.atten_b.hi},
      {"blur_sigma_lo", scene.blur_sigma.lo}, {"blur_sigma_hi", scene.blur_sigma.hi},
      {"haze_lo", scene.haze.lo}, {"haze_hi", scene.haze.hi},
      {"noise_sigma_lo", scene.noise_sigma.lo}, {"noise_sigma_hi", scene.noise_sigma.hi},
  };
  return j;
}

void RunConfig::write_resolved(const std::filesystem::path& run_dir) const {
  std::filesystem::create_directories(run_dir);
  std::ofstream f(run_dir / "resolved.json");
  if (!f) throw ConfigError("cannot write " + (run_dir / "resolved.json").string());
  f << to_json().dump(2) << "\n";
}

}  // namespace baris
