#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "baris/bace.hpp"
#include "baris/decoder.hpp"
#include "baris/era.hpp"
#include "baris/synthetic.hpp"

namespace baris {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Optimizer { sgd, adamw };
enum class LossKind { ce_only, ce_plus_bace };
enum class FreezeMode { none, era };

// Flat [section] key = value configuration. Every field has a default; file
// values and CLI flags layer on top via set().
struct RunConfig {
  // [train]
  int epochs = 10;
  int batch_size = 4;
  double learning_rate = 2e-2;
  Optimizer optimizer = Optimizer::adamw;
  uint64_t seed = 1;
  LossKind loss = LossKind::ce_only;
  FreezeMode freeze = FreezeMode::none;
  // [decoder]
  DecoderConfig decoder;
  // [era]
  bool era_enabled = false;
  EraConfig era;
  // [bace]
  BaceConfig bace;
  // [scene]
  SceneConfig scene;

  // Applies "section.key" = value; throws ConfigError on unknown key or bad
  // value. `where` (e.g. "cfg.ini:12") prefixes error messages.
  void set(const std::string& key, const std::string& value, const std::string& where);

  nlohmann::json to_json() const;
  void write_resolved(const std::filesystem::path& run_dir) const;
  void validate() const;
};

RunConfig parse_config_file(const std::filesystem::path& path);

}  // namespace baris
