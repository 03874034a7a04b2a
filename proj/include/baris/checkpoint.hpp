#pragma once

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "baris/params.hpp"
#include "baris/tensor_io.hpp"

namespace baris {

// Checkpoint layout: one BKT1 file per tensor plus manifest.json mapping
// parameter names to files and tags.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamList<T>& params) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  int idx = 0;
  for (const auto& p : params) {
    const std::string file = "t" + std::to_string(idx++) + ".bkt";
    save_bkt1(p.var.val(), (dir / file).string());
    manifest["tensors"][p.name] = {{"file", file}, {"tag", p.tag}};
  }
  std::ofstream f(dir / "manifest.json");
  f << manifest.dump(2) << "\n";
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, ParamList<T>& params) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw std::runtime_error("missing manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(f);
  for (auto& p : params) {
    if (!manifest["tensors"].contains(p.name))
      throw std::runtime_error("checkpoint missing parameter " + p.name);
    const std::string file = manifest["tensors"][p.name]["file"];
    Tensor<T> t = load_bkt1<T>((dir / file).string());
    require_same_shape(t, p.var.val(), ("checkpoint parameter " + p.name).c_str());
    p.var.val() = std::move(t);
  }
}

}  // namespace baris
