#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "baris/tensor.hpp"

namespace baris {

// Per-scene degradation knobs. Applied after clean rendering, so ground-truth
// masks stay exact. Red is suppressed most, as underwater attenuation does.
struct DegradationParams {
  float atten_r = 1.0f, atten_g = 1.0f, atten_b = 1.0f;
  float scatter_blur_sigma = 0.0f;
  float haze_strength = 0.0f;  // in [0, 1]
  float noise_sigma = 0.0f;
};

struct Interval {
  float lo = 0.0f, hi = 0.0f;
};

struct SceneConfig {
  int height = 64, width = 64;
  int min_instances = 1, max_instances = 5;
  Interval atten_r{0.2f, 0.5f};
  Interval atten_g{0.5f, 0.8f};
  Interval atten_b{0.7f, 1.0f};
  Interval blur_sigma{0.5f, 1.5f};
  Interval haze{0.1f, 0.3f};
  Interval noise_sigma{0.01f, 0.03f};
};

struct SyntheticScene {
  Tensor<float> image;                      // (3, H, W) in [0, 1], degraded
  Tensor<float> clean;                      // (3, H, W) before degradation
  std::vector<Tensor<float>> instance_masks;  // each (1, H, W), binary
  uint64_t seed = 0;
  DegradationParams degradation;
};

// Renders 1..max_instances anti-aliased ellipses/polygons on a gradient
// background, then applies attenuation -> blur -> haze -> noise. Fully
// determined by the seed.
SyntheticScene generate_scene(uint64_t seed, const SceneConfig& cfg);

Tensor<float> apply_degradation(const Tensor<float>& clean, const DegradationParams& d,
                                uint64_t seed);

// P6 / P5 image files
void save_ppm(const Tensor<float>& rgb, const std::filesystem::path& path);
Tensor<float> load_ppm(const std::filesystem::path& path);
void save_pgm(const Tensor<float>& mask, const std::filesystem::path& path);
Tensor<float> load_pgm(const std::filesystem::path& path);

// Dataset layout: <out>/scenes/<seed>/image.ppm, mask_<k>.pgm, meta.json
// plus <out>/manifest.json. Thread-count independent for any num_threads.
void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene);
void generate_dataset(const std::filesystem::path& out, int count, uint64_t seed0,
                      const SceneConfig& cfg, int num_threads = 1);
SyntheticScene load_scene(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& dataset);

}  // namespace baris
