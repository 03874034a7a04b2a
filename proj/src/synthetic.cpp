#include "baris/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "baris/rng.hpp"

namespace baris {

namespace {

float sample(Interval iv, std::mt19937_64& rng) {
  if (iv.hi <= iv.lo) return iv.lo;
  std::uniform_real_distribution<float> d(iv.lo, iv.hi);
  return d(rng);
}

struct ShapeSpec {
  bool ellipse = true;
  float cx = 0, cy = 0;       // center, pixels
  float rx = 0, ry = 0;       // radii (ellipse) or circumradius (polygon)
  float angle = 0;
  int sides = 3;              // polygon only
  float color[3] = {0, 0, 0};
};

// signed "inside" test on a supersampled point
bool inside(const ShapeSpec& s, float x, float y) {
  const float dx = x - s.cx, dy = y - s.cy;
  const float ca = std::cos(s.angle), sa = std::sin(s.angle);
  const float u = dx * ca + dy * sa;
  const float v = -dx * sa + dy * ca;
  if (s.ellipse) return (u * u) / (s.rx * s.rx) + (v * v) / (s.ry * s.ry) <= 1.0f;
  // convex regular polygon with circumradius rx
  const float two_pi = 6.28318530717958647692f;
  for (int i = 0; i < s.sides; ++i) {
    const float a0 = two_pi * i / s.sides;
    const float a1 = two_pi * (i + 1) / s.sides;
    const float x0 = s.rx * std::cos(a0), y0 = s.rx * std::sin(a0);
    const float x1 = s.rx * std::cos(a1), y1 = s.rx * std::sin(a1);
    if ((x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) < 0) return false;
  }
  return true;
}

// 4x4 supersampled coverage in [0, 1]
float coverage(const ShapeSpec& s, int px, int py) {
  int hit = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (inside(s, px + (j + 0.5f) / 4.0f, py + (i + 0.5f) / 4.0f)) ++hit;
  return hit / 16.0f;
}

void gaussian_blur_inplace(Tensor<float>& img, float sigma) {
  if (sigma <= 0.0f) return;
  const int64_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<float> k(static_cast<size_t>(2 * radius + 1));
  float sum = 0.0f;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5f * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  Tensor<float> tmp(img.shape);
  auto at = [&](Tensor<float>& t, int64_t c, int64_t y, int64_t x) -> float& {
    return t[(c * H + y) * W + x];
  };
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int64_t xx = std::clamp<int64_t>(x + i, 0, W - 1);
          acc += at(img, c, y, xx) * k[static_cast<size_t>(i + radius)];
        }
        at(tmp, c, y, x) = acc;
      }
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int64_t yy = std::clamp<int64_t>(y + i, 0, H - 1);
          acc += at(tmp, c, yy, x) * k[static_cast<size_t>(i + radius)];
        }
        at(img, c, y, x) = acc;
      }
}

}  // namespace

Tensor<float> apply_degradation(const Tensor<float>& clean, const DegradationParams& d,
                                uint64_t seed) {
  Tensor<float> img = clean;
  const int64_t H = img.shape[1], W = img.shape[2];
  const float atten[3] = {d.atten_r, d.atten_g, d.atten_b};
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < H * W; ++i) img[c * H * W + i] *= atten[c];
  gaussian_blur_inplace(img, d.scatter_blur_sigma);
  if (d.haze_strength > 0.0f) {
    const float veil[3] = {0.7f, 0.8f, 0.9f};
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < H * W; ++i)
        img[c * H * W + i] =
            (1.0f - d.haze_strength) * img[c * H * W + i] + d.haze_strength * veil[c];
  }
  if (d.noise_sigma > 0.0f) {
    auto rng = stream_rng(seed, "scene-noise");
    std::normal_distribution<float> noise(0.0f, d.noise_sigma);
    for (auto& v : img.data) v += noise(rng);
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

SyntheticScene generate_scene(uint64_t seed, const SceneConfig& cfg) {
  const int H = cfg.height, W = cfg.width;
  SyntheticScene scene;
  scene.seed = seed;

  auto rng = stream_rng(seed, "scene-shapes");
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);

  // gradient background between two dim colors
  scene.clean = Tensor<float>({3, H, W});
  float top[3], bot[3];
  for (int c = 0; c < 3; ++c) {
    top[c] = 0.05f + 0.3f * unit(rng);
    bot[c] = 0.05f + 0.3f * unit(rng);
  }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y) {
      const float t = H > 1 ? static_cast<float>(y) / (H - 1) : 0.0f;
      for (int x = 0; x < W; ++x)
        scene.clean[(c * H + y) * static_cast<int64_t>(W) + x] = (1 - t) * top[c] + t * bot[c];
    }

  std::uniform_int_distribution<int> count_dist(cfg.min_instances, cfg.max_instances);
  const int num_shapes = count_dist(rng);
  const float min_r = 0.08f * std::min(H, W);
  const float max_r = 0.22f * std::min(H, W);
  for (int k = 0; k < num_shapes; ++k) {
    ShapeSpec s;
    Tensor<float> mask({1, H, W});
    // resample until the binary mask has at least 16 foreground pixels
    for (int attempt = 0; attempt < 100; ++attempt) {
      s.ellipse = unit(rng) < 0.5f;
      s.cx = (0.15f + 0.7f * unit(rng)) * W;
      s.cy = (0.15f + 0.7f * unit(rng)) * H;
      s.rx = min_r + (max_r - min_r) * unit(rng);
      s.ry = s.ellipse ? min_r + (max_r - min_r) * unit(rng) : s.rx;
      s.angle = 3.14159265f * unit(rng);
      s.sides = 3 + static_cast<int>(unit(rng) * 4);  // 3..6
      for (int c = 0; c < 3; ++c) s.color[c] = 0.55f + 0.45f * unit(rng);
      int fg = 0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const float cov = coverage(s, x, y);
          mask[static_cast<int64_t>(y) * W + x] = cov >= 0.5f ? 1.0f : 0.0f;
          if (cov >= 0.5f) ++fg;
        }
      if (fg >= 16) break;
    }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float cov = coverage(s, x, y);
        if (cov <= 0.0f) continue;
        for (int c = 0; c < 3; ++c) {
          float& px = scene.clean[(static_cast<int64_t>(c) * H + y) * W + x];
          px = (1 - cov) * px + cov * s.color[c];
        }
      }
    scene.instance_masks.push_back(std::move(mask));
  }

  auto drng = stream_rng(seed, "scene-degrade");
  scene.degradation.atten_r = sample(cfg.atten_r, drng);
  scene.degradation.atten_g = sample(cfg.atten_g, drng);
  scene.degradation.atten_b = sample(cfg.atten_b, drng);
  scene.degradation.scatter_blur_sigma = sample(cfg.blur_sigma, drng);
  scene.degradation.haze_strength = sample(cfg.haze, drng);
  scene.degradation.noise_sigma = sample(cfg.noise_sigma, drng);
  scene.image = apply_degradation(scene.clean, scene.degradation, seed);
  return scene;
}

// ---------------------------------------------------------------------------
// image files

void save_ppm(const Tensor<float>& rgb, const std::filesystem::path& path) {
  const int64_t H = rgb.shape[1], W = rgb.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P6\n" << W << " " << H << "\n255\n";
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(rgb[(c * H + y) * W + x], 0.0f, 1.0f);
        const uint8_t b = static_cast<uint8_t>(std::lround(v * 255.0f));
        f.write(reinterpret_cast<const char*>(&b), 1);
      }
}

namespace {
void read_pnm_header(std::ifstream& f, const std::string& magic, int64_t& w, int64_t& h,
                     const std::filesystem::path& path) {
  std::string m;
  f >> m;
  if (m != magic) throw std::runtime_error("bad magic in " + path.string());
  int maxval;
  f >> w >> h >> maxval;
  if (maxval != 255) throw std::runtime_error("unsupported maxval in " + path.string());
  f.get();  // single whitespace after header
}
}  // namespace

Tensor<float> load_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  int64_t w, h;
  read_pnm_header(f, "P6", w, h, path);
  Tensor<float> rgb({3, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        uint8_t b;
        f.read(reinterpret_cast<char*>(&b), 1);
        rgb[(c * h + y) * w + x] = b / 255.0f;
      }
  if (!f) throw std::runtime_error("truncated " + path.string());
  return rgb;
}

void save_pgm(const Tensor<float>& mask, const std::filesystem::path& path) {
  const int64_t H = mask.shape[1], W = mask.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P5\n" << W << " " << H << "\n255\n";
  for (int64_t i = 0; i < H * W; ++i) {
    const uint8_t b = mask[i] >= 0.5f ? 255 : 0;
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
}

Tensor<float> load_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  int64_t w, h;
  read_pnm_header(f, "P5", w, h, path);
  Tensor<float> mask({1, h, w});
  for (int64_t i = 0; i < h * w; ++i) {
    uint8_t b;
    f.read(reinterpret_cast<char*>(&b), 1);
    mask[i] = b >= 128 ? 1.0f : 0.0f;
  }
  if (!f) throw std::runtime_error("truncated " + path.string());
  return mask;
}

// ---------------------------------------------------------------------------
// dataset

void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir);
  save_ppm(scene.image, dir / "image.ppm");
  for (size_t k = 0; k < scene.instance_masks.size(); ++k)
    save_pgm(scene.instance_masks[k], dir / ("mask_" + std::to_string(k) + ".pgm"));
  nlohmann::json meta;
  meta["seed"] = scene.seed;
  meta["num_instances"] = scene.instance_masks.size();
  meta["degradation"] = {{"atten_r", scene.degradation.atten_r},
                         {"atten_g", scene.degradation.atten_g},
                         {"atten_b", scene.degradation.atten_b},
                         {"scatter_blur_sigma", scene.degradation.scatter_blur_sigma},
                         {"haze_strength", scene.degradation.haze_strength},
                         {"noise_sigma", scene.degradation.noise_sigma}};
  std::ofstream f(dir / "meta.json");
  f << meta.dump(2) << "\n";
}

void generate_dataset(const std::filesystem::path& out, int count, uint64_t seed0,
                      const SceneConfig& cfg, int num_threads) {
  const auto scenes_dir = out / "scenes";
  std::filesystem::create_directories(scenes_dir);
  // each scene is a pure function of its seed; work split is irrelevant
  num_threads = std::max(1, num_threads);
  auto worker = [&](int tid) {
    for (int i = tid; i < count; i += num_threads) {
      const uint64_t seed = seed0 + static_cast<uint64_t>(i);
      SyntheticScene scene = generate_scene(seed, cfg);
      write_scene(scenes_dir / std::to_string(seed), scene);
    }
  };
  if (num_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < num_threads; ++t) threads.emplace_back(worker, t);
    for (auto& t : threads) t.join();
  }
  nlohmann::json manifest;
  manifest["count"] = count;
  manifest["seed0"] = seed0;
  manifest["height"] = cfg.height;
  manifest["width"] = cfg.width;
  std::ofstream f(out / "manifest.json");
  f << manifest.dump(2) << "\n";
}

SyntheticScene load_scene(const std::filesystem::path& dir) {
  SyntheticScene scene;
  scene.image = load_ppm(dir / "image.ppm");
  std::ifstream f(dir / "meta.json");
  if (!f) throw std::runtime_error("missing meta.json in " + dir.string());
  nlohmann::json meta = nlohmann::json::parse(f);
  scene.seed = meta["seed"];
  const size_t n = meta["num_instances"];
  for (size_t k = 0; k < n; ++k)
    scene.instance_masks.push_back(load_pgm(dir / ("mask_" + std::to_string(k) + ".pgm")));
  scene.degradation.atten_r = meta["degradation"]["atten_r"];
  scene.degradation.atten_g = meta["degradation"]["atten_g"];
  scene.degradation.atten_b = meta["degradation"]["atten_b"];
  scene.degradation.scatter_blur_sigma = meta["degradation"]["scatter_blur_sigma"];
  scene.degradation.haze_strength = meta["degradation"]["haze_strength"];
  scene.degradation.noise_sigma = meta["degradation"]["noise_sigma"];
  return scene;
}

std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& dataset) {
  std::vector<std::filesystem::path> dirs;
  const auto scenes = dataset / "scenes";
  if (!std::filesystem::exists(scenes))
    throw std::runtime_error("no scenes directory under " + dataset.string());
  for (const auto& e : std::filesystem::directory_iterator(scenes))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end(), [](const auto& a, const auto& b) {
    return std::stoull(a.filename().string()) < std::stoull(b.filename().string());
  });
  return dirs;
}

}  // namespace baris
