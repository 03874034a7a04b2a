#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "baris/checkpoint.hpp"
#include "baris/synthetic.hpp"
#include "baris/train.hpp"

using namespace baris;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("baris_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// small, fast configuration shared by the training tests
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.decoder.channels = 4;
  cfg.decoder.num_refine_blocks = 1;
  cfg.scene.height = 32;
  cfg.scene.width = 32;
  return cfg;
}

}  // namespace

TEST_CASE("scene generation is seed-deterministic") {
  SceneConfig cfg;
  SyntheticScene a = generate_scene(42, cfg);
  SyntheticScene b = generate_scene(42, cfg);
  SyntheticScene c = generate_scene(43, cfg);
  REQUIRE(a.image.shape == b.image.shape);
  for (int64_t i = 0; i < a.image.numel(); ++i) CHECK(a.image[i] == b.image[i]);
  REQUIRE(a.instance_masks.size() == b.instance_masks.size());
  for (size_t k = 0; k < a.instance_masks.size(); ++k)
    for (int64_t i = 0; i < a.instance_masks[k].numel(); ++i)
      CHECK(a.instance_masks[k][i] == b.instance_masks[k][i]);
  double diff = 0.0;
  for (int64_t i = 0; i < a.image.numel(); ++i)
    diff = std::max(diff, std::abs(static_cast<double>(a.image[i]) - c.image[i]));
  CHECK(diff > 1e-3);
}

TEST_CASE("identity degradation leaves the clean render untouched") {
  SceneConfig cfg;
  SyntheticScene s = generate_scene(7, cfg);
  DegradationParams none;  // unit attenuation, no blur / haze / noise
  Tensor<float> out = apply_degradation(s.clean, none, 7);
  for (int64_t i = 0; i < s.clean.numel(); ++i) CHECK(out[i] == s.clean[i]);
}

TEST_CASE("attenuation suppresses the red channel most") {
  SceneConfig cfg;
  int red_weaker = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticScene s = generate_scene(seed, cfg);
    const int64_t plane = int64_t(cfg.height) * cfg.width;
    double clean_r = 0.0, deg_r = 0.0, clean_b = 0.0, deg_b = 0.0;
    for (int64_t i = 0; i < plane; ++i) {
      clean_r += s.clean[i];
      deg_r += s.image[i];
      clean_b += s.clean[2 * plane + i];
      deg_b += s.image[2 * plane + i];
    }
    // haze shifts both channels, but red keeps proportionally less signal
    if (deg_r / clean_r < deg_b / clean_b) ++red_weaker;
  }
  CHECK(red_weaker >= 18);
}

TEST_CASE("stronger noise moves the image further from clean") {
  SceneConfig cfg;
  double acc_lo = 0.0, acc_hi = 0.0;
  for (uint64_t seed = 100; seed < 150; ++seed) {
    SyntheticScene s = generate_scene(seed, cfg);
    DegradationParams lo, hi;
    lo.noise_sigma = 0.0f;
    hi.noise_sigma = 0.1f;
    Tensor<float> a = apply_degradation(s.clean, lo, seed);
    Tensor<float> b = apply_degradation(s.clean, hi, seed);
    for (int64_t i = 0; i < s.clean.numel(); ++i) {
      acc_lo += std::abs(static_cast<double>(a[i]) - s.clean[i]);
      acc_hi += std::abs(static_cast<double>(b[i]) - s.clean[i]);
    }
  }
  CHECK(acc_hi > acc_lo);
}

TEST_CASE("union mask is the elementwise maximum of the instances") {
  SceneConfig cfg;
  SyntheticScene s = generate_scene(11, cfg);
  Tensor<float> u = union_mask(s);
  REQUIRE(u.shape == s.instance_masks[0].shape);
  for (int64_t i = 0; i < u.numel(); ++i) {
    float m = 0.0f;
    for (const auto& inst : s.instance_masks) m = std::max(m, inst[i]);
    CHECK(u[i] == m);
  }
}

TEST_CASE("metric oracles") {
  SUBCASE("perfect prediction") {
    SceneConfig cfg;
    SyntheticScene s = generate_scene(13, cfg);
    Tensor<float> gt = union_mask(s);
    CHECK(mask_iou(gt, gt) == 1.0);
    CHECK(boundary_f(gt, gt) == 1.0);
  }
  SUBCASE("complement prediction has zero overlap") {
    Tensor<float> gt({1, 8, 8});
    for (int64_t i = 0; i < 64; ++i) gt[i] = (i % 2 == 0) ? 1.0f : 0.0f;
    Tensor<float> inv(gt.shape);
    for (int64_t i = 0; i < 64; ++i) inv[i] = 1.0f - gt[i];
    CHECK(mask_iou(inv, gt) == 0.0);
  }
  SUBCASE("empty versus empty is perfect, empty versus full is not") {
    Tensor<float> empty = Tensor<float>::zeros({1, 8, 8});
    Tensor<float> full = Tensor<float>::full({1, 8, 8}, 1.0f);
    CHECK(mask_iou(empty, empty) == 1.0);
    CHECK(boundary_f(empty, empty) == 1.0);
    CHECK(mask_iou(full, empty) == 0.0);
    CHECK(boundary_f(full, empty) == 0.0);
  }
  SUBCASE("one-pixel shift against the brute-force definition") {
    // 3x3 square at (2,2) vs the same square shifted right by one. Every
    // boundary pixel of one mask is within distance 1 of the other's
    // boundary, so F = 1 at tolerance 1 but not at tolerance 0.
    Tensor<float> a = Tensor<float>::zeros({1, 8, 8});
    Tensor<float> b = Tensor<float>::zeros({1, 8, 8});
    for (int64_t y = 2; y < 5; ++y)
      for (int64_t x = 2; x < 5; ++x) {
        a[y * 8 + x] = 1.0f;
        b[y * 8 + x + 1] = 1.0f;
      }
    const double iou = mask_iou(a, b);
    CHECK(iou == doctest::Approx(6.0 / 12.0).epsilon(1e-12));
    CHECK(boundary_f(a, b, 1.0) == 1.0);
    CHECK(boundary_f(a, b, 0.0) < 1.0);
  }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  fs::path data = temp_dir("lr0_data");
  fs::path run = temp_dir("lr0_run");
  RunConfig cfg = tiny_config();
  cfg.learning_rate = 0.0;
  generate_dataset(data, 6, 50, cfg.scene);

  SegModel before = SegModel::create(cfg);
  auto records = train(cfg, data, run);
  CHECK(records.size() == 1);
  CHECK(fs::exists(run / "metrics.jsonl"));

  SegModel after = SegModel::create(cfg);
  ParamList<float> restored;
  after.backbone.collect_backbone(restored, "backbone");
  after.decoder.collect(restored, "decoder");
  load_checkpoint(run / "checkpoint", restored);
  ParamList<float> fresh;
  before.backbone.collect_backbone(fresh, "backbone");
  before.decoder.collect(fresh, "decoder");
  CHECK(param_checksum(restored) == param_checksum(fresh));
}

TEST_CASE("lambda zero bace training matches ce-only byte for byte") {
  fs::path data = temp_dir("l0_data");
  RunConfig base = tiny_config();
  base.epochs = 2;
  generate_dataset(data, 6, 60, base.scene);

  fs::path run_ce = temp_dir("l0_run_ce");
  RunConfig ce = base;
  ce.loss = LossKind::ce_only;
  train(ce, data, run_ce);

  fs::path run_bace = temp_dir("l0_run_bace");
  RunConfig bace = base;
  bace.loss = LossKind::ce_plus_bace;
  bace.bace.lambda = 0.0;
  train(bace, data, run_bace);

  CHECK(slurp(run_ce / "metrics.jsonl") == slurp(run_bace / "metrics.jsonl"));
}

TEST_CASE("frozen backbone survives training untouched") {
  fs::path data = temp_dir("freeze_data");
  fs::path run = temp_dir("freeze_run");
  RunConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.era_enabled = true;
  cfg.era.gamma = 2;
  cfg.freeze = FreezeMode::era;
  generate_dataset(data, 6, 70, cfg.scene);
  train(cfg, data, run);  // train() itself asserts the frozen checksum per step

  // reload the checkpoint and compare the backbone to a fresh construction
  SegModel fresh = SegModel::create(cfg);
  ParamList<float> restored;
  fresh.backbone.collect_backbone(restored, "backbone");
  load_checkpoint(run / "checkpoint", restored);
  SegModel ref = SegModel::create(cfg);
  ParamList<float> expect;
  ref.backbone.collect_backbone(expect, "backbone");
  CHECK(param_checksum(restored) == param_checksum(expect));
}

TEST_CASE("fresh adapters do not change the model logits") {
  RunConfig plain = tiny_config();
  RunConfig adapted = tiny_config();
  adapted.era_enabled = true;
  adapted.era.gamma = 2;
  SegModel a = SegModel::create(plain);
  SegModel b = SegModel::create(adapted);

  SceneConfig scfg = plain.scene;
  SyntheticScene s = generate_scene(5, scfg);
  Tensor<float> batch({1, 3, scfg.height, scfg.width});
  std::copy(s.image.data.begin(), s.image.data.end(), batch.data.begin());
  Tape<float> t1, t2;
  Tensor<float> la = a.forward(t1, make_constant(batch)).val();
  Tensor<float> lb = b.forward(t2, make_constant(batch)).val();
  REQUIRE(la.shape == lb.shape);
  for (int64_t i = 0; i < la.numel(); ++i) CHECK(la[i] == lb[i]);
}
