#include "baris/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "baris/checkpoint.hpp"

namespace baris {

SegModel SegModel::create(const RunConfig& cfg) {
  cfg.validate();
  SegModel m;
  m.cfg = cfg;
  EraConfig era = cfg.era;
  era.channels = cfg.decoder.channels;
  m.backbone = ToyBackbone<float>::create(cfg.decoder.channels, cfg.seed, cfg.era_enabled, era);
  auto dec_rng = stream_rng(cfg.seed, "decoder");
  m.decoder = DecoderParams<float>::create(cfg.decoder, dec_rng);
  if (cfg.freeze == FreezeMode::era) m.backbone.freeze_backbone();

  if (cfg.freeze == FreezeMode::era) m.backbone.collect_backbone(m.frozen, "backbone");
  else m.backbone.collect_backbone(m.trainable, "backbone");
  m.backbone.collect_adapters(m.trainable, "backbone");
  m.decoder.collect(m.trainable, "decoder");
  return m;
}

Var<float> SegModel::forward(Tape<float>& tape, const Var<float>& images) const {
  FeaturePyramid<float> pyr = backbone.forward(tape, images);
  Var<float> logits = decoder_forward(tape, pyr, cfg.decoder, decoder);
  const int h = static_cast<int>(images.val().shape[2]);
  const int w = static_cast<int>(images.val().shape[3]);
  if (logits.val().shape[2] == h && logits.val().shape[3] == w) return logits;
  return roi_align(tape, logits, kFullImageBox, h, w);
}

Tensor<float> union_mask(const SyntheticScene& scene) {
  const int64_t h = scene.image.shape[1], w = scene.image.shape[2];
  Tensor<float> u({1, h, w});
  for (const auto& m : scene.instance_masks)
    for (int64_t i = 0; i < u.numel(); ++i) u[i] = std::max(u[i], m[i]);
  return u;
}

namespace {

struct AdamState {
  std::vector<Tensor<float>> m, v;
};

void optimizer_step(const RunConfig& cfg, ParamList<float>& params, AdamState& state, int64_t t,
                    double lr) {
  if (cfg.optimizer == Optimizer::sgd) {
    for (auto& p : params) {
      auto& val = p.var.val();
      const auto& g = *p.var.grad;
      for (int64_t i = 0; i < val.numel(); ++i)
        val[i] -= static_cast<float>(lr) * g[i];
    }
    return;
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.05;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t k = 0; k < params.size(); ++k) {
    auto& val = params[k].var.val();
    const auto& g = *params[k].var.grad;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (int64_t i = 0; i < val.numel(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= static_cast<float>(lr * (mhat / (std::sqrt(vhat) + eps) + wd * val[i]));
    }
  }
}

Tensor<float> batch_images(const std::vector<const SyntheticScene*>& scenes) {
  const int64_t B = static_cast<int64_t>(scenes.size());
  const int64_t h = scenes[0]->image.shape[1], w = scenes[0]->image.shape[2];
  Tensor<float> t({B, 3, h, w});
  for (int64_t b = 0; b < B; ++b)
    std::copy(scenes[b]->image.data.begin(), scenes[b]->image.data.end(),
              t.data.begin() + static_cast<size_t>(b * 3 * h * w));
  return t;
}

Tensor<float> batch_targets(const std::vector<const SyntheticScene*>& scenes) {
  const int64_t B = static_cast<int64_t>(scenes.size());
  const int64_t h = scenes[0]->image.shape[1], w = scenes[0]->image.shape[2];
  Tensor<float> t({B, 1, h, w});
  for (int64_t b = 0; b < B; ++b) {
    Tensor<float> u = union_mask(*scenes[b]);
    std::copy(u.data.begin(), u.data.end(), t.data.begin() + static_cast<size_t>(b * h * w));
  }
  return t;
}

// Mask-head crop side for the boundary term. Divisible by the default scale.
constexpr int kRoiSide = 28;

// Bounding box of a binary (1, H, W) mask, expanded by a small margin and
// normalized to [0, 1].
kernels::RoiBox instance_box(const Tensor<float>& mask) {
  const int64_t h = mask.shape[1], w = mask.shape[2];
  int64_t r0 = h, r1 = -1, c0 = w, c1 = -1;
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      if (mask[r * w + c] != 0.0f) {
        r0 = std::min(r0, r); r1 = std::max(r1, r);
        c0 = std::min(c0, c); c1 = std::max(c1, c);
      }
  if (r1 < 0) return kFullImageBox;
  const double mr = std::max(2.0, 0.1 * static_cast<double>(r1 - r0 + 1));
  const double mc = std::max(2.0, 0.1 * static_cast<double>(c1 - c0 + 1));
  kernels::RoiBox box;
  box.y0 = std::max(0.0, (static_cast<double>(r0) - mr) / static_cast<double>(h));
  box.y1 = std::min(1.0, (static_cast<double>(r1) + 1.0 + mr) / static_cast<double>(h));
  box.x0 = std::max(0.0, (static_cast<double>(c0) - mc) / static_cast<double>(w));
  box.x1 = std::min(1.0, (static_cast<double>(c1) + 1.0 + mc) / static_cast<double>(w));
  return box;
}

}  // namespace

std::vector<MetricsRecord> train(const RunConfig& cfg, const std::filesystem::path& dataset,
                                 const std::filesystem::path& run_dir) {
  cfg.validate();
  auto dirs = list_scene_dirs(dataset);
  if (dirs.empty()) throw std::runtime_error("empty dataset: " + dataset.string());

  std::vector<SyntheticScene> scenes;
  scenes.reserve(dirs.size());
  for (const auto& d : dirs) scenes.push_back(load_scene(d));

  // 80/20 split by seed hash: order scenes by the hash, first 80% train.
  std::vector<size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return splitmix64(scenes[a].seed) < splitmix64(scenes[b].seed);
  });
  size_t n_train = (scenes.size() * 4) / 5;
  if (n_train == 0) n_train = scenes.size();
  std::vector<size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<size_t> val_idx(order.begin() + static_cast<long>(n_train), order.end());
  if (val_idx.empty()) val_idx = train_idx;

  SegModel model = SegModel::create(cfg);
  const uint64_t frozen_sum0 = param_checksum(model.frozen);

  AdamState state;
  if (cfg.optimizer == Optimizer::adamw) {
    for (const auto& p : model.trainable) {
      state.m.push_back(Tensor<float>::zeros(p.var.val().shape));
      state.v.push_back(Tensor<float>::zeros(p.var.val().shape));
    }
  }

  const int64_t bs = cfg.batch_size;
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train_idx.size()) + bs - 1) / bs;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = std::max<int64_t>(1, total_steps / 10);

  {
    const int side = static_cast<int>(scenes[0].image.shape[1]);
    int f4 = side / 32;
    for (int i = 0; i < cfg.decoder.num_refine_blocks; ++i) f4 *= 2;
    if (f4 != side)
      std::fprintf(stderr, "resize: decoder output %dx%d -> image %dx%d for the loss\n", f4, f4,
                   side, side);
  }

  std::filesystem::create_directories(run_dir);
  std::ofstream metrics_file(run_dir / "metrics.jsonl");
  if (!metrics_file)
    throw std::runtime_error("cannot write " + (run_dir / "metrics.jsonl").string());

  std::vector<MetricsRecord> records;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto shuffle_rng = stream_rng(cfg.seed, "shuffle-epoch-" + std::to_string(epoch));
    std::vector<size_t> idx = train_idx;
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(bs)) {
      std::vector<const SyntheticScene*> batch;
      for (size_t k = off; k < std::min(idx.size(), off + static_cast<size_t>(bs)); ++k)
        batch.push_back(&scenes[idx[k]]);

      Tape<float> tape;
      Var<float> images = make_constant(batch_images(batch));
      Var<float> logits = model.forward(tape, images);
      Var<float> targets = make_constant(batch_targets(batch));
      Var<float> loss = bce_with_logits(tape, logits, targets);
      // The boundary term works on per-instance crops around each object, the
      // way a mask head sees them, rather than on the scene-level map: whole
      // background scenes carry no boundary signal and only add pooling-block
      // artifacts. Skipped entirely at lambda = 0 so that trajectory is
      // bit-identical to ce_only.
      if (cfg.loss == LossKind::ce_plus_bace && cfg.bace.lambda != 0.0) {
        std::vector<Var<float>> roi_preds, roi_gts;
        for (size_t n = 0; n < batch.size(); ++n) {
          Var<float> scene_logits =
              slice_batch(tape, logits, static_cast<int64_t>(n), static_cast<int64_t>(n) + 1);
          for (const auto& m : batch[n]->instance_masks) {
            const kernels::RoiBox box = instance_box(m);
            roi_preds.push_back(roi_align(tape, scene_logits, box, kRoiSide, kRoiSide));
            Tensor<float> gm({1, 1, m.shape[1], m.shape[2]}, m.data);
            Tensor<float> crop = kernels::roi_align_forward(gm, box, kRoiSide, kRoiSide);
            for (auto& v : crop.data) v = v >= 0.5f ? 1.0f : 0.0f;
            roi_gts.push_back(make_constant(std::move(crop)));
          }
        }
        MaskBatch<float> rois{concat(tape, roi_preds, 0), concat(tape, roi_gts, 0)};
        Var<float> boundary = bace_loss(tape, rois, cfg.bace);
        loss = add(tape, loss, scale(tape, boundary, static_cast<float>(cfg.bace.lambda)));
      }
      const double lv = loss.val()[0];
      if (!std::isfinite(lv))
        throw DivergenceError(static_cast<int>(step),
                              "non-finite loss at step " + std::to_string(step));
      zero_grads(model.trainable);
      tape.backward(loss);
      ++step;
      // linear warmup, then cosine decay to zero over the remaining steps
      double lr_scale;
      if (step <= warmup_steps) {
        lr_scale = static_cast<double>(step) / static_cast<double>(warmup_steps);
      } else {
        const double progress = static_cast<double>(step - warmup_steps) /
                                static_cast<double>(std::max<int64_t>(1, total_steps - warmup_steps));
        lr_scale = 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, progress)));
      }
      const double lr = cfg.learning_rate * lr_scale;
      optimizer_step(cfg, model.trainable, state, step, lr);
      if (cfg.freeze == FreezeMode::era && param_checksum(model.frozen) != frozen_sum0)
        throw std::logic_error("frozen parameter changed at step " + std::to_string(step));
      loss_sum += lv;
      ++batches;
    }

    std::vector<Tensor<float>> preds, gts;
    for (size_t vi : val_idx) {
      Tape<float> tape;
      Var<float> images = make_constant(batch_images({&scenes[vi]}));
      Var<float> logits = model.forward(tape, images);
      preds.push_back(logits.val());
      Tensor<float> gt = union_mask(scenes[vi]);
      gts.push_back(Tensor<float>({1, 1, gt.shape[1], gt.shape[2]}, gt.data));
    }
    EvalResult ev = evaluate(preds, gts);

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.mask_iou = ev.mask_iou;
    rec.boundary_f = ev.boundary_f;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records.push_back(rec);

    nlohmann::json j = {{"epoch", rec.epoch},
                        {"train_loss", rec.train_loss},
                        {"mask_iou", rec.mask_iou},
                        {"boundary_f", rec.boundary_f}};
    metrics_file << j.dump() << "\n";
    metrics_file.flush();
  }

  ParamList<float> all = model.trainable;
  all.insert(all.end(), model.frozen.begin(), model.frozen.end());
  save_checkpoint(run_dir / "checkpoint", all);
  return records;
}

}  // namespace baris
