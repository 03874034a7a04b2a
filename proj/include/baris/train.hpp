#pragma once

#include <filesystem>
#include <vector>

#include "baris/backbone.hpp"
#include "baris/bace.hpp"
#include "baris/config.hpp"
#include "baris/metrics.hpp"
#include "baris/synthetic.hpp"

namespace baris {

struct MetricsRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double mask_iou = 0.0;
  double boundary_f = 0.0;
  double wall_seconds = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& msg)
      : std::runtime_error(msg), step_(step) {}
  int step() const { return step_; }

 private:
  int step_ = 0;
};

// Backbone + decoder with the freeze mode already applied. `trainable` and
// `frozen` partition the parameters.
struct SegModel {
  ToyBackbone<float> backbone;
  DecoderParams<float> decoder;
  RunConfig cfg;
  ParamList<float> trainable;
  ParamList<float> frozen;

  static SegModel create(const RunConfig& cfg);
  Var<float> forward(Tape<float>& tape, const Var<float>& images) const;
};

// Runs the full loop: 80/20 split by seed hash, per-epoch held-out eval,
// metrics.jsonl + final checkpoint under run_dir. Throws DivergenceError on a
// non-finite loss. The scene masks are merged into one scene-level foreground
// mask per image; wall_seconds is reported in the returned records but kept
// out of metrics.jsonl so identical configs give byte-identical files.
std::vector<MetricsRecord> train(const RunConfig& cfg, const std::filesystem::path& dataset,
                                 const std::filesystem::path& run_dir);

Tensor<float> union_mask(const SyntheticScene& scene);

}  // namespace baris
