#pragma once

#include "baris/decoder.hpp"
#include "baris/era.hpp"

namespace baris {

// Four conv+ReLU+pool stages producing a FeaturePyramid at strides 4/8/16/32
// with a common channel width. Downsampling uses max-pooling so every conv is
// a shape-preserving odd kernel. An optional ERA adapter is appended at the
// end of each stage.
template <typename T>
struct ToyBackbone {
  int channels = 16;
  Var<T> w[4], b[4];  // stage convs, 3x3, stride 1, pad 1
  bool with_era = false;
  EraConfig era_cfg;
  std::vector<EraParams<T>> era;  // one per stage when enabled
  bool frozen = false;            // backbone weights frozen (era tuning)

  static ToyBackbone create(int channels, uint64_t seed, bool with_era = false,
                            EraConfig era_cfg = {}) {
    ToyBackbone m;
    m.channels = channels;
    auto rng = stream_rng(seed, "backbone");
    int in_c = 3;
    for (int i = 0; i < 4; ++i) {
      m.w[i] = make_param(kaiming_uniform<T>({channels, in_c, 3, 3}, 9 * in_c, rng));
      m.b[i] = make_param(Tensor<T>::zeros({channels}));
      in_c = channels;
    }
    if (with_era) {
      m.with_era = true;
      era_cfg.channels = channels;
      m.era_cfg = era_cfg;
      auto era_rng = stream_rng(seed, "era");
      for (int i = 0; i < 4; ++i) m.era.push_back(EraParams<T>::create(era_cfg, era_rng));
    }
    return m;
  }

  // era mode: backbone convs lose their gradient buffers (the frozen marker),
  // adapters keep theirs.
  void freeze_backbone() {
    for (int i = 0; i < 4; ++i) {
      for (Var<T>* v : {&w[i], &b[i]}) {
        v->requires_grad = false;
        v->grad.reset();
      }
    }
    frozen = true;
  }

  FeaturePyramid<T> forward(Tape<T>& tape, const Var<T>& image) const {
    require_rank(image.val(), 4, "backbone input");
    if (image.val().shape[1] != 3)
      throw ShapeError("backbone: expected 3 input channels, got " +
                       std::to_string(image.val().shape[1]));
    const int pools[4] = {4, 2, 2, 2};
    Var<T> x = image;
    FeaturePyramid<T> pyr;
    Var<T>* levels[4] = {&pyr.f1, &pyr.f2, &pyr.f3, &pyr.f4};
    for (int i = 0; i < 4; ++i) {
      x = max_pool2d(tape, relu(tape, conv2d_same(tape, x, w[i], &b[i])), pools[i]);
      if (with_era) x = era_forward(tape, x, era[static_cast<size_t>(i)], era_cfg);
      *levels[i] = x;
    }
    return pyr;
  }

  void collect_backbone(ParamList<T>& out, const std::string& prefix) const {
    for (int i = 0; i < 4; ++i) {
      out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".w", w[i], "weight"});
      out.push_back({prefix + ".stage" + std::to_string(i + 1) + ".b", b[i], "bias"});
    }
  }

  void collect_adapters(ParamList<T>& out, const std::string& prefix) const {
    for (size_t i = 0; i < era.size(); ++i)
      era[i].collect(out, prefix + ".stage" + std::to_string(i + 1) + ".era");
  }
};

inline std::vector<ParamDesc> toy_backbone_param_descs(int channels) {
  std::vector<ParamDesc> d;
  int64_t in_c = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "backbone.stage" + std::to_string(i + 1);
    d.push_back({p + ".w", {channels, in_c, 3, 3}, "weight"});
    d.push_back({p + ".b", {channels}, "bias"});
    in_c = channels;
  }
  return d;
}

inline std::vector<ParamDesc> toy_era_param_descs(const EraConfig& cfg) {
  std::vector<ParamDesc> d;
  for (int i = 0; i < 4; ++i) {
    auto one = era_param_descs(cfg, "backbone.stage" + std::to_string(i + 1) + ".era");
    d.insert(d.end(), one.begin(), one.end());
  }
  return d;
}

}  // namespace baris
