#pragma once

#include <cstdio>

#include "baris/ops.hpp"
#include "baris/params.hpp"

namespace baris {

// Backbone stage outputs at strides 4/8/16/32 with a common channel width.
template <typename T>
struct FeaturePyramid {
  Var<T> f1, f2, f3, f4;

  void validate() const {
    const auto& s1 = f1.val().shape;
    const Var<T>* levels[] = {&f2, &f3, &f4};
    for (int i = 0; i < 3; ++i) {
      const auto& s = levels[i]->val().shape;
      if (s[1] != s1[1])
        throw ShapeError("pyramid: level " + std::to_string(i + 2) + " has " +
                         std::to_string(s[1]) + " channels, expected " + std::to_string(s1[1]));
      const int64_t div = int64_t(1) << (i + 1);
      if (s[2] * div != s1[2] || s[3] * div != s1[3])
        throw ShapeError("pyramid: level " + std::to_string(i + 2) + " spatial " +
                         shape_str(s) + " does not halve from f1 " + shape_str(s1));
    }
  }
};

// Depthwise k x k followed by pointwise 1 x 1.
template <typename T>
struct DsConv {
  Var<T> dw_w, dw_b, pw_w, pw_b;

  static DsConv create(int in_c, int out_c, int k, std::mt19937_64& rng) {
    DsConv p;
    p.dw_w = make_param(kaiming_uniform<T>({in_c, 1, k, k}, k * k, rng));
    p.dw_b = make_param(Tensor<T>::zeros({in_c}));
    p.pw_w = make_param(kaiming_uniform<T>({out_c, in_c, 1, 1}, in_c, rng));
    p.pw_b = make_param(Tensor<T>::zeros({out_c}));
    return p;
  }

  Var<T> forward(Tape<T>& tape, const Var<T>& x) const {
    Var<T> mid = conv2d_same(tape, x, dw_w, &dw_b, static_cast<int>(x.val().shape[1]));
    return conv2d(tape, mid, pw_w, &pw_b, 1, 0, 0, 1);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".dw_w", dw_w, "weight"});
    out.push_back({prefix + ".dw_b", dw_b, "bias"});
    out.push_back({prefix + ".pw_w", pw_w, "weight"});
    out.push_back({prefix + ".pw_b", pw_b, "bias"});
  }
};

template <typename T>
struct MsgrnParams {
  DsConv<T> dsconv[4];        // per pyramid stage
  Var<T> fuse_w, fuse_b;      // 1x1, 4C -> C
  Var<T> attn_w, attn_b;      // 3x3, C -> C
  Var<T> attn_ln_g, attn_ln_b;
  Var<T> v_w, v_b;            // per-pixel linear, C -> C
  DsConv<T> gate_dsconv;      // on X'_1
  Var<T> ffn_ln_g, ffn_ln_b;
  Var<T> ffn_w1, ffn_b1;      // C -> hidden
  Var<T> ffn_w2, ffn_b2;      // hidden -> C

  static MsgrnParams create(int c, int ffn_hidden, std::mt19937_64& rng) {
    MsgrnParams p;
    for (int i = 0; i < 4; ++i) p.dsconv[i] = DsConv<T>::create(c, c, 3, rng);
    p.fuse_w = make_param(kaiming_uniform<T>({c, 4 * c, 1, 1}, 4 * c, rng));
    p.fuse_b = make_param(Tensor<T>::zeros({c}));
    p.attn_w = make_param(kaiming_uniform<T>({c, c, 3, 3}, 9 * c, rng));
    p.attn_b = make_param(Tensor<T>::zeros({c}));
    p.attn_ln_g = make_param(Tensor<T>::full({c}, T(1)));
    p.attn_ln_b = make_param(Tensor<T>::zeros({c}));
    p.v_w = make_param(kaiming_uniform<T>({c, c, 1, 1}, c, rng));
    p.v_b = make_param(Tensor<T>::zeros({c}));
    p.gate_dsconv = DsConv<T>::create(c, c, 3, rng);
    p.ffn_ln_g = make_param(Tensor<T>::full({c}, T(1)));
    p.ffn_ln_b = make_param(Tensor<T>::zeros({c}));
    p.ffn_w1 = make_param(kaiming_uniform<T>({ffn_hidden, c, 1, 1}, c, rng));
    p.ffn_b1 = make_param(Tensor<T>::zeros({ffn_hidden}));
    p.ffn_w2 = make_param(kaiming_uniform<T>({c, ffn_hidden, 1, 1}, ffn_hidden, rng));
    p.ffn_b2 = make_param(Tensor<T>::zeros({c}));
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (int i = 0; i < 4; ++i) dsconv[i].collect(out, prefix + ".dsconv" + std::to_string(i + 1));
    out.push_back({prefix + ".fuse_w", fuse_w, "weight"});
    out.push_back({prefix + ".fuse_b", fuse_b, "bias"});
    out.push_back({prefix + ".attn_w", attn_w, "weight"});
    out.push_back({prefix + ".attn_b", attn_b, "bias"});
    out.push_back({prefix + ".attn_ln_g", attn_ln_g, "norm"});
    out.push_back({prefix + ".attn_ln_b", attn_ln_b, "norm"});
    out.push_back({prefix + ".v_w", v_w, "weight"});
    out.push_back({prefix + ".v_b", v_b, "bias"});
    gate_dsconv.collect(out, prefix + ".gate");
    out.push_back({prefix + ".ffn_ln_g", ffn_ln_g, "norm"});
    out.push_back({prefix + ".ffn_ln_b", ffn_ln_b, "norm"});
    out.push_back({prefix + ".ffn_w1", ffn_w1, "weight"});
    out.push_back({prefix + ".ffn_b1", ffn_b1, "bias"});
    out.push_back({prefix + ".ffn_w2", ffn_w2, "weight"});
    out.push_back({prefix + ".ffn_b2", ffn_b2, "bias"});
  }
};

template <typename T>
struct DsuParams {
  Var<T> dw3_w, dw3_b, dw5_w, dw5_b, dw7_w, dw7_b;  // depthwise, shape-preserving
  Var<T> expand_w, expand_b;                        // 1x1, C -> 4C
  static constexpr int shuffle_factor = 2;

  static DsuParams create(int c, std::mt19937_64& rng) {
    DsuParams p;
    p.dw3_w = make_param(kaiming_uniform<T>({c, 1, 3, 3}, 9, rng));
    p.dw3_b = make_param(Tensor<T>::zeros({c}));
    p.dw5_w = make_param(kaiming_uniform<T>({c, 1, 5, 5}, 25, rng));
    p.dw5_b = make_param(Tensor<T>::zeros({c}));
    p.dw7_w = make_param(kaiming_uniform<T>({c, 1, 7, 7}, 49, rng));
    p.dw7_b = make_param(Tensor<T>::zeros({c}));
    p.expand_w = make_param(kaiming_uniform<T>({4 * c, c, 1, 1}, c, rng));
    p.expand_b = make_param(Tensor<T>::zeros({4 * c}));
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".dw3_w", dw3_w, "weight"});
    out.push_back({prefix + ".dw3_b", dw3_b, "bias"});
    out.push_back({prefix + ".dw5_w", dw5_w, "weight"});
    out.push_back({prefix + ".dw5_b", dw5_b, "bias"});
    out.push_back({prefix + ".dw7_w", dw7_w, "weight"});
    out.push_back({prefix + ".dw7_b", dw7_b, "bias"});
    out.push_back({prefix + ".expand_w", expand_w, "weight"});
    out.push_back({prefix + ".expand_b", expand_b, "bias"});
  }
};

struct DecoderConfig {
  int num_refine_blocks = 3;
  int channels = 16;
  int num_classes = 1;
  int ffn_hidden_ratio = 2;
};

template <typename T>
struct DecoderParams {
  std::vector<MsgrnParams<T>> msgrn;
  std::vector<DsuParams<T>> dsu;
  Var<T> head_w, head_b;  // 1x1, C -> num_classes

  static DecoderParams create(const DecoderConfig& cfg, std::mt19937_64& rng) {
    if (cfg.num_refine_blocks < 1)
      throw std::invalid_argument("decoder: num_refine_blocks must be >= 1");
    DecoderParams p;
    const int c = cfg.channels;
    for (int i = 0; i < cfg.num_refine_blocks; ++i) {
      p.msgrn.push_back(MsgrnParams<T>::create(c, cfg.ffn_hidden_ratio * c, rng));
      p.dsu.push_back(DsuParams<T>::create(c, rng));
    }
    p.head_w = make_param(kaiming_uniform<T>({cfg.num_classes, c, 1, 1}, c, rng));
    p.head_b = make_param(Tensor<T>::zeros({cfg.num_classes}));
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (size_t i = 0; i < msgrn.size(); ++i) {
      msgrn[i].collect(out, prefix + ".block" + std::to_string(i) + ".msgrn");
      dsu[i].collect(out, prefix + ".block" + std::to_string(i) + ".dsu");
    }
    out.push_back({prefix + ".head_w", head_w, "weight"});
    out.push_back({prefix + ".head_b", head_b, "bias"});
  }
};

// One MSGRN pass: multi-scale extraction, resampling to the working
// resolution, gated attention, FFN, residual to X_4.
template <typename T>
Var<T> msgrn_forward(Tape<T>& tape, const FeaturePyramid<T>& pyr, const Var<T>& f4_i,
                     const MsgrnParams<T>& p) {
  const int64_t C = f4_i.val().shape[1];
  if (C != pyr.f1.val().shape[1])
    throw ShapeError("msgrn: channel mismatch between f4 stage input (" + std::to_string(C) +
                     ") and pyramid (" + std::to_string(pyr.f1.val().shape[1]) + ")");
  const int h = static_cast<int>(f4_i.val().shape[2]);
  const int w = static_cast<int>(f4_i.val().shape[3]);
  if (h > pyr.f1.val().shape[2] || w > pyr.f1.val().shape[3])
    std::fprintf(stderr,
                 "advisory: msgrn resampling target %dx%d exceeds f1 resolution %lldx%lld\n", h, w,
                 static_cast<long long>(pyr.f1.val().shape[2]),
                 static_cast<long long>(pyr.f1.val().shape[3]));

  Var<T> x1 = p.dsconv[0].forward(tape, pyr.f1);
  Var<T> x2 = p.dsconv[1].forward(tape, pyr.f2);
  Var<T> x3 = p.dsconv[2].forward(tape, pyr.f3);
  Var<T> x4 = p.dsconv[3].forward(tape, f4_i);

  Var<T> r1 = roi_align(tape, x1, kFullImageBox, h, w);
  Var<T> r2 = roi_align(tape, x2, kFullImageBox, h, w);
  Var<T> r3 = roi_align(tape, x3, kFullImageBox, h, w);

  Var<T> x = concat(tape, {x4, r1, r2, r3}, 1);
  Var<T> xhat = conv2d(tape, x, p.fuse_w, &p.fuse_b, 1, 0, 0, 1);
  Var<T> y = layer_norm(tape, conv2d_same(tape, xhat, p.attn_w, &p.attn_b), p.attn_ln_g,
                        p.attn_ln_b, T(1e-5), 1);
  Var<T> v = conv2d(tape, xhat, p.v_w, &p.v_b, 1, 0, 0, 1);
  Var<T> gate = p.gate_dsconv.forward(tape, r1);
  Var<T> zhat = hadamard(tape, sigmoid(tape, gate), hadamard(tape, y, v));
  Var<T> mlp = conv2d(tape,
                      gelu(tape, conv2d(tape,
                                        layer_norm(tape, zhat, p.ffn_ln_g, p.ffn_ln_b, T(1e-5), 1),
                                        p.ffn_w1, &p.ffn_b1, 1, 0, 0, 1)),
                      p.ffn_w2, &p.ffn_b2, 1, 0, 0, 1);
  Var<T> z = add(tape, mlp, zhat);
  return add(tape, z, x4);
}

// Multi-kernel depthwise extraction, channel expansion, pixel shuffle x2.
template <typename T>
Var<T> dsu_forward(Tape<T>& tape, const Var<T>& f_hat, const DsuParams<T>& p) {
  const int groups = static_cast<int>(f_hat.val().shape[1]);
  Var<T> b3 = conv2d_same(tape, f_hat, p.dw3_w, &p.dw3_b, groups);
  Var<T> b5 = conv2d_same(tape, f_hat, p.dw5_w, &p.dw5_b, groups);
  Var<T> b7 = conv2d_same(tape, f_hat, p.dw7_w, &p.dw7_b, groups);
  Var<T> avg = average(tape, {b3, b5, b7});
  Var<T> expanded = conv2d(tape, avg, p.expand_w, &p.expand_b, 1, 0, 0, 1);
  return pixel_shuffle(tape, expanded, DsuParams<T>::shuffle_factor);
}

template <typename T>
Var<T> decoder_forward(Tape<T>& tape, const FeaturePyramid<T>& pyr, const DecoderConfig& cfg,
                       const DecoderParams<T>& p) {
  pyr.validate();
  if (static_cast<int>(p.msgrn.size()) != cfg.num_refine_blocks)
    throw std::invalid_argument("decoder: expected " + std::to_string(cfg.num_refine_blocks) +
                                " blocks of parameters, got " + std::to_string(p.msgrn.size()));
  Var<T> f4 = pyr.f4;
  for (int i = 0; i < cfg.num_refine_blocks; ++i) {
    Var<T> refined = msgrn_forward(tape, pyr, f4, p.msgrn[static_cast<size_t>(i)]);
    f4 = dsu_forward(tape, refined, p.dsu[static_cast<size_t>(i)]);
  }
  return conv2d(tape, f4, p.head_w, &p.head_b, 1, 0, 0, 1);
}

}  // namespace baris
