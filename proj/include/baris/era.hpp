#pragma once

#include "baris/ops.hpp"
#include "baris/params.hpp"

namespace baris {

struct EraConfig {
  int channels = 16;     // C
  int gamma = 2;         // projection ratio; C' = C / gamma
  int num_envs = 16;     // environmental embedding rows
  int ca_reduction = 4;  // channel-attention bottleneck

  int compressed() const {
    if (gamma < 1 || channels % gamma != 0)
      throw std::invalid_argument("era: channels " + std::to_string(channels) +
                                  " not divisible by gamma " + std::to_string(gamma));
    return channels / gamma;
  }
  int ca_hidden() const { return std::max(1, compressed() / ca_reduction); }
};

template <typename T>
struct EnvEmbeddings {
  Var<T> e;                  // (N_env, C')
  Var<T> env_w, env_b;       // per-pixel linear C' -> N_env (as 1x1 conv)
};

template <typename T>
struct EraParams {
  Var<T> ln_g, ln_b;     // LayerNorm(C), channel axis
  Var<T> s1, s2;         // learnable per-channel scales
  Var<T> down_w, down_b; // 1x1, C -> C'
  // MSFE: max-pool branch conv and split depthwise pairs for j in {3,5,7}
  Var<T> pool_w, pool_b;
  Var<T> dwr_w[3], dwr_b[3];  // 1 x j rows
  Var<T> dwc_w[3], dwc_b[3];  // j x 1 columns
  Var<T> ca_w1, ca_b1, ca_w2, ca_b2;
  EnvEmbeddings<T> env;
  Var<T> up_w, up_b;     // 1x1, C' -> C, zero-initialized

  static EraParams create(const EraConfig& cfg, std::mt19937_64& rng) {
    const int c = cfg.channels;
    const int cp = cfg.compressed();
    const int h = cfg.ca_hidden();
    if (cfg.num_envs < 1) throw std::invalid_argument("era: num_envs must be >= 1");
    EraParams p;
    p.ln_g = make_param(Tensor<T>::full({c}, T(1)));
    p.ln_b = make_param(Tensor<T>::zeros({c}));
    p.s1 = make_param(Tensor<T>::full({c}, T(1)));
    p.s2 = make_param(Tensor<T>::full({c}, T(1e-6)));
    p.down_w = make_param(kaiming_uniform<T>({cp, c, 1, 1}, c, rng));
    p.down_b = make_param(Tensor<T>::zeros({cp}));
    p.pool_w = make_param(kaiming_uniform<T>({cp, cp, 1, 1}, cp, rng));
    p.pool_b = make_param(Tensor<T>::zeros({cp}));
    const int ks[3] = {3, 5, 7};
    for (int i = 0; i < 3; ++i) {
      p.dwr_w[i] = make_param(kaiming_uniform<T>({cp, 1, 1, ks[i]}, ks[i], rng));
      p.dwr_b[i] = make_param(Tensor<T>::zeros({cp}));
      p.dwc_w[i] = make_param(kaiming_uniform<T>({cp, 1, ks[i], 1}, ks[i], rng));
      p.dwc_b[i] = make_param(Tensor<T>::zeros({cp}));
    }
    p.ca_w1 = make_param(kaiming_uniform<T>({h, cp, 1, 1}, cp, rng));
    p.ca_b1 = make_param(Tensor<T>::zeros({h}));
    p.ca_w2 = make_param(kaiming_uniform<T>({cp, h, 1, 1}, h, rng));
    p.ca_b2 = make_param(Tensor<T>::zeros({cp}));
    p.env.e = make_param(kaiming_uniform<T>({cfg.num_envs, cp}, cp, rng));
    p.env.env_w = make_param(kaiming_uniform<T>({cfg.num_envs, cp, 1, 1}, cp, rng));
    p.env.env_b = make_param(Tensor<T>::zeros({cfg.num_envs}));
    p.up_w = make_param(Tensor<T>::zeros({c, cp, 1, 1}));
    p.up_b = make_param(Tensor<T>::zeros({c}));
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".ln_g", ln_g, "norm"});
    out.push_back({prefix + ".ln_b", ln_b, "norm"});
    out.push_back({prefix + ".s1", s1, "weight"});
    out.push_back({prefix + ".s2", s2, "weight"});
    out.push_back({prefix + ".down_w", down_w, "weight"});
    out.push_back({prefix + ".down_b", down_b, "bias"});
    out.push_back({prefix + ".pool_w", pool_w, "weight"});
    out.push_back({prefix + ".pool_b", pool_b, "bias"});
    const char* js[3] = {"3", "5", "7"};
    for (int i = 0; i < 3; ++i) {
      out.push_back({prefix + ".dwr" + js[i] + "_w", dwr_w[i], "weight"});
      out.push_back({prefix + ".dwr" + js[i] + "_b", dwr_b[i], "bias"});
      out.push_back({prefix + ".dwc" + js[i] + "_w", dwc_w[i], "weight"});
      out.push_back({prefix + ".dwc" + js[i] + "_b", dwc_b[i], "bias"});
    }
    out.push_back({prefix + ".ca_w1", ca_w1, "weight"});
    out.push_back({prefix + ".ca_b1", ca_b1, "bias"});
    out.push_back({prefix + ".ca_w2", ca_w2, "weight"});
    out.push_back({prefix + ".ca_b2", ca_b2, "bias"});
    out.push_back({prefix + ".env_e", env.e, "weight"});
    out.push_back({prefix + ".env_w", env.env_w, "weight"});
    out.push_back({prefix + ".env_b", env.env_b, "bias"});
    out.push_back({prefix + ".up_w", up_w, "weight"});
    out.push_back({prefix + ".up_b", up_b, "bias"});
  }
};

// Max-pool branch plus three split depthwise pairs, averaged, with residual.
template <typename T>
Var<T> msfe_forward(Tape<T>& tape, const Var<T>& f_p, const EraParams<T>& p) {
  const int groups = static_cast<int>(f_p.val().shape[1]);
  Var<T> pooled = max_pool2d_general(tape, f_p, 3, 1, 1);
  Var<T> b_max = conv2d(tape, pooled, p.pool_w, &p.pool_b, 1, 0, 0, 1);
  std::vector<Var<T>> branches = {b_max};
  const int ks[3] = {3, 5, 7};
  for (int i = 0; i < 3; ++i) {
    Var<T> col = conv2d(tape, f_p, p.dwc_w[i], &p.dwc_b[i], 1, ks[i] / 2, 0, groups);
    Var<T> row = conv2d(tape, col, p.dwr_w[i], &p.dwr_b[i], 1, 0, ks[i] / 2, groups);
    branches.push_back(row);
  }
  return add(tape, average(tape, branches), f_p);
}

// GAP -> 1x1 -> ReLU -> 1x1 -> sigmoid gate, broadcast over H, W.
template <typename T>
Var<T> channel_attention(Tape<T>& tape, const Var<T>& f_s, const EraParams<T>& p) {
  Var<T> s = conv2d(tape, relu(tape, conv2d(tape, global_avg_pool(tape, f_s), p.ca_w1, &p.ca_b1, 1,
                                            0, 0, 1)),
                    p.ca_w2, &p.ca_b2, 1, 0, 0, 1);
  return scale_by_channel_map(tape, f_s, sigmoid(tape, s));
}

// Per-pixel softmax weighting over the embedding rows.
template <typename T>
Var<T> env_adapt(Tape<T>& tape, const Var<T>& f_c, const EnvEmbeddings<T>& env) {
  Var<T> logits = conv2d(tape, f_c, env.env_w, &env.env_b, 1, 0, 0, 1);
  Var<T> weights = softmax(tape, logits, 1);
  return embed_mix(tape, weights, env.e);
}

template <typename T>
Var<T> era_forward(Tape<T>& tape, const Var<T>& f, const EraParams<T>& p, const EraConfig& cfg) {
  if (f.val().shape[1] != cfg.channels)
    throw ShapeError("era: input has " + std::to_string(f.val().shape[1]) +
                     " channels, config says " + std::to_string(cfg.channels));
  Var<T> normed = layer_norm(tape, f, p.ln_g, p.ln_b, T(1e-5), 1);
  Var<T> scaled = add(tape, channel_scale(tape, normed, p.s1), channel_scale(tape, f, p.s2));
  Var<T> f_p = conv2d(tape, scaled, p.down_w, &p.down_b, 1, 0, 0, 1);
  Var<T> f_s = msfe_forward(tape, f_p, p);
  Var<T> f_c = channel_attention(tape, f_s, p);
  Var<T> e_ad = env_adapt(tape, f_c, p.env);
  Var<T> f_e = gelu(tape, hadamard(tape, f_c, sigmoid(tape, e_ad)));
  Var<T> up = conv2d(tape, f_e, p.up_w, &p.up_b, 1, 0, 0, 1);
  return add(tape, f, up);
}

// ---------------------------------------------------------------------------
// trainable-parameter accounting

struct ParamDesc {
  std::string name;
  Shape shape;
  std::string tag;  // weight | bias | norm
};

enum class TuneScheme { full, era, bitfit, norm_only };

inline TuneScheme parse_scheme(const std::string& s) {
  if (s == "full") return TuneScheme::full;
  if (s == "era") return TuneScheme::era;
  if (s == "bitfit") return TuneScheme::bitfit;
  if (s == "norm_only" || s == "norm-only") return TuneScheme::norm_only;
  throw std::invalid_argument("unknown tuning scheme: " + s);
}

struct ParamBudget {
  int64_t trainable = 0;
  int64_t total = 0;
  double fraction = 0.0;
};

// Parameter shapes of one ERA adapter, derived from the construction above.
inline std::vector<ParamDesc> era_param_descs(const EraConfig& cfg, const std::string& prefix) {
  const int64_t c = cfg.channels, cp = cfg.compressed(), h = cfg.ca_hidden(), ne = cfg.num_envs;
  std::vector<ParamDesc> d;
  d.push_back({prefix + ".ln_g", {c}, "norm"});
  d.push_back({prefix + ".ln_b", {c}, "norm"});
  d.push_back({prefix + ".s1", {c}, "weight"});
  d.push_back({prefix + ".s2", {c}, "weight"});
  d.push_back({prefix + ".down_w", {cp, c, 1, 1}, "weight"});
  d.push_back({prefix + ".down_b", {cp}, "bias"});
  d.push_back({prefix + ".pool_w", {cp, cp, 1, 1}, "weight"});
  d.push_back({prefix + ".pool_b", {cp}, "bias"});
  for (int64_t k : {3, 5, 7}) {
    d.push_back({prefix + ".dwr" + std::to_string(k) + "_w", {cp, 1, 1, k}, "weight"});
    d.push_back({prefix + ".dwr" + std::to_string(k) + "_b", {cp}, "bias"});
    d.push_back({prefix + ".dwc" + std::to_string(k) + "_w", {cp, 1, k, 1}, "weight"});
    d.push_back({prefix + ".dwc" + std::to_string(k) + "_b", {cp}, "bias"});
  }
  d.push_back({prefix + ".ca_w1", {h, cp, 1, 1}, "weight"});
  d.push_back({prefix + ".ca_b1", {h}, "bias"});
  d.push_back({prefix + ".ca_w2", {cp, h, 1, 1}, "weight"});
  d.push_back({prefix + ".ca_b2", {cp}, "bias"});
  d.push_back({prefix + ".env_e", {ne, cp}, "weight"});
  d.push_back({prefix + ".env_w", {ne, cp, 1, 1}, "weight"});
  d.push_back({prefix + ".env_b", {ne}, "bias"});
  d.push_back({prefix + ".up_w", {c, cp, 1, 1}, "weight"});
  d.push_back({prefix + ".up_b", {c}, "bias"});
  return d;
}

// full: all backbone params train, no adapters inserted.
// era: backbone frozen, only adapter params train; the parameter universe
//      then includes the adapters.
// bitfit / norm_only: subsets of the backbone by tag.
inline ParamBudget count_params(TuneScheme scheme, const std::vector<ParamDesc>& backbone,
                                const std::vector<ParamDesc>& era_adapters) {
  auto numel = [](const ParamDesc& p) { return numel_of(p.shape); };
  ParamBudget b;
  for (const auto& p : backbone) {
    if (p.tag != "weight" && p.tag != "bias" && p.tag != "norm")
      throw std::invalid_argument("unknown parameter tag: " + p.tag + " on " + p.name);
    b.total += numel(p);
    switch (scheme) {
      case TuneScheme::full: b.trainable += numel(p); break;
      case TuneScheme::era: break;
      case TuneScheme::bitfit:
        if (p.tag == "bias") b.trainable += numel(p);
        break;
      case TuneScheme::norm_only:
        if (p.tag == "norm") b.trainable += numel(p);
        break;
    }
  }
  if (scheme == TuneScheme::era) {
    for (const auto& p : era_adapters) {
      if (p.tag != "weight" && p.tag != "bias" && p.tag != "norm")
        throw std::invalid_argument("unknown parameter tag: " + p.tag + " on " + p.name);
      b.total += numel(p);
      b.trainable += numel(p);
    }
  }
  b.fraction = static_cast<double>(b.trainable) / static_cast<double>(b.total);
  return b;
}

}  // namespace baris
