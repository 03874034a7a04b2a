#pragma once

#include <string>
#include <vector>

#include "baris/backbone.hpp"
#include "baris/bace.hpp"
#include "baris/decoder.hpp"
#include "baris/era.hpp"
#include "baris/grad_check.hpp"

namespace baris {

struct GradCase {
  std::string module;
  std::string name;
  double err = 0.0;
  double threshold = 0.0;

  bool ok() const { return err < threshold; }
};

namespace gradsuite {

constexpr double kLinearTol = 1e-10;
constexpr double kNonlinearTol = 1e-4;

// Values bounded away from ReLU/pooling ties: magnitude in [0.2, 1.5],
// random sign, all entries distinct with overwhelming probability.
inline Tensor<double> off_tie(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(s);
  for (auto& v : t.data) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return t;
}

// Shuffled evenly spaced values in [-1.5, 1.5]: every pair differs by at
// least the grid step, so large finite-difference steps cannot flip a
// pooling argmax.
inline Tensor<double> spaced(const Shape& s, std::mt19937_64& rng) {
  Tensor<double> t(s);
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i)
    t[i] = -1.5 + 3.0 * static_cast<double>(i) / static_cast<double>(std::max<int64_t>(n - 1, 1));
  std::shuffle(t.data.begin(), t.data.end(), rng);
  return t;
}

inline Tensor<double> unit_range(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.05, 0.95);
  Tensor<double> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

// Fixed pseudorandom projection to a scalar so constant gradients cannot hide
// sign or permutation errors.
inline Var<double> project(Tape<double>& tape, const Var<double>& x, uint64_t seed) {
  auto rng = std::mt19937_64(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor<double> w(x.val().shape);
  for (auto& v : w.data) v = d(rng);
  return sum(tape, hadamard(tape, x, make_constant(std::move(w))));
}

inline std::vector<GradCase> tensor_suite(uint64_t seed) {
  std::vector<GradCase> out;
  auto rng = stream_rng(seed, "grad-tensor");
  const uint64_t pseed = stream_seed(seed, "grad-proj");

  // Linear ops use a large step: the second derivative vanishes, so the big
  // step only suppresses roundoff, pushing the error to ~1e-14.
  constexpr double kLinearEps = 0.25;
  constexpr double kPoolEps = 1e-3;  // below half the spaced-input grid step
  auto run = [&](const std::string& name, double tol, const Tensor<double>& x,
                 std::function<Var<double>(Tape<double>&, const Var<double>&)> f,
                 double eps = 1e-5) {
    out.push_back({"tensor", name, grad_check(f, x, eps), tol});
  };

  // convolution
  {
    Tensor<double> x = off_tie({2, 3, 5, 5}, rng);
    Tensor<double> w = off_tie({4, 3, 3, 3}, rng);
    Tensor<double> b = off_tie({4}, rng);
    run("conv2d/input", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> wc = make_constant(w), bc = make_constant(b);
      return project(t, conv2d_same(t, v, wc, &bc), pseed);
    }, kLinearEps);
    run("conv2d/weight", kLinearTol, w, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> xc = make_constant(x);
      Var<double> bc = make_param(b);
      return project(t, conv2d_same(t, xc, v, &bc), pseed);
    }, kLinearEps);
    run("conv2d/bias", kLinearTol, b, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> xc = make_constant(x), wc = make_constant(w);
      return project(t, conv2d_same(t, xc, wc, &v), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> x = off_tie({1, 4, 6, 6}, rng);
    Tensor<double> w = off_tie({4, 1, 3, 3}, rng);
    run("conv2d/depthwise", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> wc = make_constant(w);
      return project(t, conv2d_same(t, v, wc, nullptr, 4), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> x = off_tie({1, 2, 7, 7}, rng);
    Tensor<double> w = off_tie({4, 1, 3, 3}, rng);
    run("conv2d/stride2-grouped", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> wc = make_constant(w);
      return project(t, conv2d(t, v, wc, nullptr, 2, 1, 1, 2), pseed);
    }, kLinearEps);
  }

  // pooling / resampling
  {
    Tensor<double> x = spaced({1, 2, 4, 4}, rng);
    run("max_pool2d", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, max_pool2d(t, v, 2), pseed);
    }, kPoolEps);
    run("avg_pool2d", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, avg_pool2d(t, v, 2), pseed);
    }, kLinearEps);
    run("nearest_upsample", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, nearest_upsample(t, v, 3), pseed);
    }, kLinearEps);
    run("roi_align/full", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, roi_align(t, v, kFullImageBox, 7, 5), pseed);
    }, kLinearEps);
    run("roi_align/crop", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, roi_align(t, v, RoiBox{0.1, 0.2, 0.9, 0.7}, 3, 3), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> x = off_tie({1, 8, 3, 3}, rng);
    run("pixel_shuffle", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, pixel_shuffle(t, v, 2), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> x = spaced({1, 3, 5, 5}, rng);
    run("max_pool2d_general", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, max_pool2d_general(t, v, 3, 1, 1), pseed);
    }, kPoolEps);
  }

  // normalization / linear
  {
    Tensor<double> x = off_tie({2, 4, 3, 3}, rng);
    Tensor<double> g = off_tie({4}, rng);
    Tensor<double> b = off_tie({4}, rng);
    run("layer_norm/input", kNonlinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> gc = make_constant(g), bc = make_constant(b);
      return project(t, layer_norm(t, v, gc, bc, 1e-5, 1), pseed);
    });
    run("layer_norm/gamma", kNonlinearTol, g, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> xc = make_constant(x), bc = make_constant(b);
      return project(t, layer_norm(t, xc, v, bc, 1e-5, 1), pseed);
    });
    run("layer_norm/beta", kLinearTol, b, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> xc = make_constant(x), gc = make_constant(g);
      return project(t, layer_norm(t, xc, gc, v, 1e-5, 1), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> x = off_tie({3, 4}, rng);
    Tensor<double> w = off_tie({5, 4}, rng);
    Tensor<double> b = off_tie({5}, rng);
    run("linear/input", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> wc = make_constant(w), bc = make_constant(b);
      return project(t, linear(t, v, wc, bc), pseed);
    }, kLinearEps);
    run("linear/weight", kLinearTol, w, [&](Tape<double>& t, const Var<double>& v) {
      Var<double> xc = make_constant(x), bc = make_constant(b);
      return project(t, linear(t, xc, v, bc), pseed);
    }, kLinearEps);
  }

  // activations
  {
    Tensor<double> x = off_tie({2, 3, 4, 4}, rng);
    run("relu", kNonlinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, relu(t, v), pseed);
    });
    run("sigmoid", kNonlinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, sigmoid(t, v), pseed);
    });
    run("gelu", kNonlinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, gelu(t, v), pseed);
    });
    run("softmax", kNonlinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, softmax(t, v, 1), pseed);
    });
  }

  // reductions and shape ops
  {
    Tensor<double> x = off_tie({2, 3, 4, 4}, rng);
    Tensor<double> y = off_tie({2, 3, 4, 4}, rng);
    run("global_avg_pool", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, global_avg_pool(t, v), pseed);
    }, kLinearEps);
    run("add", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, add(t, v, make_constant(y)), pseed);
    }, kLinearEps);
    run("sub", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, sub(t, make_constant(y), v), pseed);
    }, kLinearEps);
    run("hadamard", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, hadamard(t, v, make_constant(y)), pseed);
    }, kLinearEps);
    run("scale", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, scale(t, v, 0.37), pseed);
    }, kLinearEps);
    run("average", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, average(t, {v, make_constant(y), v}), pseed);
    }, kLinearEps);
    run("concat", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, concat(t, {v, make_constant(y)}, 1), pseed);
    }, kLinearEps);
    run("slice_batch", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, slice_batch(t, v, 1, 2), pseed);
    }, kLinearEps);
    run("sum", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) { return sum(t, v); }, kLinearEps);
    run("mean", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) { return mean(t, v); }, kLinearEps);
  }
  {
    Tensor<double> x = off_tie({2, 3, 4, 4}, rng);
    Tensor<double> s = off_tie({3}, rng);
    run("channel_scale/input", kLinearTol, x, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, channel_scale(t, v, make_constant(s)), pseed);
    }, kLinearEps);
    run("channel_scale/scale", kLinearTol, s, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, channel_scale(t, make_constant(x), v), pseed);
    }, kLinearEps);
    Tensor<double> g = off_tie({2, 3, 1, 1}, rng);
    run("scale_by_channel_map/gate", kLinearTol, g, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, scale_by_channel_map(t, make_constant(x), v), pseed);
    }, kLinearEps);
  }
  {
    Tensor<double> w = unit_range({2, 3, 2, 2}, rng);
    Tensor<double> e = off_tie({3, 4}, rng);
    run("embed_mix/weights", kLinearTol, w, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, embed_mix(t, v, make_constant(e)), pseed);
    }, kLinearEps);
    run("embed_mix/embeddings", kLinearTol, e, [&](Tape<double>& t, const Var<double>& v) {
      return project(t, embed_mix(t, make_constant(w), v), pseed);
    }, kLinearEps);
  }

  // losses
  {
    Tensor<double> logits = off_tie({2, 1, 4, 4}, rng);
    Tensor<double> target = unit_range({2, 1, 4, 4}, rng);
    run("bce_with_logits", kNonlinearTol, logits, [&](Tape<double>& t, const Var<double>& v) {
      return bce_with_logits(t, v, make_constant(target));
    });
  }
  return out;
}

inline std::vector<GradCase> decoder_suite(uint64_t seed) {
  std::vector<GradCase> out;
  auto rng = stream_rng(seed, "grad-decoder");
  const uint64_t pseed = stream_seed(seed, "grad-proj");
  DecoderConfig cfg;
  cfg.channels = 4;
  cfg.num_refine_blocks = 2;
  auto prng = stream_rng(seed, "grad-decoder-params");
  auto params = DecoderParams<double>::create(cfg, prng);

  Tensor<double> f1 = off_tie({1, 4, 8, 8}, rng);
  Tensor<double> f2 = off_tie({1, 4, 4, 4}, rng);
  Tensor<double> f3 = off_tie({1, 4, 2, 2}, rng);
  Tensor<double> f4 = off_tie({1, 4, 1, 1}, rng);
  const Tensor<double>* levels[4] = {&f1, &f2, &f3, &f4};
  const char* names[4] = {"decoder_forward/f1", "decoder_forward/f2", "decoder_forward/f3",
                          "decoder_forward/f4"};
  for (int li = 0; li < 4; ++li) {
    auto f = [&, li](Tape<double>& t, const Var<double>& v) {
      FeaturePyramid<double> pyr;
      Var<double>* slots[4] = {&pyr.f1, &pyr.f2, &pyr.f3, &pyr.f4};
      for (int k = 0; k < 4; ++k)
        *slots[k] = (k == li) ? v : make_constant(*levels[k]);
      return project(t, decoder_forward(t, pyr, cfg, params), pseed);
    };
    out.push_back({"decoder", names[li], grad_check(f, *levels[li]), kNonlinearTol});
  }
  return out;
}

inline std::vector<GradCase> era_suite(uint64_t seed) {
  std::vector<GradCase> out;
  auto rng = stream_rng(seed, "grad-era");
  const uint64_t pseed = stream_seed(seed, "grad-proj");
  EraConfig cfg;
  cfg.channels = 8;
  auto prng = stream_rng(seed, "grad-era-params");
  auto params = EraParams<double>::create(cfg, prng);
  // zero-init up-projection would mask most gradients; perturb it
  auto urng = stream_rng(seed, "grad-era-up");
  params.up_w.val() = off_tie(params.up_w.val().shape, urng);
  params.up_b.val() = off_tie(params.up_b.val().shape, urng);

  Tensor<double> x = off_tie({1, 8, 4, 4}, rng);
  auto fwd = [&](Tape<double>& t, const Var<double>& input, const EraParams<double>& p) {
    return project(t, era_forward(t, input, p, cfg), pseed);
  };

  // The adapter graph is deep enough that no single step size suits every
  // parameter: gradients around 1e-6 against an O(1) output need a larger
  // step to beat cancellation, while high-curvature slots need a smaller one.
  // A wrong analytic gradient disagrees at every step, so take the best of
  // two steps per case.
  auto check2 = [](const std::function<Var<double>(Tape<double>&, const Var<double>&)>& f,
                   const Tensor<double>& v) {
    return std::min(grad_check(f, v, 1e-5), grad_check(f, v, 1e-4));
  };
  out.push_back({"era", "era_forward/input",
                 check2([&](Tape<double>& t, const Var<double>& v) { return fwd(t, v, params); },
                        x),
                 kNonlinearTol});

  // Per-parameter checks: clone the struct (Var copies alias the same
  // tensors) and splice the checked Var into one slot.
  auto rebuild = [&](size_t index, const Var<double>& v) {
    EraParams<double> p = params;  // Var copies alias the same tensors
    Var<double>* slots[] = {&p.ln_g,     &p.ln_b,     &p.s1,       &p.s2,       &p.down_w,
                            &p.down_b,   &p.pool_w,   &p.pool_b,   &p.dwr_w[0], &p.dwr_b[0],
                            &p.dwc_w[0], &p.dwc_b[0], &p.dwr_w[1], &p.dwr_b[1], &p.dwc_w[1],
                            &p.dwc_b[1], &p.dwr_w[2], &p.dwr_b[2], &p.dwc_w[2], &p.dwc_b[2],
                            &p.ca_w1,    &p.ca_b1,    &p.ca_w2,    &p.ca_b2,    &p.env.e,
                            &p.env.env_w, &p.env.env_b, &p.up_w,    &p.up_b};
    *slots[index] = v;
    return p;
  };
  const char* slot_names[] = {"ln_g",   "ln_b",   "s1",     "s2",     "down_w", "down_b",
                              "pool_w", "pool_b", "dwr3_w", "dwr3_b", "dwc3_w", "dwc3_b",
                              "dwr5_w", "dwr5_b", "dwc5_w", "dwc5_b", "dwr7_w", "dwr7_b",
                              "dwc7_w", "dwc7_b", "ca_w1",  "ca_b1",  "ca_w2",  "ca_b2",
                              "env_e",  "env_w",  "env_b",  "up_w",   "up_b"};
  const Tensor<double>* slot_vals[] = {
      &params.ln_g.val(),     &params.ln_b.val(),     &params.s1.val(),
      &params.s2.val(),       &params.down_w.val(),   &params.down_b.val(),
      &params.pool_w.val(),   &params.pool_b.val(),   &params.dwr_w[0].val(),
      &params.dwr_b[0].val(), &params.dwc_w[0].val(), &params.dwc_b[0].val(),
      &params.dwr_w[1].val(), &params.dwr_b[1].val(), &params.dwc_w[1].val(),
      &params.dwc_b[1].val(), &params.dwr_w[2].val(), &params.dwr_b[2].val(),
      &params.dwc_w[2].val(), &params.dwc_b[2].val(), &params.ca_w1.val(),
      &params.ca_b1.val(),    &params.ca_w2.val(),    &params.ca_b2.val(),
      &params.env.e.val(),    &params.env.env_w.val(), &params.env.env_b.val(),
      &params.up_w.val(),     &params.up_b.val()};
  for (size_t i = 0; i < 29; ++i) {
    auto f = [&, i](Tape<double>& t, const Var<double>& v) {
      EraParams<double> p = rebuild(i, v);
      return fwd(t, make_constant(x), p);
    };
    out.push_back({"era", std::string("era_forward/") + slot_names[i], check2(f, *slot_vals[i]),
                   kNonlinearTol});
  }
  return out;
}

inline std::vector<GradCase> bace_suite(uint64_t seed) {
  std::vector<GradCase> out;
  auto rng = stream_rng(seed, "grad-bace");
  const uint64_t pseed = stream_seed(seed, "grad-proj");

  Tensor<double> pred = off_tie({2, 1, 8, 8}, rng);
  Tensor<double> gt({2, 1, 8, 8});
  {
    std::bernoulli_distribution bit(0.4);
    for (auto& v : gt.data) v = bit(rng) ? 1.0 : 0.0;
  }

  for (int s : {2, 4}) {
    // These compositions are piecewise linear at best (max-pool) and suffer
    // near-cancelling entries (x - mean) even with avg-pool, so both get the
    // standard tolerance; the strict linear tolerance is for primitive ops.
    out.push_back({"bace", "range_project/s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         return project(t, range_project(t, v, s), pseed);
                       },
                       pred),
                   kNonlinearTol});
    out.push_back({"bace", "null_project/s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         return project(t, null_project(t, v, s), pseed);
                       },
                       pred),
                   kNonlinearTol});
    out.push_back({"bace", "refine_gamma/s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         return project(t, refine_gamma(t, v, make_constant(gt), s), pseed);
                       },
                       pred),
                   kNonlinearTol});
    out.push_back({"bace", "range_project/avg-s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         return project(t, range_project(t, v, s, BacePool::avg), pseed);
                       },
                       pred),
                   kNonlinearTol});
    out.push_back({"bace", "null_project/avg-s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         return project(t, null_project(t, v, s, BacePool::avg), pseed);
                       },
                       pred),
                   kNonlinearTol});
    BaceConfig cfg;
    cfg.scale = s;
    out.push_back({"bace", "bace_loss/s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         MaskBatch<double> mb{v, make_constant(gt)};
                         return bace_loss(t, mb, cfg);
                       },
                       pred),
                   kNonlinearTol});
    out.push_back({"bace", "total_loss/s" + std::to_string(s),
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         MaskBatch<double> mb{v, make_constant(gt)};
                         return total_loss(t, mb, cfg);
                       },
                       pred),
                   kNonlinearTol});
  }
  {
    BaceConfig cfg;
    cfg.scale = 4;
    cfg.pool = BacePool::avg;
    out.push_back({"bace", "total_loss/avg-pool",
                   grad_check(
                       [&](Tape<double>& t, const Var<double>& v) {
                         MaskBatch<double> mb{v, make_constant(gt)};
                         return total_loss(t, mb, cfg);
                       },
                       pred),
                   kNonlinearTol});
  }
  return out;
}

inline std::vector<GradCase> run_suite(const std::string& module, uint64_t seed) {
  std::vector<GradCase> out;
  auto append = [&](std::vector<GradCase> v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  if (module == "all" || module == "tensor") append(tensor_suite(seed));
  if (module == "all" || module == "decoder") append(decoder_suite(seed));
  if (module == "all" || module == "era") append(era_suite(seed));
  if (module == "all" || module == "bace") append(bace_suite(seed));
  if (out.empty()) throw std::invalid_argument("unknown grad-check module: " + module);
  return out;
}

}  // namespace gradsuite
}  // namespace baris
