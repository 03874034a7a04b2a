#include <doctest.h>

#include "baris/backbone.hpp"
#include "baris/era.hpp"
#include "baris/rng.hpp"

using namespace baris;

namespace {

template <typename T>
Tensor<T> rand_tensor(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor<T> t(s);
  for (auto& v : t.data) v = static_cast<T>(d(rng));
  return t;
}

}  // namespace

TEST_CASE("fresh adapter is a bitwise identity") {
  EraConfig cfg;
  cfg.channels = 8;
  auto prng = stream_rng(4, "era-params");
  auto params = EraParams<float>::create(cfg, prng);
  auto rng = stream_rng(4, "era-input");
  Tensor<float> x = rand_tensor<float>({2, 8, 6, 6}, rng);
  Tape<float> tape;
  Var<float> out = era_forward(tape, make_constant(x), params, cfg);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(out.val()[i] == x[i]);
}

TEST_CASE("one update step breaks the identity") {
  EraConfig cfg;
  cfg.channels = 8;
  auto prng = stream_rng(6, "era-params");
  auto params = EraParams<double>::create(cfg, prng);
  auto rng = stream_rng(6, "era-input");
  Tensor<double> x = rand_tensor<double>({1, 8, 4, 4}, rng);

  ParamList<double> plist;
  params.collect(plist, "era");
  {
    Tape<double> tape;
    Var<double> loss = mean(tape, era_forward(tape, make_constant(x), params, cfg));
    tape.backward(loss);
  }
  // with the zero-initialized up-projection only up_w / up_b can move
  double up_grad = 0.0;
  for (const auto& g : params.up_w.grad->data) up_grad = std::max(up_grad, std::abs(g));
  CHECK(up_grad > 0.0);

  for (auto& p : plist)
    for (int64_t i = 0; i < p.var.val().numel(); ++i)
      p.var.val()[i] -= 0.1 * (*p.var.grad)[i];

  Tape<double> tape;
  Var<double> out = era_forward(tape, make_constant(x), params, cfg);
  double diff = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) diff = std::max(diff, std::abs(out.val()[i] - x[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("freezing routes gradients only to the adapters") {
  EraConfig cfg;
  cfg.gamma = 2;
  auto model = ToyBackbone<double>::create(8, 7, true, cfg);
  model.freeze_backbone();

  auto rng = stream_rng(7, "era-freeze-input");
  Tensor<double> img = rand_tensor<double>({1, 3, 64, 64}, rng);
  Tape<double> tape;
  auto pyr = model.forward(tape, make_constant(img));
  Var<double> loss = mean(tape, pyr.f4);
  tape.backward(loss);

  ParamList<double> frozen, adapters;
  model.collect_backbone(frozen, "backbone");
  model.collect_adapters(adapters, "backbone");
  CHECK(frozen.size() == 8);
  CHECK(adapters.size() == 4 * 29);
  for (const auto& p : frozen) {
    CHECK_FALSE(p.var.requires_grad);
    CHECK(p.var.grad == nullptr);
  }
  for (const auto& p : adapters) {
    CHECK(p.var.requires_grad);
    REQUIRE(p.var.grad != nullptr);
  }
  // the residual carries gradient into every stage's up-projection
  for (const auto& p : adapters) {
    if (p.name.find("up_w") == std::string::npos) continue;
    double m = 0.0;
    for (const auto& g : p.var.grad->data) m = std::max(m, std::abs(g));
    INFO("param ", p.name);
    CHECK(m > 0.0);
  }
}

TEST_CASE("environment weights form a distribution") {
  EraConfig cfg;
  cfg.channels = 8;
  cfg.num_envs = 5;
  auto prng = stream_rng(8, "era-params");
  auto params = EraParams<double>::create(cfg, prng);
  auto rng = stream_rng(8, "era-input");
  Tensor<double> fc = rand_tensor<double>({2, cfg.compressed(), 3, 3}, rng);
  Tape<double> tape;
  Var<double> logits = conv2d(tape, make_constant(fc), params.env.env_w, &params.env.env_b,
                              1, 0, 0, 1);
  Var<double> w = softmax(tape, logits, 1);
  const auto& s = w.val().shape;
  CHECK(s == Shape{2, 5, 3, 3});
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t y = 0; y < s[2]; ++y)
      for (int64_t x = 0; x < s[3]; ++x) {
        double acc = 0.0;
        for (int64_t c = 0; c < s[1]; ++c) {
          CHECK(w.val().at4(n, c, y, x) >= 0.0);
          acc += w.val().at4(n, c, y, x);
        }
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
      }

  // env_adapt output is the weighted embedding mixture, so it stays inside
  // the convex hull of the embedding rows per channel.
  Var<double> mixed = env_adapt(tape, make_constant(fc), params.env);
  CHECK(mixed.val().shape == fc.shape);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < cfg.compressed(); ++c) {
      double lo = 1e30, hi = -1e30;
      for (int64_t e = 0; e < cfg.num_envs; ++e) {
        lo = std::min(lo, params.env.e.val()[e * cfg.compressed() + c]);
        hi = std::max(hi, params.env.e.val()[e * cfg.compressed() + c]);
      }
      for (int64_t y = 0; y < 3; ++y)
        for (int64_t x = 0; x < 3; ++x) {
          const double v = mixed.val().at4(n, c, y, x);
          CHECK(v >= lo - 1e-12);
          CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("adapter preserves shape across configurations") {
  auto rng = stream_rng(10, "era-shape");
  for (int c : {4, 8, 16}) {
    for (int gamma : {1, 2, 4}) {
      EraConfig cfg;
      cfg.channels = c;
      cfg.gamma = gamma;
      cfg.num_envs = 3;
      auto prng = stream_rng(10, "era-params");
      auto params = EraParams<double>::create(cfg, prng);
      Tensor<double> x = rand_tensor<double>({1, c, 5, 5}, rng);
      Tape<double> tape;
      Var<double> out = era_forward(tape, make_constant(x), params, cfg);
      CHECK(out.val().shape == x.shape);
    }
  }
}

TEST_CASE("adapter configuration validation") {
  EraConfig bad;
  bad.channels = 10;
  bad.gamma = 4;
  CHECK_THROWS_AS(bad.compressed(), std::invalid_argument);
  auto rng = stream_rng(1, "era-params");
  CHECK_THROWS_AS(EraParams<double>::create(bad, rng), std::invalid_argument);

  EraConfig envless;
  envless.channels = 8;
  envless.num_envs = 0;
  CHECK_THROWS_AS(EraParams<double>::create(envless, rng), std::invalid_argument);

  EraConfig cfg;
  cfg.channels = 8;
  auto params = EraParams<double>::create(cfg, rng);
  Tape<double> tape;
  auto xrng = stream_rng(1, "era-input");
  Tensor<double> x = rand_tensor<double>({1, 4, 5, 5}, xrng);
  CHECK_THROWS_AS(era_forward(tape, make_constant(x), params, cfg), ShapeError);
}

TEST_CASE("tuning-scheme parameter accounting") {
  const auto backbone = toy_backbone_param_descs(16);

  SUBCASE("full tuning trains everything") {
    auto b = count_params(TuneScheme::full, backbone, {});
    CHECK(b.trainable == b.total);
    CHECK(b.fraction == 1.0);
  }
  SUBCASE("bitfit counts exactly the biases") {
    auto b = count_params(TuneScheme::bitfit, backbone, {});
    CHECK(b.trainable == 4 * 16);
    CHECK(b.total > b.trainable);
  }
  SUBCASE("norm_only finds no norms in the toy backbone") {
    auto b = count_params(TuneScheme::norm_only, backbone, {});
    CHECK(b.trainable == 0);
  }
  SUBCASE("era fraction stays under 10% and shrinks with gamma") {
    // staged widths 32/64/128/256, one adapter per stage
    const int widths[4] = {32, 64, 128, 256};
    std::vector<ParamDesc> staged;
    int64_t in_c = 3;
    for (int i = 0; i < 4; ++i) {
      const std::string p = "backbone.stage" + std::to_string(i + 1);
      staged.push_back({p + ".w", {widths[i], in_c, 3, 3}, "weight"});
      staged.push_back({p + ".b", {widths[i]}, "bias"});
      for (int j = 1; j <= 2; ++j) {
        staged.push_back({p + ".proj" + std::to_string(j) + "_w",
                          {widths[i], widths[i], 3, 3}, "weight"});
        staged.push_back({p + ".proj" + std::to_string(j) + "_b", {widths[i]}, "bias"});
      }
      in_c = widths[i];
    }
    double prev = 1.0;
    for (int gamma : {2, 4, 8}) {
      std::vector<ParamDesc> adapters;
      for (int i = 0; i < 4; ++i) {
        EraConfig cfg;
        cfg.channels = widths[i];
        cfg.gamma = gamma;
        auto one = era_param_descs(cfg, "backbone.stage" + std::to_string(i + 1) + ".era");
        adapters.insert(adapters.end(), one.begin(), one.end());
      }
      auto b = count_params(TuneScheme::era, staged, adapters);
      CHECK(b.fraction < 0.10);
      CHECK(b.fraction < prev);
      prev = b.fraction;
    }
  }
  SUBCASE("reference budget reproduces the published fraction") {
    // 4.25M adapter parameters on an 86.75M backbone
    std::vector<ParamDesc> big = {{"backbone.all", {86750000}, "weight"}};
    std::vector<ParamDesc> adapters = {{"era.all", {4250000}, "weight"}};
    auto b = count_params(TuneScheme::era, big, adapters);
    CHECK(b.fraction == doctest::Approx(0.0467).epsilon(0.01));
  }
}
