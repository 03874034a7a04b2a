#include <doctest.h>

#include "baris/decoder.hpp"
#include "baris/rng.hpp"

using namespace baris;

namespace {

Tensor<double> rand_tensor(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor<double> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

FeaturePyramid<double> make_pyramid(int64_t c, int64_t h1, std::mt19937_64& rng) {
  FeaturePyramid<double> p;
  p.f1 = make_constant(rand_tensor({1, c, h1, h1}, rng));
  p.f2 = make_constant(rand_tensor({1, c, h1 / 2, h1 / 2}, rng));
  p.f3 = make_constant(rand_tensor({1, c, h1 / 4, h1 / 4}, rng));
  p.f4 = make_constant(rand_tensor({1, c, h1 / 8, h1 / 8}, rng));
  return p;
}

}  // namespace

TEST_CASE("decoder output doubles per refine block") {
  auto rng = stream_rng(11, "decoder-shape");
  for (int blocks = 1; blocks <= 4; ++blocks) {
    DecoderConfig cfg;
    cfg.channels = 4;
    cfg.num_refine_blocks = blocks;
    cfg.num_classes = 1;
    auto prng = stream_rng(11, "decoder-params");
    auto params = DecoderParams<double>::create(cfg, prng);
    Tape<double> tape;
    auto pyr = make_pyramid(4, 16, rng);
    Var<double> out = decoder_forward(tape, pyr, cfg, params);
    const int64_t base = pyr.f4.val().shape[2];
    CHECK(out.val().shape == Shape{1, 1, base << blocks, base << blocks});
  }
}

TEST_CASE("decoder forward is deterministic for a fixed seed") {
  auto run = [] {
    DecoderConfig cfg;
    cfg.channels = 4;
    cfg.num_refine_blocks = 2;
    auto prng = stream_rng(5, "decoder-params");
    auto params = DecoderParams<double>::create(cfg, prng);
    auto rng = stream_rng(5, "decoder-input");
    Tape<double> tape;
    auto pyr = make_pyramid(4, 16, rng);
    return decoder_forward(tape, pyr, cfg, params).val();
  };
  Tensor<double> a = run(), b = run();
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("saturated gate cuts the attention path") {
  DecoderConfig cfg;
  cfg.channels = 4;
  cfg.num_refine_blocks = 1;
  auto prng = stream_rng(9, "decoder-params");
  auto params = DecoderParams<double>::create(cfg, prng);
  auto rng = stream_rng(9, "decoder-input");
  auto pyr = make_pyramid(4, 16, rng);
  Tensor<double> f2_bumped = pyr.f2.val();
  for (auto& v : f2_bumped.data) v += 0.5;

  // f2 reaches the block output only through the gated attention product, so
  // once the gate saturates low the output stops depending on it.
  auto response = [&](double gate_bias) {
    for (auto& v : params.msgrn[0].gate_dsconv.pw_b.val().data) v = gate_bias;
    Tape<double> t1, t2;
    FeaturePyramid<double> alt = pyr;
    alt.f2 = make_constant(f2_bumped);
    Tensor<double> a = decoder_forward(t1, pyr, cfg, params).val();
    Tensor<double> b = decoder_forward(t2, alt, cfg, params).val();
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  };
  CHECK(response(0.0) > 1e-4);
  CHECK(response(-30.0) < 1e-9);
}

TEST_CASE("every decoder parameter receives gradient") {
  DecoderConfig cfg;
  cfg.channels = 4;
  cfg.num_refine_blocks = 2;
  auto prng = stream_rng(3, "decoder-params");
  auto params = DecoderParams<double>::create(cfg, prng);
  auto rng = stream_rng(3, "decoder-input");
  Tape<double> tape;
  auto pyr = make_pyramid(4, 16, rng);
  Var<double> loss = mean(tape, decoder_forward(tape, pyr, cfg, params));
  tape.backward(loss);

  ParamList<double> plist;
  params.collect(plist, "decoder");
  CHECK(plist.size() == 2 * (34 + 8) + 2);
  for (const auto& p : plist) {
    REQUIRE(p.var.grad != nullptr);
    double m = 0.0;
    for (const auto& g : p.var.grad->data) m = std::max(m, std::abs(g));
    INFO("param ", p.name);
    CHECK(m > 0.0);
  }
}

TEST_CASE("pyramid validation rejects malformed inputs") {
  auto rng = stream_rng(2, "decoder-bad");
  DecoderConfig cfg;
  cfg.channels = 4;
  cfg.num_refine_blocks = 1;
  auto prng = stream_rng(2, "decoder-params");
  auto params = DecoderParams<double>::create(cfg, prng);

  SUBCASE("channel mismatch across levels") {
    Tape<double> tape;
    auto pyr = make_pyramid(4, 16, rng);
    pyr.f3 = make_constant(rand_tensor({1, 8, 4, 4}, rng));
    CHECK_THROWS_AS(decoder_forward(tape, pyr, cfg, params), ShapeError);
  }
  SUBCASE("spatial sizes that do not halve") {
    Tape<double> tape;
    auto pyr = make_pyramid(4, 16, rng);
    pyr.f2 = make_constant(rand_tensor({1, 4, 6, 6}, rng));
    CHECK_THROWS_AS(decoder_forward(tape, pyr, cfg, params), ShapeError);
  }
  SUBCASE("pyramid channels disagree with parameters") {
    Tape<double> tape;
    auto pyr = make_pyramid(8, 16, rng);
    CHECK_THROWS_AS(decoder_forward(tape, pyr, cfg, params), ShapeError);
  }
  SUBCASE("block count disagrees with parameters") {
    Tape<double> tape;
    auto pyr = make_pyramid(4, 16, rng);
    DecoderConfig three = cfg;
    three.num_refine_blocks = 3;
    CHECK_THROWS_AS(decoder_forward(tape, pyr, three, params), std::invalid_argument);
  }
  SUBCASE("zero refine blocks rejected at creation") {
    DecoderConfig zero = cfg;
    zero.num_refine_blocks = 0;
    auto r = stream_rng(2, "decoder-params");
    CHECK_THROWS_AS(DecoderParams<double>::create(zero, r), std::invalid_argument);
  }
}
