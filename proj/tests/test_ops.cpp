#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "baris/ops.hpp"
#include "baris/reference.hpp"
#include "baris/rng.hpp"

using namespace baris;

namespace {

Tensor<float> randf(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor<float> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("conv2d matches the serial reference over random configs") {
  auto rng = stream_rng(11, "test-conv-ref");
  struct Cfg {
    Shape x, w;
    int stride, pad_h, pad_w, groups;
  };
  const Cfg cfgs[] = {
      {{2, 3, 8, 8}, {5, 3, 3, 3}, 1, 1, 1, 1},
      {{1, 4, 9, 9}, {4, 1, 3, 3}, 1, 1, 1, 4},
      {{1, 6, 7, 7}, {6, 3, 1, 1}, 1, 0, 0, 2},
      {{2, 2, 9, 9}, {4, 2, 5, 5}, 2, 2, 2, 1},
      {{1, 3, 6, 6}, {3, 1, 1, 5}, 1, 0, 2, 3},
      {{1, 3, 6, 6}, {3, 1, 5, 1}, 1, 2, 0, 3},
  };
  for (const auto& c : cfgs) {
    Tensor<float> x = randf(c.x, rng);
    Tensor<float> w = randf(c.w, rng);
    Tensor<float> b = randf({c.w[0]}, rng);
    auto fast = kernels::conv2d_forward(x, w, &b, c.stride, c.pad_h, c.pad_w, c.groups);
    auto slow = ref::conv2d(x, w, &b, c.stride, c.pad_h, c.pad_w, c.groups);
    REQUIRE(fast.shape == slow.shape);
    for (int64_t i = 0; i < fast.numel(); ++i)
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-5));
  }
}

TEST_CASE("depthwise 3x3 all-ones kernel counts the neighborhood") {
  // On an all-ones image with same padding the response is the window size:
  // 9 in the interior, 6 on edges, 4 in corners.
  Tape<float> tape;
  Var<float> x = make_constant(Tensor<float>::full({1, 2, 5, 5}, 1.0f));
  Var<float> w = make_constant(Tensor<float>::full({2, 1, 3, 3}, 1.0f));
  Var<float> y = conv2d_same(tape, x, w, nullptr, 2);
  CHECK(y.val().at4(0, 0, 2, 2) == 9.0f);
  CHECK(y.val().at4(0, 1, 2, 2) == 9.0f);
  CHECK(y.val().at4(0, 0, 0, 0) == 4.0f);
  CHECK(y.val().at4(0, 0, 4, 4) == 4.0f);
  CHECK(y.val().at4(0, 0, 0, 2) == 6.0f);
}

TEST_CASE("conv2d rejects bad configurations") {
  Tape<float> tape;
  Var<float> x = make_constant(Tensor<float>::zeros({1, 4, 8, 8}));
  Var<float> w_even = make_constant(Tensor<float>::zeros({4, 4, 2, 2}));
  CHECK_THROWS_AS(conv2d(tape, x, w_even, nullptr, 1, 0, 0, 1), ShapeError);
  Var<float> w_groups = make_constant(Tensor<float>::zeros({4, 4, 3, 3}));
  CHECK_THROWS_AS(conv2d(tape, x, w_groups, nullptr, 1, 1, 1, 4), ShapeError);
  Var<float> w = make_constant(Tensor<float>::zeros({4, 4, 3, 3}));
  CHECK_THROWS_AS(conv2d(tape, x, w, nullptr, 3, 1, 1, 1), ShapeError);  // non-divisible stride
  Var<float> bad_bias = make_constant(Tensor<float>::zeros({5}));
  CHECK_THROWS_AS(conv2d(tape, x, w, &bad_bias, 1, 1, 1, 1), ShapeError);
}

TEST_CASE("max_pool picks the maximum and breaks ties at the lowest index") {
  Tape<float> tape;
  Tensor<float> x({1, 1, 2, 4}, {5, 5, 1, 2,
                                 3, 4, 2, 9});
  Var<float> xv = make_param(x);
  Var<float> y = max_pool2d(tape, xv, 2);
  CHECK(y.val()[0] == 5.0f);
  CHECK(y.val()[1] == 9.0f);
  Var<float> loss = sum(tape, y);
  tape.backward(loss);
  // tie between the two 5s resolves to the first in row-major order
  CHECK((*xv.grad)[0] == 1.0f);
  CHECK((*xv.grad)[1] == 0.0f);
  CHECK(xv.grad->at4(0, 0, 1, 3) == 1.0f);
}

TEST_CASE("avg_pool averages blocks") {
  Tape<float> tape;
  Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 6});
  Var<float> y = avg_pool2d(tape, make_constant(x), 2);
  CHECK(y.val()[0] == 3.0f);
}

TEST_CASE("pixel_shuffle lays out channel blocks spatially") {
  // r=2: channels (0,1,2,3) of a 1x1 map become the 2x2 block [[0,1],[2,3]].
  Tape<float> tape;
  Tensor<float> x({1, 4, 1, 1}, {0, 1, 2, 3});
  Var<float> y = pixel_shuffle(tape, make_constant(x), 2);
  REQUIRE(y.val().shape == Shape{1, 1, 2, 2});
  CHECK(y.val()[0] == 0.0f);
  CHECK(y.val()[1] == 1.0f);
  CHECK(y.val()[2] == 2.0f);
  CHECK(y.val()[3] == 3.0f);
}

TEST_CASE("pixel_shuffle matches reference and unshuffle inverts it") {
  auto rng = stream_rng(12, "test-ps");
  Tensor<float> x = randf({2, 18, 3, 4}, rng);
  auto fast = kernels::pixel_shuffle_forward(x, 3);
  auto slow = ref::pixel_shuffle(x, 3);
  REQUIRE(fast.shape == slow.shape);
  for (int64_t i = 0; i < fast.numel(); ++i) CHECK(fast[i] == slow[i]);
  auto back = kernels::pixel_unshuffle(fast, 3);
  REQUIRE(back.shape == x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("nearest_upsample adjoint identity <up(x), y> == <x, sum_pool(y)>") {
  auto rng = stream_rng(13, "test-adjoint");
  for (int factor : {2, 3, 4}) {
    Tensor<double> x = randf({1, 3, 4, 4}, rng).cast<double>();
    Tensor<double> y = randf({1, 3, 4 * factor, 4 * factor}, rng).cast<double>();
    auto up = kernels::nearest_upsample_forward(x, factor);
    auto pooled = ref::sum_pool(y, factor);
    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < up.numel(); ++i) lhs += up[i] * y[i];
    for (int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * pooled[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("roi_align with a full-image box at native size is the identity") {
  auto rng = stream_rng(14, "test-roi-id");
  Tensor<float> x = randf({2, 3, 6, 5}, rng);
  auto y = kernels::roi_align_forward(x, kernels::RoiBox{0, 0, 1, 1}, 6, 5);
  REQUIRE(y.shape == x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("roi_align full-box upsampling matches the bilinear oracle") {
  auto rng = stream_rng(15, "test-roi-bilinear");
  Tensor<float> x = randf({1, 2, 4, 4}, rng);
  for (int factor : {2, 4}) {
    auto fast = kernels::roi_align_forward(x, kernels::RoiBox{0, 0, 1, 1}, 4 * factor, 4 * factor);
    auto slow = ref::bilinear_upsample(x, factor);
    REQUIRE(fast.shape == slow.shape);
    for (int64_t i = 0; i < fast.numel(); ++i)
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-6));
  }
}

TEST_CASE("roi_align rejects degenerate boxes") {
  Tape<float> tape;
  Var<float> x = make_constant(Tensor<float>::zeros({1, 1, 4, 4}));
  CHECK_THROWS(roi_align(tape, x, kernels::RoiBox{0.5, 0.0, 0.5, 1.0}, 2, 2));
  CHECK_THROWS(roi_align(tape, x, kernels::RoiBox{-0.1, 0.0, 1.0, 1.0}, 2, 2));
}

TEST_CASE("layer_norm normalizes over the channel axis") {
  auto rng = stream_rng(16, "test-ln");
  Tape<float> tape;
  Var<float> x = make_constant(randf({2, 8, 3, 3}, rng));
  Var<float> g = make_constant(Tensor<float>::full({8}, 1.0f));
  Var<float> b = make_constant(Tensor<float>::zeros({8}));
  Var<float> y = layer_norm(tape, x, g, b, 1e-5f, 1);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t h = 0; h < 3; ++h)
      for (int64_t w = 0; w < 3; ++w) {
        float mean = 0, var = 0;
        for (int64_t c = 0; c < 8; ++c) mean += y.val().at4(n, c, h, w);
        mean /= 8;
        for (int64_t c = 0; c < 8; ++c) {
          const float d = y.val().at4(n, c, h, w) - mean;
          var += d * d;
        }
        CHECK(mean == doctest::Approx(0.0f).epsilon(1e-4));
        CHECK(var / 8 == doctest::Approx(1.0f).epsilon(1e-2));
      }
}

TEST_CASE("softmax rows are a probability distribution") {
  auto rng = stream_rng(17, "test-softmax");
  Tape<float> tape;
  Var<float> y = softmax(tape, make_constant(randf({2, 5, 2, 2}, rng)), 1);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t h = 0; h < 2; ++h)
      for (int64_t w = 0; w < 2; ++w) {
        float s = 0;
        for (int64_t c = 0; c < 5; ++c) {
          const float v = y.val().at4(n, c, h, w);
          CHECK(v >= 0.0f);
          s += v;
        }
        CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));
      }
}

TEST_CASE("linear computes xW^T + b over the trailing axis") {
  Tape<float> tape;
  Var<float> x = make_constant(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var<float> w = make_constant(Tensor<float>({2, 3}, {1, 0, 0, 0, 1, 1}));
  Var<float> b = make_constant(Tensor<float>({2}, {10, 20}));
  Var<float> y = linear(tape, x, w, b);
  REQUIRE(y.val().shape == Shape{2, 2});
  CHECK(y.val()[0] == 11.0f);
  CHECK(y.val()[1] == 25.0f);
  CHECK(y.val()[2] == 14.0f);
  CHECK(y.val()[3] == 31.0f);
}

TEST_CASE("bce_with_logits reference values") {
  // logit 0 against any target gives log 2
  {
    Tape<double> tape;
    Var<double> l = make_constant(Tensor<double>({1, 1, 1, 1}, {0.0}));
    Var<double> t = make_constant(Tensor<double>({1, 1, 1, 1}, {1.0}));
    Var<double> loss = bce_with_logits(tape, l, t);
    CHECK(loss.val()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // large correct logit saturates to ~0, large wrong logit to ~|x|
  {
    Tape<double> tape;
    Var<double> l = make_constant(Tensor<double>({2}, {30.0, -30.0}));
    Var<double> t = make_constant(Tensor<double>({2}, {1.0, 1.0}));
    Var<double> loss = bce_with_logits(tape, l, t);
    CHECK(loss.val()[0] == doctest::Approx(15.0).epsilon(1e-9));
  }
  // stable at extreme logits: no overflow to inf/nan
  {
    Tape<double> tape;
    Var<double> l = make_constant(Tensor<double>({2}, {1000.0, -1000.0}));
    Var<double> t = make_constant(Tensor<double>({2}, {0.0, 1.0}));
    Var<double> loss = bce_with_logits(tape, l, t);
    CHECK(std::isfinite(loss.val()[0]));
    CHECK(loss.val()[0] == doctest::Approx(1000.0).epsilon(1e-9));
  }
}

TEST_CASE("embed_mix blends embedding rows by per-pixel weights") {
  Tape<float> tape;
  Var<float> w = make_constant(Tensor<float>({1, 2, 1, 2}, {0.25f, 1.0f, 0.75f, 0.0f}));
  Var<float> e = make_constant(Tensor<float>({2, 3}, {1, 2, 3, 5, 6, 7}));
  Var<float> y = embed_mix(tape, w, e);
  REQUIRE(y.val().shape == Shape{1, 3, 1, 2});
  CHECK(y.val().at4(0, 0, 0, 0) == doctest::Approx(0.25f * 1 + 0.75f * 5));
  CHECK(y.val().at4(0, 1, 0, 0) == doctest::Approx(0.25f * 2 + 0.75f * 6));
  CHECK(y.val().at4(0, 2, 0, 1) == doctest::Approx(3.0f));
}

TEST_CASE("kernels are thread-count independent") {
  auto rng = stream_rng(18, "test-threads");
  Tensor<float> x = randf({2, 4, 12, 12}, rng);
  Tensor<float> w = randf({8, 4, 3, 3}, rng);
#ifdef _OPENMP
  auto with_threads = [&](int n) {
    omp_set_num_threads(n);
    return kernels::conv2d_forward(x, w, nullptr, 1, 1, 1, 1);
  };
  auto a = with_threads(1);
  auto b = with_threads(4);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  omp_set_num_threads(omp_get_num_procs());
#else
  auto a = kernels::conv2d_forward(x, w, nullptr, 1, 1, 1, 1);
  CHECK(a.numel() == 2 * 8 * 12 * 12);
#endif
}
