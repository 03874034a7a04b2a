#include <chrono>
#include <cstdio>
#include <functional>

#include "baris/kernels.hpp"
#include "baris/reference.hpp"
#include "baris/rng.hpp"

// Times the parallel kernels against the serial reference implementations and
// reports the maximum elementwise difference between the two paths.

namespace {

using baris::Tensor;

Tensor<float> random_tensor(const baris::Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor<float> t(s);
  for (auto& v : t.data) v = d(rng);
  return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
  return dt.count() / reps;
}

double max_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

void report(const char* name, double par_ms, double ref_ms, double diff) {
  std::printf("%-22s parallel %8.3f ms   reference %8.3f ms   speedup %5.2fx   max|diff| %.2e\n",
              name, par_ms, ref_ms, ref_ms / par_ms, diff);
}

}  // namespace

int main() {
  auto rng = baris::stream_rng(7, "bench");
  const int reps = 5;

  {
    Tensor<float> x = random_tensor({4, 16, 64, 64}, rng);
    Tensor<float> w = random_tensor({16, 16, 3, 3}, rng);
    Tensor<float> b = random_tensor({16}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms(
        [&] { out_p = baris::kernels::conv2d_forward(x, w, &b, 1, 1, 1, 1); }, reps);
    const double tr = time_ms([&] { out_r = baris::ref::conv2d(x, w, &b, 1, 1, 1, 1); }, reps);
    report("conv2d 3x3", tp, tr, max_diff(out_p, out_r));
  }
  {
    Tensor<float> x = random_tensor({4, 64, 64, 64}, rng);
    Tensor<float> w = random_tensor({64, 1, 5, 5}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms(
        [&] { out_p = baris::kernels::conv2d_forward(x, w, nullptr, 1, 2, 2, 64); }, reps);
    const double tr = time_ms([&] { out_r = baris::ref::conv2d(x, w, nullptr, 1, 2, 2, 64); }, reps);
    report("conv2d depthwise 5x5", tp, tr, max_diff(out_p, out_r));
  }
  {
    Tensor<float> x = random_tensor({4, 32, 128, 128}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms(
        [&] { out_p = baris::kernels::max_pool_forward(x, 2, 2, 0, nullptr); }, reps);
    const double tr = time_ms([&] { out_r = baris::ref::max_pool2d(x, 2); }, reps);
    report("max_pool 2x2", tp, tr, max_diff(out_p, out_r));
  }
  {
    Tensor<float> x = random_tensor({4, 32, 32, 32}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms(
        [&] { out_p = baris::kernels::nearest_upsample_forward(x, 4); }, reps);
    const double tr = time_ms([&] { out_r = baris::ref::nearest_upsample(x, 4); }, reps);
    report("nearest_upsample x4", tp, tr, max_diff(out_p, out_r));
  }
  {
    Tensor<float> x = random_tensor({4, 64, 32, 32}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms([&] { out_p = baris::kernels::pixel_shuffle_forward(x, 4); }, reps);
    const double tr = time_ms([&] { out_r = baris::ref::pixel_shuffle(x, 4); }, reps);
    report("pixel_shuffle x4", tp, tr, max_diff(out_p, out_r));
  }
  {
    Tensor<float> x = random_tensor({4, 16, 32, 32}, rng);
    Tensor<float> out_p, out_r;
    const double tp = time_ms(
        [&] {
          out_p = baris::kernels::roi_align_forward(x, baris::kernels::RoiBox{0, 0, 1, 1}, 128, 128);
        },
        reps);
    const double tr = time_ms([&] { out_r = baris::ref::bilinear_upsample(x, 4); }, reps);
    report("roi_align upsample x4", tp, tr, max_diff(out_p, out_r));
  }
  return 0;
}
