// Times the OpenMP kernels against their serial references and prints a
// small table. Shapes roughly match one transformer block at base size.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tweetlm/kernels.hpp"
#include "tweetlm/rng.hpp"

using namespace tweetlm;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

std::vector<float> randv(size_t n, std::mt19937_64& g) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng::uniform01(g) * 2.0 - 1.0);
  return v;
}

void report(const char* name, double flops, double serial_ms, double par_ms) {
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx %10.2f GFLOP/s\n", name, serial_ms, par_ms,
              serial_ms / par_ms, flops / (par_ms * 1e6));
}

}  // namespace

int main() {
  auto g = rng::make_engine(42);
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not enabled; both columns run the same code\n");
#endif
  std::printf("%-22s %13s %13s %9s %17s\n", "kernel", "serial", "openmp", "speedup",
              "openmp rate");

  {
    const int64_t m = 512, k = 768, n = 768;
    const auto a = randv(static_cast<size_t>(m * k), g);
    const auto b = randv(static_cast<size_t>(k * n), g);
    std::vector<float> c(static_cast<size_t>(m * n));
    const double flops = 2.0 * static_cast<double>(m) * k * n;
    const double s = time_ms([&] {
      kernels::serial::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
    }, 3);
    const double p = time_ms([&] {
      kernels::par::matmul(a.data(), b.data(), c.data(), m, k, n, false, false);
    }, 3);
    report("matmul 512x768x768", flops, s, p);
  }

  {
    const int64_t grp = 24, t = 256, dh = 64;
    const auto a = randv(static_cast<size_t>(grp * t * dh), g);
    const auto b = randv(static_cast<size_t>(grp * t * dh), g);
    std::vector<float> c(static_cast<size_t>(grp * t * t));
    const double flops = 2.0 * static_cast<double>(grp) * t * t * dh;
    const double s = time_ms(
        [&] { kernels::serial::bmm(a.data(), b.data(), c.data(), grp, t, dh, t, false, true); },
        3);
    const double p = time_ms(
        [&] { kernels::par::bmm(a.data(), b.data(), c.data(), grp, t, dh, t, false, true); },
        3);
    report("bmm qk^T 24x256x64", flops, s, p);
  }

  {
    const int64_t bsz = 8, heads = 12, t = 256;
    const auto scores = randv(static_cast<size_t>(bsz * heads * t * t), g);
    std::vector<uint8_t> mask(static_cast<size_t>(bsz * t), 1);
    std::vector<float> probs(scores.size());
    const double flops = 4.0 * static_cast<double>(scores.size());
    const double s = time_ms([&] {
      kernels::serial::attn_softmax(scores.data(), mask.data(), probs.data(), bsz, heads, t, t);
    }, 5);
    const double p = time_ms([&] {
      kernels::par::attn_softmax(scores.data(), mask.data(), probs.data(), bsz, heads, t, t);
    }, 5);
    report("attn_softmax 8x12x256", flops, s, p);
  }

  {
    const int64_t rows = 2048, cols = 768;
    const auto x = randv(static_cast<size_t>(rows * cols), g);
    const auto gain = randv(static_cast<size_t>(cols), g);
    const auto bias = randv(static_cast<size_t>(cols), g);
    std::vector<float> y(x.size()), mu(static_cast<size_t>(rows)), rs(static_cast<size_t>(rows));
    const double flops = 8.0 * static_cast<double>(rows) * cols;
    const double s = time_ms([&] {
      kernels::serial::layernorm_fwd(x.data(), gain.data(), bias.data(), y.data(), mu.data(),
                                     rs.data(), rows, cols, 1e-12f);
    }, 5);
    const double p = time_ms([&] {
      kernels::par::layernorm_fwd(x.data(), gain.data(), bias.data(), y.data(), mu.data(),
                                  rs.data(), rows, cols, 1e-12f);
    }, 5);
    report("layernorm 2048x768", flops, s, p);
  }

  {
    const int64_t n = 2048 * 3072;
    const auto x = randv(static_cast<size_t>(n), g);
    std::vector<float> y(static_cast<size_t>(n));
    const double flops = 8.0 * static_cast<double>(n);
    const double s = time_ms([&] { kernels::serial::gelu_fwd(x.data(), y.data(), n); }, 3);
    const double p = time_ms([&] { kernels::par::gelu_fwd(x.data(), y.data(), n); }, 3);
    report("gelu 6.3M", flops, s, p);
  }

  {
    const int64_t n = 4 * 1000 * 1000;
    const auto grad = randv(static_cast<size_t>(n), g);
    std::vector<float> p(static_cast<size_t>(n)), m(static_cast<size_t>(n)),
        v(static_cast<size_t>(n));
    const double flops = 10.0 * static_cast<double>(n);
    const double s = time_ms([&] {
      kernels::serial::adam_update(p.data(), grad.data(), m.data(), v.data(), n, 1e-3f, 0.9f,
                                   0.999f, 1e-8f, int64_t{1}, 0.0f);
    }, 3);
    const double pr = time_ms([&] {
      kernels::par::adam_update(p.data(), grad.data(), m.data(), v.data(), n, 1e-3f, 0.9f,
                                0.999f, 1e-8f, int64_t{1}, 0.0f);
    }, 3);
    report("adam 4M params", flops, s, pr);
  }

  return 0;
}
