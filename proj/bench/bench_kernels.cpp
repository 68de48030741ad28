// Timing harness for the hot kernels: OpenMP implementations vs the serial
// reference versions the tests check them against. Prints one row per kernel
// with the best-of-N wall time for each side and the speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "attrbench/common.hpp"
#include "attrbench/kernels.hpp"

namespace {

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-24s %10.2f ms %10.2f ms %7.2fx\n", name, serial_ms, omp_ms, serial_ms / omp_ms);
}

std::vector<double> randu(size_t n, uint64_t seed) {
  atb::RngStream rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif
  std::printf("%-24s %13s %13s %8s\n", "kernel", "serial", "openmp", "speedup");

  const int reps = 5;

  {  // conv, batch 16 of 16x32x32 -> 32 channels, 3x3
    atb::Conv2dDims d{16, 16, 32, 32, 32, 3, 3, 1, 1};
    auto x = randu(static_cast<size_t>(d.n * d.ci * d.h * d.w), 1);
    auto w = randu(static_cast<size_t>(d.co * d.ci * d.kh * d.kw), 2);
    std::vector<double> y(static_cast<size_t>(d.n * d.co * d.ho() * d.wo()));
    auto gy = randu(y.size(), 3);
    std::vector<double> gx(x.size()), gw(w.size());

    row("conv2d forward",
        best_of(reps, [&] { atb::serial::conv2d_forward(x.data(), w.data(), nullptr, y.data(), d); }),
        best_of(reps, [&] { atb::kernels::conv2d_forward(x.data(), w.data(), nullptr, y.data(), d); }));
    row("conv2d backward_input",
        best_of(reps, [&] { atb::serial::conv2d_backward_input(gy.data(), w.data(), gx.data(), d); }),
        best_of(reps, [&] { atb::kernels::conv2d_backward_input(gy.data(), w.data(), gx.data(), d); }));
    row("conv2d backward_weight",
        best_of(reps, [&] { atb::serial::conv2d_backward_weight(gy.data(), x.data(), gw.data(), d); }),
        best_of(reps, [&] { atb::kernels::conv2d_backward_weight(gy.data(), x.data(), gw.data(), d); }));
  }

  {  // linear, batch 256 of 1024 -> 256
    int64_t n = 256, in = 1024, out = 256;
    auto x = randu(static_cast<size_t>(n * in), 4);
    auto w = randu(static_cast<size_t>(out * in), 5);
    std::vector<double> y(static_cast<size_t>(n * out));

    row("linear forward",
        best_of(reps,
                [&] { atb::serial::linear_forward(x.data(), w.data(), nullptr, y.data(), n, in, out); }),
        best_of(reps,
                [&] { atb::kernels::linear_forward(x.data(), w.data(), nullptr, y.data(), n, in, out); }));
  }
  return 0;
}
