// Times the serial reference kernels against the OpenMP variants at a few
// matmul sizes and prints a comparison table. The two must agree bit-exactly;
// this binary asserts that on every run before reporting throughput.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "trace/kernels.hpp"
#include "trace/rng.hpp"

using namespace trace;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<double>& v, RngStream& rng) {
  for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
}

}  // namespace

int main() {
  std::printf("openmp: %s, max threads: %d\n\n", kernels::openmp_enabled() ? "yes" : "no",
              kernels::max_threads());
  std::printf("%-22s %12s %12s %9s\n", "kernel", "serial ms", "parallel ms", "speedup");

  RngStream rng(2024);
  const std::size_t sizes[][3] = {{64, 64, 64}, {256, 256, 256}, {512, 512, 512},
                                  {1024, 256, 1024}};
  for (const auto& s : sizes) {
    std::size_t m = s[0], k = s[1], n = s[2];
    std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
    fill(a, rng);
    fill(b, rng);

    int reps = m * k * n > (1u << 24) ? 3 : 10;
    double t_serial =
        time_ms([&] { kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n); }, reps);
    double t_parallel =
        time_ms([&] { kernels::matmul_parallel(a.data(), b.data(), c2.data(), m, k, n); }, reps);
    if (std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) != 0) {
      std::fprintf(stderr, "FATAL: serial and parallel matmul disagree at %zux%zux%zu\n", m, k, n);
      return 1;
    }
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %zux%zux%zu", m, k, n);
    std::printf("%-22s %12.3f %12.3f %8.2fx\n", label, t_serial, t_parallel,
                t_serial / t_parallel);
  }

  {
    std::size_t n = 1 << 20;
    std::vector<double> x(n), y1(n), y2(n);
    fill(x, rng);
    double t_serial = time_ms([&] { kernels::gelu_serial(x.data(), y1.data(), n); }, 10);
    double t_parallel = time_ms([&] { kernels::gelu_parallel(x.data(), y2.data(), n); }, 10);
    if (std::memcmp(y1.data(), y2.data(), n * sizeof(double)) != 0) {
      std::fprintf(stderr, "FATAL: serial and parallel gelu disagree\n");
      return 1;
    }
    std::printf("%-22s %12.3f %12.3f %8.2fx\n", "gelu 1M", t_serial, t_parallel,
                t_serial / t_parallel);
  }
  return 0;
}
