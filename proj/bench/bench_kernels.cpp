// Compares the OpenMP batch kernels against the serial per-pair reference
// on a large synthetic batch: wall time plus the largest numeric deviation.
//
// Usage: bench_kernels [entries_per_class] [classes] [dim] [repeats]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "ltc/gradients.hpp"
#include "ltc/losses.hpp"
#include "ltc/reference.hpp"
#include "ltc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ltc;

namespace {

ContrastiveBatch make_batch(Rng& rng, int classes, int per_class, std::size_t dim) {
  std::vector<Embedding> entries;
  std::map<int, std::size_t> counts;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      Vec v(dim);
      for (double& x : v) x = rng.gaussian();
      entries.push_back(Embedding{normalize(v), c, k});
    }
    counts[c] = 100 + rng.bounded(1000);
  }
  return build_batch(std::move(entries), std::move(counts));
}

template <typename F>
double time_ms(int repeats, F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         static_cast<double>(repeats);
}

}  // namespace

int main(int argc, char** argv) {
  const int per_class = argc > 1 ? std::atoi(argv[1]) : 32;
  const int classes = argc > 2 ? std::atoi(argv[2]) : 16;
  const auto dim = static_cast<std::size_t>(argc > 3 ? std::atoi(argv[3]) : 32);
  const int repeats = argc > 4 ? std::atoi(argv[4]) : 5;

  Rng rng(42);
  auto batch = make_batch(rng, classes, per_class, dim);
  auto acl_batch = make_batch(rng, classes, per_class, dim);
  {
    std::vector<Embedding> centers;
    for (int c = 0; c < classes; ++c) {
      Vec v(dim);
      for (double& x : v) x = rng.gaussian();
      centers.push_back(Embedding{normalize(v), c, kCenterView});
    }
    attach_centers(acl_batch, centers);
  }
  const auto weights = batch_negative_weights(acl_batch);
  const Temperature tau(0.1);

  std::printf("batch: %d classes x %d entries, dim %zu, %d repeats\n", classes,
              per_class, dim, repeats);
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled\n");
#endif

  double kernel_loss = 0.0, serial_loss = 0.0;
  const double t_loss_kernel =
      time_ms(repeats, [&] { kernel_loss = batch_scl_loss(batch, tau).mean; });
  const double t_loss_serial =
      time_ms(repeats, [&] { serial_loss = ref::batch_scl_mean(batch, tau.tau); });
  std::printf("scl loss     kernel %8.2f ms   serial %8.2f ms   speedup %5.2fx   |diff| %.3e\n",
              t_loss_kernel, t_loss_serial, t_loss_serial / t_loss_kernel,
              std::abs(kernel_loss - serial_loss));

  Matrix kernel_grad, serial_grad;
  const double t_grad_kernel = time_ms(repeats, [&] {
    kernel_grad = batch_contrastive_gradient(ContrastiveKind::scl, batch, nullptr, tau)
                      .per_entry;
  });
  const double t_grad_serial =
      time_ms(repeats, [&] { serial_grad = ref::batch_scl_gradient(batch, tau.tau); });
  double max_diff = 0.0;
  for (std::size_t i = 0; i < kernel_grad.data.size(); ++i)
    max_diff = std::max(max_diff,
                        std::abs(kernel_grad.data[i] - serial_grad.data[i]));
  std::printf("scl gradient kernel %8.2f ms   serial %8.2f ms   speedup %5.2fx   |diff| %.3e\n",
              t_grad_kernel, t_grad_serial, t_grad_serial / t_grad_kernel, max_diff);

  double acl_kernel = 0.0, acl_serial = 0.0;
  const double t_acl_kernel = time_ms(
      repeats, [&] { acl_kernel = batch_acl_loss(acl_batch, weights, tau).mean; });
  const double t_acl_serial = time_ms(
      repeats, [&] { acl_serial = ref::batch_acl_mean(acl_batch, weights, tau.tau); });
  std::printf("acl loss     kernel %8.2f ms   serial %8.2f ms   speedup %5.2fx   |diff| %.3e\n",
              t_acl_kernel, t_acl_serial, t_acl_serial / t_acl_kernel,
              std::abs(acl_kernel - acl_serial));

  const double t_acl_grad = time_ms(repeats, [&] {
    batch_contrastive_gradient(ContrastiveKind::acl, acl_batch, &weights, tau);
  });
  std::printf("acl gradient kernel %8.2f ms   (no serial counterpart)\n", t_acl_grad);
  return 0;
}
