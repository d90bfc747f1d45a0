#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

#include "dequant/numeric.hpp"
#include "dequant/rng.hpp"

namespace dequant {

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::uint64_t n = 0;
};

// Thread count resolution: explicit argument wins, then DEQUANT_THREADS,
// then single-threaded. Results never depend on this choice.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DEQUANT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

namespace detail {
inline constexpr std::uint64_t kMcBlockSize = 1 << 14;

struct BlockStat {
  double sum = 0.0;
  double sumsq = 0.0;
};
}  // namespace detail

// Mean and standard error of fn(psi) over n draws from `sampler`.
//
// The draw sequence is split into fixed-size blocks; block b uses stream
// seed.stream + b, and the per-block partials are reduced in block order.
// That makes the estimate a pure function of (sampler, fn, n, seed),
// independent of the number of worker threads.
//
// Sampler requirement: int dim() const, void draw(Rng&, Eigen::VectorXd&) const.
template <class Sampler, class Fn>
McEstimate mc_mean(const Sampler& sampler, Fn&& fn, std::uint64_t n,
                   RngSeed seed, int threads = 0) {
  if (n == 0) return {};
  const std::uint64_t nblocks = (n + detail::kMcBlockSize - 1) / detail::kMcBlockSize;
  std::vector<detail::BlockStat> stats(nblocks);

  auto run_block = [&](std::uint64_t b) {
    Rng rng({seed.seed, seed.stream + b});
    const std::uint64_t begin = b * detail::kMcBlockSize;
    const std::uint64_t count = std::min<std::uint64_t>(detail::kMcBlockSize, n - begin);
    Eigen::VectorXd psi(sampler.dim());
    KahanSum sum, sumsq;
    for (std::uint64_t i = 0; i < count; ++i) {
      sampler.draw(rng, psi);
      const double v = fn(psi);
      sum.add(v);
      sumsq.add(v * v);
    }
    stats[b] = {sum.value(), sumsq.value()};
  };

  const int nthreads = std::min<int>(resolve_threads(threads),
                                     static_cast<int>(std::min<std::uint64_t>(nblocks, 64)));
  if (nthreads <= 1) {
    for (std::uint64_t b = 0; b < nblocks; ++b) run_block(b);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        for (std::uint64_t b = next.fetch_add(1); b < nblocks; b = next.fetch_add(1)) {
          run_block(b);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  KahanSum total, total_sq;
  for (const auto& s : stats) {
    total.add(s.sum);
    total_sq.add(s.sumsq);
  }
  McEstimate est;
  est.n = n;
  est.mean = total.value() / static_cast<double>(n);
  if (n > 1) {
    const double nn = static_cast<double>(n);
    double var = (total_sq.value() - nn * est.mean * est.mean) / (nn - 1.0);
    if (var < 0.0) var = 0.0;  // rounding on (near-)constant statistics
    est.se = std::sqrt(var / nn);
  }
  return est;
}

// Isotropic N(0, sigma^2 I): the building block for white-noise draws.
struct IsotropicSampler {
  int dimension;
  double sigma;

  int dim() const { return dimension; }
  void draw(Rng& rng, Eigen::VectorXd& out) const {
    out.resize(dimension);
    for (int i = 0; i < dimension; ++i) out[i] = sigma * rng.normal();
  }
};

}  // namespace dequant
