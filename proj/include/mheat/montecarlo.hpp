#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mheat {

/// Monte Carlo run parameters shared by every estimator.
///
/// Reproducibility contract: results are a pure function of
/// (seed, n_paths, h, chunk, antithetic); the thread count never changes them.
struct McOptions {
  std::int64_t n_paths = 10000;
  double h = 0.0;          // 0 selects t / 200
  std::uint64_t seed = 1;
  int threads = 0;         // 0: MHEAT_THREADS, then hardware concurrency
  int chunk = 1024;        // sampling units per reduction chunk
  bool antithetic = true;  // paths 2j, 2j+1 share noise with opposite signs
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MHEAT_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

/// One-pass mean / centred second moment per component (Welford, merged with
/// Chan's pairwise update).
struct Welford {
  std::int64_t n = 0;
  std::vector<double> mean, m2;

  explicit Welford(int dim = 0) : mean(std::size_t(dim), 0.0), m2(std::size_t(dim), 0.0) {}

  void add(const double* x) {
    ++n;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      double d = x[i] - mean[i];
      mean[i] += d / double(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  void merge(const Welford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    double na = double(n), nb = double(o.n), nt = na + nb;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      double d = o.mean[i] - mean[i];
      mean[i] += d * nb / nt;
      m2[i] += o.m2[i] + d * d * na * nb / nt;
    }
    n += o.n;
  }

  double stderr_of(std::size_t i) const {
    if (n < 2) return 0.0;
    return std::sqrt(std::max(0.0, m2[i]) / double(n - 1) / double(n));
  }
};

/// Runs `per_path(stream, sign, out)` over all paths and reduces.
///
/// A sampling unit is one path, or an antithetic pair averaged into one
/// sample; units are independent, so the standard error is taken over units.
/// Units are grouped in fixed chunks whose partial accumulators are merged in
/// chunk order, which makes the result independent of scheduling.
template <class PerPath>
Welford run_paths(const McOptions& opt, int dim, PerPath&& per_path) {
  if (opt.n_paths < 2) throw std::invalid_argument("n_paths must be >= 2");
  if (opt.chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  const std::int64_t units = opt.antithetic ? (opt.n_paths + 1) / 2 : opt.n_paths;
  const std::int64_t n_chunks = (units + opt.chunk - 1) / opt.chunk;
  std::vector<Welford> parts(static_cast<std::size_t>(n_chunks), Welford(dim));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    std::vector<double> a(static_cast<std::size_t>(dim)), b(static_cast<std::size_t>(dim));
    for (;;) {
      std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      {
        std::lock_guard<std::mutex> lk(failure_mu);
        if (failure) return;
      }
      try {
        Welford acc(dim);
        std::int64_t lo = c * opt.chunk, hi = std::min(units, lo + opt.chunk);
        for (std::int64_t u = lo; u < hi; ++u) {
          if (opt.antithetic) {
            per_path(std::uint64_t(u), 1.0, a.data());
            per_path(std::uint64_t(u), -1.0, b.data());
            for (int i = 0; i < dim; ++i) a[std::size_t(i)] = 0.5 * (a[std::size_t(i)] + b[std::size_t(i)]);
          } else {
            per_path(std::uint64_t(u), 1.0, a.data());
          }
          acc.add(a.data());
        }
        parts[std::size_t(c)] = std::move(acc);
      } catch (...) {
        std::lock_guard<std::mutex> lk(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  int nt = int(std::min<std::int64_t>(resolve_threads(opt.threads), n_chunks));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  Welford total(dim);
  for (const auto& p : parts) total.merge(p);
  return total;
}

/// Paths actually simulated for a requested count (antithetic pairs round up).
inline std::int64_t effective_paths(const McOptions& opt) {
  return opt.antithetic ? 2 * ((opt.n_paths + 1) / 2) : opt.n_paths;
}

}  // namespace mheat
