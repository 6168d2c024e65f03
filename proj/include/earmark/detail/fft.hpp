#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

namespace earmark::detail {

// FFTW planning is not thread-safe, execution with the new-array interface is.
// Plans are created once per size under a lock and kept for the process lifetime.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  std::pair<fftw_plan, fftw_plan> get(std::size_t n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> real(n);
    std::vector<std::complex<double>> spec(n / 2 + 1);
    auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(), cplx, flags);
    fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real.data(), flags);
    return plans_.emplace(n, std::make_pair(fwd, inv)).first->second;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.first);
      fftw_destroy_plan(p.second);
    }
  }

  std::mutex mutex_;
  std::map<std::size_t, std::pair<fftw_plan, fftw_plan>> plans_;
};

/// Real-input FFT of fixed length n. forward() yields n/2+1 bins; inverse()
/// is unnormalized (a forward/inverse round trip scales by n).
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    auto plans = PlanCache::instance().get(n);
    forward_ = plans.first;
    inverse_ = plans.second;
  }

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    // r2c preserves its input by default, the const_cast is never written through.
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  /// Destroys `in` (FFTW c2r semantics).
  void inverse(std::span<std::complex<double>> in, std::span<double> out) const {
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  }

 private:
  std::size_t n_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace earmark::detail
