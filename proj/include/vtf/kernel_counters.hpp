#pragma once

#include <cstdint>

namespace vtf {

/// Invocation counts of the dense kernels, split by asymptotic cost.
///
/// Cubic kernels are Cholesky, eigendecomposition, dense n x n products and
/// triangular solves with a matrix right-hand side. Quadratic kernels are the
/// Frobenius inner product and friends. Counting is opt-in: kernels only
/// record into the innermost CountingScope active on the calling thread.
struct KernelCounters {
  std::uint64_t cubic_calls = 0;
  std::uint64_t quadratic_calls = 0;

  KernelCounters& operator+=(const KernelCounters& other) {
    cubic_calls += other.cubic_calls;
    quadratic_calls += other.quadratic_calls;
    return *this;
  }
};

namespace detail {
inline thread_local KernelCounters* active_counters = nullptr;
}  // namespace detail

/// Installs `counters` as the recording target for the current thread.
///
/// Scopes nest: on destruction the counts gathered inside are added to the
/// enclosing scope (if any), so an outer scope always sees the totals.
class CountingScope {
 public:
  explicit CountingScope(KernelCounters& counters)
      : counters_(counters), start_(counters), parent_(detail::active_counters) {
    detail::active_counters = &counters_;
  }
  ~CountingScope() {
    detail::active_counters = parent_;
    if (parent_ != nullptr) {
      parent_->cubic_calls += counters_.cubic_calls - start_.cubic_calls;
      parent_->quadratic_calls += counters_.quadratic_calls - start_.quadratic_calls;
    }
  }
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  KernelCounters& counters_;
  KernelCounters start_;
  KernelCounters* parent_;
};

namespace detail {
inline void count_cubic() {
  if (active_counters != nullptr) ++active_counters->cubic_calls;
}
inline void count_quadratic() {
  if (active_counters != nullptr) ++active_counters->quadratic_calls;
}
}  // namespace detail

}  // namespace vtf
