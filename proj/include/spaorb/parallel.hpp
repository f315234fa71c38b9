#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace spaorb {

// Parallel kernels keep a serial reference path; tests compare the two.
enum class Execution { serial, parallel };

/// Runs fn(i) for i in [0, n) and stores results by index, so output order
/// never depends on scheduling. The first exception (lowest index) is
/// rethrown after the loop.
template <typename Result, typename Fn>
std::vector<Result> map_indexed(std::size_t n, Execution exec, Fn &&fn) {
  std::vector<Result> out(n);
  std::vector<std::exception_ptr> errors(n);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      try {
        out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (const auto &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

int max_threads();

} // namespace spaorb
