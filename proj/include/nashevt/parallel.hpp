#pragma once

// Deterministic replication scheduling. Indices are statically partitioned
// across a fixed number of threads and results land in index order, so the
// output never depends on the worker count or on timing.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nashevt/errors.hpp"

namespace nashevt {

/// Calls fn(i) for i in [0, count) on `workers` threads. Worker w takes the
/// contiguous block [w*count/W, (w+1)*count/W). The first exception (by index)
/// is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> error_index(workers, count);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      const std::size_t lo = w * count / workers;
      const std::size_t hi = (w + 1) * count / workers;
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          error_index[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  std::size_t first = count;
  std::exception_ptr err;
  for (std::size_t w = 0; w < workers; ++w)
    if (errors[w] && error_index[w] < first) {
      first = error_index[w];
      err = errors[w];
    }
  if (err) std::rethrow_exception(err);
}

struct FailureRecord {
  std::size_t index = 0;
  std::size_t step = 0;
  std::string message;
};

/// Per-replication results; a replication that throws NumericalFailure is
/// recorded as a failure instead of aborting the batch.
template <class T>
struct ReplicationBatch {
  std::vector<std::optional<T>> results;
  std::vector<FailureRecord> failures;

  std::size_t attempted() const noexcept { return results.size(); }
  std::size_t failed() const noexcept { return failures.size(); }
  double failure_rate() const noexcept {
    return results.empty() ? 0.0 : static_cast<double>(failures.size()) / static_cast<double>(results.size());
  }
  std::vector<T> successes() const {
    std::vector<T> out;
    for (const auto& r : results)
      if (r) out.push_back(*r);
    return out;
  }
};

template <class T, class Fn>
ReplicationBatch<T> run_replications(std::size_t count, std::size_t workers, Fn&& fn) {
  ReplicationBatch<T> batch;
  batch.results.resize(count);
  std::vector<std::optional<FailureRecord>> fails(count);
  parallel_for(count, workers, [&](std::size_t i) {
    try {
      batch.results[i] = fn(i);
    } catch (const NumericalFailure& e) {
      fails[i] = FailureRecord{i, e.step(), e.what()};
    }
  });
  for (auto& f : fails)
    if (f) batch.failures.push_back(std::move(*f));
  return batch;
}

inline std::size_t default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

}  // namespace nashevt
