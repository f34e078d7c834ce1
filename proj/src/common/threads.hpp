// Copyright 2026 The MicroSeg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace microseg {

// Worker cap: MICROSEG_THREADS if set and positive, else hardware concurrency.
inline int WorkerCount() {
  if (const char* env = std::getenv("MICROSEG_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Explicit request (> 0) capped by MICROSEG_THREADS; otherwise WorkerCount().
inline int ResolveWorkers(int requested) {
  if (requested <= 0) return WorkerCount();
  if (const char* env = std::getenv("MICROSEG_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) return std::min(requested, cap);
  }
  return requested;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
// processed exactly once; results must be written to per-index slots by the
// caller so that merge order stays deterministic. The first exception thrown
// by any task is rethrown after all workers join.
inline void ParallelFor(size_t n, int workers,
                        const std::function<void(size_t)>& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace microseg
