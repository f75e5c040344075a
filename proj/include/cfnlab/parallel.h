// Copyright 2026 The cfnlab Authors.
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

#ifndef CFNLAB_PARALLEL_H_
#define CFNLAB_PARALLEL_H_

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cfnlab {

// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
// round-robin partition. Callers write results into slot i and reduce in
// index order afterwards, so the outcome does not depend on `threads`.
// The first exception thrown by any fn(i) is rethrown.
template <class F>
void parallel_for(size_t n, size_t threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const size_t workers = threads < n ? threads : n;
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace cfnlab

#endif  // CFNLAB_PARALLEL_H_
