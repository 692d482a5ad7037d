#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace gsfuse {

/// Caps the worker count used by parallel_for. 0 means hardware concurrency.
void set_thread_limit(unsigned n);
unsigned thread_limit();

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, so any
/// fn that only writes slot i produces results independent of the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_block = 256) {
  const std::size_t workers =
      std::min<std::size_t>(thread_limit(), (n + min_block - 1) / std::max<std::size_t>(min_block, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
}

}  // namespace gsfuse
