// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Persistent worker pool with static chunking. Work item t always receives
// the same contiguous index range for a given (n, pool size), so per-chunk
// results can be merged in chunk order and stay bit-identical run to run.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace chs {

class ThreadPool {
public:
  // n_threads >= 1; 1 means all work runs inline on the calling thread.
  explicit ThreadPool(int n_threads);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int size() const { return n_threads_; }

  // Splits [0, n) into size() contiguous chunks and invokes
  // fn(chunk_index, begin, end) concurrently (chunk 0 on the caller).
  // Blocks until every chunk finished; rethrows the first worker exception.
  void run_chunks(std::int64_t n,
                  const std::function<void(int, std::int64_t, std::int64_t)>& fn);

  // Process-wide pool used by the renderer and losses.
  static ThreadPool& global();
  // Recreates the global pool with n threads (call before heavy work).
  static void set_global_threads(int n);

private:
  struct Impl;
  Impl* impl_;
  int n_threads_;
};

}  // namespace chs
