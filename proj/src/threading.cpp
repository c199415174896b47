// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/threading.hpp"

#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

#include "chs/errors.hpp"

namespace chs {

struct ThreadPool::Impl {
  std::vector<std::thread> workers;
  std::mutex mutex;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(int, std::int64_t, std::int64_t)>* job = nullptr;
  std::int64_t job_n = 0;
  std::uint64_t epoch = 0;
  int pending = 0;
  bool stop = false;
  std::exception_ptr first_error;
  int n_threads = 1;

  static std::pair<std::int64_t, std::int64_t> chunk(std::int64_t n, int t,
                                                     int parts) {
    const std::int64_t begin = n * t / parts;
    const std::int64_t end = n * (t + 1) / parts;
    return {begin, end};
  }

  void worker_loop(int chunk_index) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int, std::int64_t, std::int64_t)>* fn;
      std::int64_t n;
      {
        std::unique_lock<std::mutex> lk(mutex);
        cv_work.wait(lk, [&] { return stop || epoch != seen; });
        if (stop) return;
        seen = epoch;
        fn = job;
        n = job_n;
      }
      try {
        auto [b, e] = chunk(n, chunk_index, n_threads);
        if (b < e) (*fn)(chunk_index, b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mutex);
        if (!first_error) first_error = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lk(mutex);
        if (--pending == 0) cv_done.notify_one();
      }
    }
  }
};

ThreadPool::ThreadPool(int n_threads) : impl_(new Impl), n_threads_(n_threads) {
  if (n_threads < 1) throw DomainError("ThreadPool: need at least one thread");
  impl_->n_threads = n_threads;
  for (int t = 1; t < n_threads; ++t)
    impl_->workers.emplace_back([this, t] { impl_->worker_loop(t); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(impl_->mutex);
    impl_->stop = true;
  }
  impl_->cv_work.notify_all();
  for (auto& w : impl_->workers) w.join();
  delete impl_;
}

void ThreadPool::run_chunks(
    std::int64_t n,
    const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  if (n_threads_ == 1) {
    fn(0, 0, n);
    return;
  }
  {
    std::lock_guard<std::mutex> lk(impl_->mutex);
    impl_->job = &fn;
    impl_->job_n = n;
    impl_->first_error = nullptr;
    impl_->pending = n_threads_ - 1;
    ++impl_->epoch;
  }
  impl_->cv_work.notify_all();
  auto [b, e] = Impl::chunk(n, 0, n_threads_);
  std::exception_ptr main_error;
  try {
    if (b < e) fn(0, b, e);
  } catch (...) {
    main_error = std::current_exception();
  }
  {
    std::unique_lock<std::mutex> lk(impl_->mutex);
    impl_->cv_done.wait(lk, [&] { return impl_->pending == 0; });
    impl_->job = nullptr;
  }
  if (main_error) std::rethrow_exception(main_error);
  if (impl_->first_error) std::rethrow_exception(impl_->first_error);
}

namespace {
std::unique_ptr<ThreadPool>& global_slot() {
  static std::unique_ptr<ThreadPool> pool = std::make_unique<ThreadPool>(1);
  return pool;
}
}  // namespace

ThreadPool& ThreadPool::global() { return *global_slot(); }

void ThreadPool::set_global_threads(int n) {
  global_slot() = std::make_unique<ThreadPool>(n);
}

}  // namespace chs
