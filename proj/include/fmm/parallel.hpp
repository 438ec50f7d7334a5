#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fmm {

//! Fixed set of workers executing one contiguous-chunk loop at a time.
//! run() returns after every chunk finished (barrier between phases).
class WorkerPool {
 public:
  explicit WorkerPool(int workers) : size_(workers < 1 ? 1 : workers) {
    for (int w = 1; w < size_; ++w) threads_.emplace_back([this, w] { worker_loop(w); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return size_; }

  //! Calls body(begin, end, worker) on `size()` contiguous slices of [0, count).
  void run(std::size_t count, const std::function<void(std::size_t, std::size_t, int)>& body) {
    if (count == 0) return;
    if (size_ == 1) {
      body(0, count, 0);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      body_ = &body;
      count_ = count;
      pending_ = size_ - 1;
      ++generation_;
    }
    wake_.notify_all();
    run_slice(0);
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  void run_slice(int w) {
    const std::size_t n = count_, k = static_cast<std::size_t>(size_);
    const std::size_t begin = n * static_cast<std::size_t>(w) / k;
    const std::size_t end = n * (static_cast<std::size_t>(w) + 1) / k;
    if (begin < end) (*body_)(begin, end, w);
  }

  void worker_loop(int w) {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
      }
      run_slice(w);
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  int size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_, done_;
  const std::function<void(std::size_t, std::size_t, int)>* body_ = nullptr;
  std::size_t count_ = 0;
  int pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

//! Runs `item(i)` for i in [0, count) with the outermost loop split across workers.
//! Items must write disjoint outputs.
template <class Item>
void parallel_apply(WorkerPool& pool, std::size_t count, Item&& item) {
  pool.run(count, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) item(i);
  });
}

}  // namespace fmm
