#include "t2i/common.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace t2i {

namespace {

constexpr std::int64_t kParallelThreshold = 1 << 18;  // scalar ops

int env_thread_count() {
  if (const char* env = std::getenv("T2I_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1 && v <= 64) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(hw > 8 ? 8 : hw);
}

// Lazily started worker pool. Work is published as a closure plus a chunk
// table; each worker owns a fixed contiguous index range, so the floating
// point result never depends on the thread count.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool(env_thread_count());
    return pool;
  }

  int threads() const { return n_threads_; }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    int usable = static_cast<int>(std::min<std::int64_t>(n_threads_, n));
    if (usable <= 1) {
      fn(0, n);
      return;
    }
    {
      std::unique_lock<std::mutex> lock(m_);
      fn_ = &fn;
      total_ = n;
      chunks_ = usable;
      done_ = 0;
      ++generation_;
    }
    cv_work_.notify_all();
    // The caller works chunk 0 itself.
    run_chunk(0);
    std::unique_lock<std::mutex> lock(m_);
    cv_done_.wait(lock, [&] { return done_ >= chunks_ - 1; });
    fn_ = nullptr;
  }

 private:
  explicit Pool(int n_threads) : n_threads_(n_threads) {
    for (int t = 1; t < n_threads_; ++t)
      workers_.emplace_back([this, t] { worker_loop(t); });
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lock(m_);
      stop_ = true;
      ++generation_;
    }
    cv_work_.notify_all();
    for (auto& w : workers_) w.join();
  }

  void run_chunk(int chunk) {
    std::int64_t lo = total_ * chunk / chunks_;
    std::int64_t hi = total_ * (chunk + 1) / chunks_;
    (*fn_)(lo, hi);
  }

  void worker_loop(int id) {
    std::uint64_t seen = 0;
    while (true) {
      std::unique_lock<std::mutex> lock(m_);
      cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      bool mine = id < chunks_;
      lock.unlock();
      if (mine) {
        run_chunk(id);
        std::unique_lock<std::mutex> lock2(m_);
        ++done_;
        if (done_ >= chunks_ - 1) cv_done_.notify_one();
      }
    }
  }

  int n_threads_;
  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  const std::function<void(std::int64_t, std::int64_t)>* fn_ = nullptr;
  std::int64_t total_ = 0;
  int chunks_ = 0;
  int done_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

int worker_thread_count() { return Pool::instance().threads(); }

void parallel_for(std::int64_t n, std::int64_t work_estimate,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (work_estimate < kParallelThreshold || Pool::instance().threads() <= 1) {
    fn(0, n);
    return;
  }
  Pool::instance().run(n, fn);
}

}  // namespace t2i
