#pragma once

// In-process worker pool and the cost counters that stand in for per-node
// heap profiles and message statistics.

#include "ptt/linalg.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace ptt {

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers) : size_(std::max<std::size_t>(workers, 1)) {
    for (std::size_t w = 1; w < size_; ++w) threads_.emplace_back([this, w] { loop(w); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return size_; }

  /// Runs task(w) once on every worker w; the caller acts as worker 0.
  /// Rethrows the first exception after all workers finish.
  void run(const std::function<void(std::size_t)>& task) {
    if (size_ == 1) {
      task(0);
      return;
    }
    {
      std::lock_guard lock(mu_);
      task_ = &task;
      pending_ = size_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    std::exception_ptr mine;
    try {
      task(0);
    } catch (...) {
      mine = std::current_exception();
    }
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
    if (mine) std::rethrow_exception(mine);
    if (error_) std::rethrow_exception(error_);
  }

  /// Items 0..n-1 claimed in ascending order by whichever worker is free.
  void dynamic_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    run([&](std::size_t w) {
      while (!failed.load()) {
        const auto i = next.fetch_add(1);
        if (i >= n) break;
        try {
          body(i, w);
        } catch (...) {
          failed = true;
          throw;
        }
      }
    });
  }

  ParallelFor parallel_for() {
    return [this](std::size_t n, const std::function<void(std::size_t)>& body) {
      dynamic_for(n, [&](std::size_t i, std::size_t) { body(i); });
    };
  }

 private:
  void loop(std::size_t w) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        task = task_;
      }
      std::exception_ptr err;
      try {
        (*task)(w);
      } catch (...) {
        err = std::current_exception();
      }
      std::lock_guard lock(mu_);
      if (err && !error_) error_ = err;
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  std::size_t size_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Scalar-count accounting per worker. "Resident" covers sketches, bases,
/// DRM factors and distributed intermediates; "transient" covers sub-tensor
/// buffers and in-flight messages.
class CostCounters {
 public:
  explicit CostCounters(std::size_t workers = 1) { reset(workers); }

  void reset(std::size_t workers) {
    workers_ = std::max<std::size_t>(workers, 1);
    slots_ = std::make_unique<Slot[]>(workers_);
    messages_ = 0;
    message_volume_ = 0;
  }

  std::size_t workers() const { return workers_; }

  void add_resident(std::size_t w, std::int64_t n) { bump(w, n, 0); }
  void add_transient(std::size_t w, std::int64_t n) { bump(w, 0, n); }

  void message(std::size_t scalars) {
    messages_.fetch_add(1, std::memory_order_relaxed);
    message_volume_.fetch_add(scalars, std::memory_order_relaxed);
  }

  std::uint64_t resident_peak(std::size_t w) const { return slots_[w].resident_peak.load(); }
  std::uint64_t total_peak(std::size_t w) const { return slots_[w].total_peak.load(); }
  std::int64_t resident_now(std::size_t w) const { return slots_[w].resident.load(); }
  std::uint64_t max_resident_peak() const {
    std::uint64_t m = 0;
    for (std::size_t w = 0; w < workers_; ++w) m = std::max(m, resident_peak(w));
    return m;
  }
  std::uint64_t max_total_peak() const {
    std::uint64_t m = 0;
    for (std::size_t w = 0; w < workers_; ++w) m = std::max(m, total_peak(w));
    return m;
  }
  std::vector<std::uint64_t> resident_peaks() const {
    std::vector<std::uint64_t> out;
    for (std::size_t w = 0; w < workers_; ++w) out.push_back(resident_peak(w));
    return out;
  }
  std::vector<std::uint64_t> total_peaks() const {
    std::vector<std::uint64_t> out;
    for (std::size_t w = 0; w < workers_; ++w) out.push_back(total_peak(w));
    return out;
  }
  std::uint64_t messages() const { return messages_.load(); }
  std::uint64_t message_volume() const { return message_volume_.load(); }

  /// RAII charge released on destruction.
  class Charge {
   public:
    Charge() = default;
    Charge(CostCounters* c, std::size_t w, std::int64_t n, bool resident) : c_(c), w_(w), n_(n), resident_(resident) {
      if (c_) resident_ ? c_->add_resident(w_, n_) : c_->add_transient(w_, n_);
    }
    Charge(Charge&& o) noexcept : c_(o.c_), w_(o.w_), n_(o.n_), resident_(o.resident_) { o.c_ = nullptr; }
    Charge& operator=(Charge&& o) noexcept {
      if (this != &o) {
        release();
        c_ = o.c_;
        w_ = o.w_;
        n_ = o.n_;
        resident_ = o.resident_;
        o.c_ = nullptr;
      }
      return *this;
    }
    ~Charge() { release(); }
    void release() {
      if (c_) resident_ ? c_->add_resident(w_, -n_) : c_->add_transient(w_, -n_);
      c_ = nullptr;
    }

   private:
    CostCounters* c_ = nullptr;
    std::size_t w_ = 0;
    std::int64_t n_ = 0;
    bool resident_ = true;
  };

  Charge resident(std::size_t w, std::size_t n) { return Charge(this, w, static_cast<std::int64_t>(n), true); }
  Charge transient(std::size_t w, std::size_t n) { return Charge(this, w, static_cast<std::int64_t>(n), false); }

 private:
  struct Slot {
    std::atomic<std::int64_t> resident{0};
    std::atomic<std::int64_t> transient{0};
    std::atomic<std::uint64_t> resident_peak{0};
    std::atomic<std::uint64_t> total_peak{0};
  };

  static void raise(std::atomic<std::uint64_t>& peak, std::int64_t v) {
    if (v < 0) return;
    auto cur = peak.load();
    while (static_cast<std::uint64_t>(v) > cur && !peak.compare_exchange_weak(cur, static_cast<std::uint64_t>(v))) {
    }
  }

  void bump(std::size_t w, std::int64_t dr, std::int64_t dt) {
    auto& s = slots_[w];
    const auto r = s.resident.fetch_add(dr) + dr;
    const auto t = s.transient.fetch_add(dt) + dt;
    raise(s.resident_peak, r);
    raise(s.total_peak, r + t);
  }

  std::size_t workers_ = 1;
  std::unique_ptr<Slot[]> slots_;
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<std::uint64_t> message_volume_{0};
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ptt
