#pragma once

#include <chrono>

namespace i4d {

/// Resident set size of this process in MB (VmRSS / VmHWM). Zero if unavailable.
double current_rss_mb();
double peak_rss_mb();

/// Worker count from I4D_THREADS, else the OpenMP default. Always >= 1.
int configured_threads();

/// Caps OpenMP parallel regions started from the calling thread.
void set_threads(int n);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void reset() { start_ = std::chrono::steady_clock::now(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace i4d
