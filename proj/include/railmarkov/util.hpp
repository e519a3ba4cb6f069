#pragma once

// Shared plumbing: error types, number formatting, deterministic parallel map.

#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

namespace railmarkov {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad flags, bad input paths, out-of-range options. CLI maps this to exit 2.
struct UsageError : Error {
  using Error::Error;
};

// Shortest round-trip decimal form, so written files re-parse to the same bits.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
  return std::string(buf, res.ptr);
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Runs fn(i) for i in [0, n). Work items must be independent; results must be
// written to per-index slots so scheduling cannot influence the outcome.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = std::min<std::size_t>(hw == 0 ? 1 : hw, n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::atomic<std::size_t> next{0};
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace railmarkov
