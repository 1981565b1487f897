#pragma once
#include <cstdlib>
#include <thread>
#include <vector>

namespace doa {

// Worker budget: DOA_THREADS env var caps it (0 = sequential); otherwise
// hardware concurrency.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("DOA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    return v <= 0 ? 1u : static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1u : hc;
}

// Runs fn(i) for i in [0, n). fn must write only to slots owned by index i,
// so the result is identical however the work is split.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned budget = thread_budget();
  if (budget <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(budget, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace doa
