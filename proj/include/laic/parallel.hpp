#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace laic {

namespace detail {
inline std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace detail

/// Caps the number of worker threads. 0 means hardware concurrency.
inline void set_threads(std::size_t n) { detail::thread_setting().store(n); }

inline std::size_t thread_count() {
  const std::size_t n = detail::thread_setting().load();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(chunk, begin, end) over [0, n) split into fixed-size chunks.
///
/// Chunk boundaries depend only on n and chunk_size, never on the thread
/// count, so per-chunk partial results combined in chunk order give the
/// same bits for any --threads value.
template <class Body>
void for_each_chunk(std::size_t n, std::size_t chunk_size, Body&& body) {
  if (n == 0) return;
  chunk_size = std::max<std::size_t>(1, chunk_size);
  const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
  const std::size_t workers = std::min(thread_count(), chunks);
  auto run = [&](std::size_t c) {
    const std::size_t begin = c * chunk_size;
    body(c, begin, std::min(n, begin + chunk_size));
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        run(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(chunks);
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
}

/// Element-wise parallel map: body(i) for every i in [0, n).
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t chunk_size = 64) {
  for_each_chunk(n, chunk_size, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

/// Ordered reduction. partial(begin, end) -> T runs per chunk (possibly in
/// parallel); combine(acc, part) folds the partials strictly in chunk order.
template <class T, class Partial, class Combine>
T ordered_reduce(std::size_t n, std::size_t chunk_size, T init, Partial&& partial,
                 Combine&& combine) {
  if (n == 0) return init;
  chunk_size = std::max<std::size_t>(1, chunk_size);
  const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<T> parts(chunks, init);
  for_each_chunk(n, chunk_size, [&](std::size_t c, std::size_t begin, std::size_t end) {
    parts[c] = partial(begin, end);
  });
  T acc = std::move(init);
  for (auto& p : parts) combine(acc, p);
  return acc;
}

}  // namespace laic
