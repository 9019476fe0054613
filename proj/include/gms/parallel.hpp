#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gms {

/// Runs work split into fixed-size chunks. Chunk boundaries depend only on the
/// problem size and chunk size, never on the worker count, and chunk c always
/// runs on worker c % workers. Callers reduce per-chunk results in chunk
/// order, which makes floating-point results independent of the worker count.
class Executor {
 public:
  explicit Executor(std::size_t workers = 1) : workers_(std::max<std::size_t>(1, workers)) {}

  std::size_t workers() const noexcept { return workers_; }

  static std::size_t chunk_count(std::size_t n, std::size_t chunk) noexcept {
    return chunk == 0 ? 0 : (n + chunk - 1) / chunk;
  }

  // fn(chunk_index, begin, end). The exception of the lowest failing chunk
  // is rethrown after all workers have stopped.
  template <class Fn>
  void for_chunks(std::size_t n, std::size_t chunk, Fn&& fn) const {
    const std::size_t chunks = chunk_count(n, chunk);
    if (chunks == 0) return;
    const std::size_t w = std::min(workers_, chunks);
    std::vector<std::exception_ptr> errors(chunks);
    auto work = [&](std::size_t worker) {
      for (std::size_t c = worker; c < chunks; c += w) {
        try {
          fn(c, c * chunk, std::min(n, (c + 1) * chunk));
        } catch (...) {
          errors[c] = std::current_exception();
          return;
        }
      }
    };
    if (w == 1) {
      work(0);
    } else {
      std::vector<std::jthread> threads;
      threads.reserve(w - 1);
      for (std::size_t t = 1; t < w; ++t) threads.emplace_back(work, t);
      work(0);
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Collects one result per chunk, in chunk order.
  template <class R, class Fn>
  std::vector<R> map_chunks(std::size_t n, std::size_t chunk, Fn&& fn) const {
    std::vector<R> out(chunk_count(n, chunk));
    for_chunks(n, chunk, [&](std::size_t c, std::size_t b, std::size_t e) { out[c] = fn(b, e); });
    return out;
  }

 private:
  std::size_t workers_;
};

}  // namespace gms
