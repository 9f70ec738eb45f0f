#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace retarget::detail {

// Splits [0, count) into contiguous chunks, one per worker, and calls
// fn(begin, end) for each. The first exception (by chunk order) is rethrown
// after all workers finish.
template <typename Fn>
void parallel_ranges(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    if (count > 0) {
      fn(std::size_t{0}, count);
    }
    return;
  }
  const std::size_t per = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * per;
      const std::size_t end = std::min(count, begin + per);
      if (begin >= end) {
        break;
      }
      threads.emplace_back([&fn, &errors, w, begin, end] {
        try {
          fn(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

}  // namespace retarget::detail
