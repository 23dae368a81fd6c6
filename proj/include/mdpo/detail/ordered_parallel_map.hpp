#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace mdpo {

template <typename T>
std::vector<T> ordered_parallel_map(std::size_t count, std::size_t max_in_flight,
                                    const std::function<T(std::size_t)>& fn,
                                    std::vector<std::optional<T>>* completed) {
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(max_in_flight, 1), count);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
  }

  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) {
      if (completed != nullptr) {
        *completed = std::move(slots);
      }
      std::rethrow_exception(errors[i]);
    }
  }
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) {
    out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace mdpo
