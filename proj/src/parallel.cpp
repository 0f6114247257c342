#include "imucal/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "imucal/core.hpp"

namespace imucal {

size_t configured_threads() {
  const char* env = std::getenv("IMUCAL_THREADS");
  size_t requested = 0;
  if (env != nullptr && *env != '\0') {
    try {
      size_t pos = 0;
      const long v = std::stol(env, &pos);
      if (pos != std::string(env).size() || v < 0) throw std::invalid_argument(env);
      requested = static_cast<size_t>(v);
    } catch (const std::exception&) {
      throw InputError("IMUCAL_THREADS must be a non-negative integer");
    }
  }
  if (requested == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    requested = hw == 0 ? 1 : hw;
  }
  return requested;
}

size_t chunk_count(size_t n, size_t chunk_size) {
  if (chunk_size == 0) chunk_size = 1;
  return (n + chunk_size - 1) / chunk_size;
}

void for_each_chunk(size_t n, size_t chunk_size,
                    const std::function<void(size_t, size_t, size_t)>& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const size_t chunks = chunk_count(n, chunk_size);
  const size_t workers = std::min(configured_threads(), chunks);

  auto run_chunk = [&](size_t slot) {
    const size_t begin = slot * chunk_size;
    const size_t end = std::min(n, begin + chunk_size);
    fn(begin, end, slot);
  };

  if (workers <= 1) {
    for (size_t slot = 0; slot < chunks; ++slot) run_chunk(slot);
    return;
  }

  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const size_t slot = next.fetch_add(1);
        if (slot >= chunks) return;
        run_chunk(slot);
      }
    });
  }
  for (auto& th : pool) th.join();
}

} // namespace imucal
