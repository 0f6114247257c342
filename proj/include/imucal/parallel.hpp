#pragma once

#include <cstddef>
#include <functional>

namespace imucal {

/// Worker count from the IMUCAL_THREADS environment variable. Unset or 0
/// means one worker per hardware thread; malformed values raise InputError.
size_t configured_threads();

size_t chunk_count(size_t n, size_t chunk_size);

/// Partitions [0, n) into fixed-size chunks and runs fn(begin, end, slot)
/// for each, possibly concurrently. The chunk layout depends only on n and
/// chunk_size, so per-slot partial results can be reduced in slot order to
/// get results that do not depend on the worker count.
void for_each_chunk(size_t n, size_t chunk_size,
                    const std::function<void(size_t, size_t, size_t)>& fn);

} // namespace imucal
