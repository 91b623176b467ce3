#pragma once

// Deterministic fan-out: tasks are identified by index, each task derives its
// own seed from (master, index), and results are written to per-index slots.

#include <cstddef>
#include <cstdint>
#include <functional>

namespace rfmag {

/// SplitMix64 finalizer applied to master ^ golden-ratio-scaled index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// 0 means hardware concurrency (at least 1).
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Indices are handed out
/// in order from a shared counter. The first exception thrown by any task is
/// rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace rfmag
