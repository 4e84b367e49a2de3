#pragma once

#include <cstddef>
#include <functional>

namespace bsvie {

/// Caps the worker count used by parallel_for. 0 restores the default
/// (hardware concurrency, overridden by BSVIE_THREADS when set).
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Items are split into contiguous blocks;
/// bodies must only write to item-owned storage so results never depend
/// on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bsvie
