#pragma once

#include <cstddef>
#include <functional>

namespace dsrefine {

/// Worker cap used by every parallel map in the library. 0 means hardware concurrency.
/// Results never depend on this value: work is split into index-addressed slots and
/// any reduction happens in a fixed order afterwards.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Calls fn(i) for i in [0, n). fn must only write to state owned by index i.
/// The first exception thrown by any call is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dsrefine
