#pragma once

#include <cstddef>
#include <functional>

namespace reclab {

/// Process-wide worker budget; set once by the experiment runner.
void set_workers(unsigned workers);
unsigned workers();

/// Calls `body(i)` for every i in [0, count). Work items must be independent;
/// callers write results into per-index slots and reduce in index order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace reclab
