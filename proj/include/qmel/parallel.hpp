#pragma once

#include <cstddef>
#include <functional>

namespace qmel {

// Worker count for parallel loops. Defaults to QMEL_THREADS when set, else 1.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n). Each index must write only its own output slot, so results do
// not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qmel
