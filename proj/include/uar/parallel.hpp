#pragma once

#include <cstddef>
#include <functional>

namespace uar {

// Worker cap for internal parallel loops. Defaults to the UAR_THREADS
// environment variable when set, else 1.
std::size_t worker_count();
void set_worker_count(std::size_t n);

// Runs body(i) for i in [0, n). Each index must write disjoint outputs; results
// are independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace uar
