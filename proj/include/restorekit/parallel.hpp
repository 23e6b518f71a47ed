#pragma once

#include <cstddef>
#include <functional>

namespace restorekit {

/// Worker count used by parallel_for. Values < 1 are treated as 1.
void set_jobs(int jobs);
int jobs();

/// Runs fn(i) for i in [0, n). Calls made from inside a running parallel_for
/// execute serially on the calling thread. Callers write results into
/// index-addressed slots and reduce afterwards in index order, which keeps
/// every result independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace restorekit
