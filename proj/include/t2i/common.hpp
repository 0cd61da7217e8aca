#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace t2i {

// One scalar type across the library. Tensors compute in 64-bit; persistent
// training state is rounded through 32-bit at optimizer boundaries so that
// checkpoints capture it losslessly (see Adam::step and checkpoint.hpp).
using real = double;

// Debug-mode numeric checks (NaN/Inf scans, div-by-zero). On by default;
// the training loop switches them off unless the run config asks for them.
bool debug_checks();
void set_debug_checks(bool on);

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error("t2i: " + msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Runs fn(lo, hi) over a partition of [0, n). Ranges are split into
// contiguous per-thread chunks when `work_estimate` (total scalar ops) is
// large enough to pay for the handoff; bodies must write disjoint outputs.
// Results are identical for any thread count. Thread count comes from
// T2I_THREADS (default: hardware).
void parallel_for(std::int64_t n, std::int64_t work_estimate,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);
int worker_thread_count();

}  // namespace t2i
