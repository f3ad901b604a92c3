#pragma once

namespace rt {

// Execution policy for the per-cell chemistry and per-species transport
// kernels.  Parallel uses OpenMP when compiled in.  Results are bit-identical
// to Serial for any thread count: every loop iteration writes a disjoint
// slot and no reductions are performed.
enum class Exec { Serial, Parallel };

// Number of OpenMP threads the Parallel policy would use (1 without OpenMP).
int max_threads();

}  // namespace rt
