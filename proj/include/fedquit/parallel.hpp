#pragma once

// Process-wide switch between the OpenMP kernels and their serial reference
// implementations. Both paths produce bitwise identical results (work is
// partitioned into fixed units and reduced in a fixed order); the switch
// exists for testing and benchmarking.

namespace fedquit::exec {

// threads <= 1 selects the serial reference path; 0 means "OpenMP default".
void set_threads(int threads);
int threads();
bool parallel_enabled();

// Fixed work unit for chunked reductions; summation order is chunk-major and
// independent of the thread count.
inline constexpr int kChunkSize = 16;

}  // namespace fedquit::exec
