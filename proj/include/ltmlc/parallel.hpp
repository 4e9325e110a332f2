#pragma once

namespace ltmlc::parallel {

/// Reads LTMLC_THREADS and caps OpenMP accordingly. 0 means one thread; unset
/// leaves the OpenMP default.
/// Returns the number of threads in effect.
int configure_from_env();

void set_num_threads(int threads);
int num_threads();

}  // namespace ltmlc::parallel
