#include "ltmlc/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace ltmlc::parallel {

int configure_from_env() {
  if (const char* env = std::getenv("LTMLC_THREADS")) {
    int threads = 0;
    try {
      threads = std::stoi(env);
    } catch (...) {
      threads = 0;
    }
    set_num_threads(threads <= 0 ? 1 : threads);
  }
  return num_threads();
}

void set_num_threads(int threads) { omp_set_num_threads(threads < 1 ? 1 : threads); }

int num_threads() { return omp_get_max_threads(); }

}  // namespace ltmlc::parallel
