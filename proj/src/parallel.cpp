#include "spaorb/parallel.hpp"

#include <omp.h>

namespace spaorb {

int max_threads() { return omp_get_max_threads(); }

} // namespace spaorb
