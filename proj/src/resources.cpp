#include "i4d/resources.hpp"

#include "i4d/error.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <string>

namespace i4d {

namespace {

double status_field_mb(const char* field) {
  std::ifstream in("/proc/self/status");
  std::string line;
  const std::string prefix = std::string(field) + ":";
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) return std::stod(line.substr(prefix.size())) / 1024.0;  // kB
  }
  return 0.0;
}

}  // namespace

double current_rss_mb() { return status_field_mb("VmRSS"); }
double peak_rss_mb() { return status_field_mb("VmHWM"); }

int configured_threads() {
  if (const char* env = std::getenv("I4D_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1 || n > 4096) throw InvalidInput("I4D_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  return std::max(1, omp_get_max_threads());
}

void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

}  // namespace i4d
