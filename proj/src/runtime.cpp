#include "gcttt/runtime.hpp"

#include <malloc.h>

#include <cstdlib>
#include <string>

#include "gcttt/errors.hpp"

namespace gcttt {

void tune_allocator() {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
}

std::size_t worker_count() {
    const char* v = std::getenv("GCTTT_WORKERS");
    if (v == nullptr || *v == '\0') return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("GCTTT_WORKERS must be a positive integer, got '" + std::string(v) + "'");
    return static_cast<std::size_t>(n);
}

}  // namespace gcttt
