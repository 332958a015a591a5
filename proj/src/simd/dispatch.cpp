#include <atomic>
#include <cstdlib>
#include <string_view>

#include "logspline/simd/kernels.hpp"

namespace logspline::simd {
namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("LOGSPLINE_SIMD")) {
    if (std::string_view(env) == "scalar") return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> selected{detect()};
  return selected;
}

}  // namespace

const KernelTable& kernels() noexcept { return *slot().load(std::memory_order_relaxed); }

void select_isa(Isa isa) {
  const KernelTable* t = &scalar_kernels();
  if (isa == Isa::kAvx2) {
    t = avx2_kernels();
    if (t == nullptr) t = &scalar_kernels();
  }
  slot().store(t, std::memory_order_relaxed);
}

}  // namespace logspline::simd
