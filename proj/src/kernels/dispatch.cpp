#include <cstdlib>
#include <string_view>

#include "bamp/kernels.hpp"
#include "kernels_impl.hpp"

namespace bamp::kernels {

namespace {

constexpr KernelTable kScalar{
    "scalar",         scalar::dot,    scalar::squared_distance, scalar::axpy,
    scalar::gemv,     scalar::gemv_t, scalar::rank1_update,     scalar::quadratic_form,
};

#if defined(BAMP_HAVE_AVX2)
constexpr KernelTable kAvx2{
    "avx2",         avx2::dot,    avx2::squared_distance, avx2::axpy,
    avx2::gemv,     avx2::gemv_t, avx2::rank1_update,     avx2::quadratic_form,
};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable& select_kernels() {
  if (const char* forced = std::getenv("BAMP_SIMD");
      forced != nullptr && std::string_view(forced) == "scalar") {
    return kScalar;
  }
  if (const KernelTable* simd = avx2_kernels()) return *simd;
  return kScalar;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if defined(BAMP_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable& table = select_kernels();
  return table;
}

}  // namespace bamp::kernels
