#include "tokidx/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace tokidx::kern {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

namespace {

const Ops& select() {
  if (const char* env = std::getenv("TOKIDX_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return scalar_ops();
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_available()) throw std::runtime_error("TOKIDX_KERNELS=avx2 but CPU lacks AVX2");
      return avx2_ops();
    }
    throw std::runtime_error(std::string("unknown TOKIDX_KERNELS backend: ") + env);
  }
  return avx2_available() ? avx2_ops() : scalar_ops();
}

}  // namespace

const Ops& active() {
  static const Ops& ops = select();
  return ops;
}

}  // namespace tokidx::kern
