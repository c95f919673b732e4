#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "spherecorr/kernels.hpp"

namespace spherecorr::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return detail::avx2_table() != nullptr &&
             __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon: return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa))
    throw std::runtime_error("kernel ISA not supported: " +
                             std::string(isa_name(isa)));
  switch (isa) {
    case Isa::avx2: return *detail::avx2_table();
    case Isa::neon: return *detail::neon_table();
    default: return detail::scalar_table();
  }
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SPHERECORR_KERNELS")) {
    const std::string v(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (v == isa_name(isa) && supported(isa)) return &table(isa);
  }
  if (supported(Isa::avx2)) return &table(Isa::avx2);
  if (supported(Isa::neon)) return &table(Isa::neon);
  return &detail::scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = pick_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select(Isa isa) { g_active.store(&table(isa), std::memory_order_release); }

}  // namespace spherecorr::kernels
