#include <cstdlib>
#include <string_view>

#include "skillprobe/error.hpp"
#include "skillprobe/kernels.hpp"

namespace skillprobe::kernels {

namespace detail {

bool cpu_has_avx2_fma() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

}  // namespace detail

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (const auto* t = detail::avx2_table(); t && detail::cpu_has_avx2_fma()) {
    out.push_back(t);
  }
  if (const auto* t = detail::neon_table()) out.push_back(t);
  return out;
}

namespace {

const KernelTable& select() {
  const auto tables = available_tables();
  if (const char* env = std::getenv("SKILLPROBE_KERNELS")) {
    const std::string_view want(env);
    for (const auto* t : tables) {
      if (t->name == want) return *t;
    }
    fail(ErrorCode::kInvalidArgument,
         "SKILLPROBE_KERNELS=" + std::string(want) + " is not available on this CPU");
  }
  return *tables.back();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace skillprobe::kernels
