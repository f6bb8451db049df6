#pragma once

// Hot loops are built twice: once for the baseline ISA and once with
// AVX2/BMI2/LZCNT, picked at run time.

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define SHIP_HAVE_X86_DISPATCH 1
#define SHIP_TARGET_X86_V3 __attribute__((target("avx2,bmi,bmi2,lzcnt,fma,popcnt")))
#endif

#define SHIP_ALWAYS_INLINE [[gnu::always_inline]] inline

namespace ship {

/// True when the AVX2/BMI2/LZCNT kernels can run on this CPU.
bool cpu_has_x86_v3();

}  // namespace ship
