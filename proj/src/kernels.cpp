#include "claimcar/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace claimcar {

#if defined(__x86_64__) || defined(_M_X64)
const Kernels* avx2_kernels();

static bool cpu_has_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif
#if defined(__aarch64__)
const Kernels* neon_kernels();
#endif

namespace {

const Kernels* find(std::string_view name) {
    if (name == "scalar") return &scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2" && cpu_has_avx2()) return avx2_kernels();
#endif
#if defined(__aarch64__)
    if (name == "neon") return neon_kernels();
#endif
    return nullptr;
}

const Kernels* default_table() {
    if (const char* env = std::getenv("CLAIMCAR_KERNELS")) {
        const Kernels* t = find(env);
        if (!t)
            throw std::runtime_error(std::string("CLAIMCAR_KERNELS=") + env +
                                     " is not available on this machine");
        return t;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) return avx2_kernels();
#endif
#if defined(__aarch64__)
    return neon_kernels();
#endif
    return &scalar_kernels();
}

const Kernels*& current() {
    static const Kernels* table = default_table();
    return table;
}

}  // namespace

const Kernels& active_kernels() { return *current(); }

bool select_kernels(std::string_view name) {
    const Kernels* t = find(name);
    if (!t) return false;
    current() = t;
    return true;
}

std::vector<std::string> available_kernels() {
    std::vector<std::string> v{"scalar"};
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) v.push_back("avx2");
#endif
#if defined(__aarch64__)
    v.push_back("neon");
#endif
    return v;
}

}  // namespace claimcar
