#pragma once

#include <cstdint>

namespace hsfusion {

// Counter-based generator: draw n of stream s under seed k is a pure
// function of (k, s, n), so streams can be consumed in any order or in
// parallel without changing any realization. Gaussian variates use the
// Box-Muller transform so results do not depend on the standard library.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double normal();

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stream identifiers used by the synthetic-scene generator.
namespace streams {
inline constexpr std::uint64_t z_core = 1;
inline constexpr std::uint64_t z_factor = 2;  // + mode slot
inline constexpr std::uint64_t psi_core = 5;
inline constexpr std::uint64_t psi_factor = 6;  // + mode slot
inline constexpr std::uint64_t noise_h = 101;
inline constexpr std::uint64_t noise_m = 102;
}  // namespace streams

}  // namespace hsfusion
