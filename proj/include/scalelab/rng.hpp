#pragma once

#include <array>
#include <cstdint>

namespace scl {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). One block of 4x32 output bits per
// (key, counter) pair; streams never overlap because the 128-bit counter
// embeds a 64-bit stream id next to a 64-bit draw index.
struct philox4x32 {
    static std::array<uint32_t, 4> block(const std::array<uint32_t, 4>& ctr,
                                         std::array<uint32_t, 2> key);
};

class Rng {
  public:
    Rng(uint64_t seed, uint64_t stream);

    uint32_t u32();
    uint64_t u64();

    // uniform in [0, 1), 53-bit resolution
    double uniform();
    // unbiased integer in [0, n), n > 0
    uint32_t below(uint32_t n);
    // standard normal, Marsaglia polar method
    double normal();
    // Exp(mean)
    double exponential(double mean);

    uint64_t stream() const { return stream_; }

  private:
    void refill();

    uint32_t key_[2];
    uint32_t sid_[2];
    uint64_t stream_ = 0;
    uint64_t draw_ = 0;
    std::array<uint32_t, 4> buf_{};
    int left_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// fixed purpose tags so independent kernels never share a stream
namespace streams {
inline constexpr uint64_t graph = 1;
inline constexpr uint64_t channel = 2;
inline constexpr uint64_t peel = 3;
inline constexpr uint64_t npd = 4;
inline constexpr uint64_t em_path = 5;
inline constexpr uint64_t ou_model = 6;
inline constexpr uint64_t misc = 7;
}  // namespace streams

inline Rng substream(uint64_t seed, uint64_t purpose, uint64_t index) {
    return Rng(seed, (purpose << 56) | (index & 0x00ffffffffffffffULL));
}

}  // namespace scl
