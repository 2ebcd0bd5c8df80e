#include "scalelab/rng.hpp"

#include <cmath>

namespace scl {

namespace {
constexpr uint32_t kM0 = 0xD2511F53u;
constexpr uint32_t kM1 = 0xCD9E8D57u;
constexpr uint32_t kW0 = 0x9E3779B9u;
constexpr uint32_t kW1 = 0xBB67AE85u;

inline void round_once(std::array<uint32_t, 4>& c, const std::array<uint32_t, 2>& k) {
    uint64_t p0 = static_cast<uint64_t>(kM0) * c[0];
    uint64_t p1 = static_cast<uint64_t>(kM1) * c[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}
}  // namespace

std::array<uint32_t, 4> philox4x32::block(const std::array<uint32_t, 4>& ctr,
                                          std::array<uint32_t, 2> key) {
    std::array<uint32_t, 4> c = ctr;
    round_once(c, key);
    for (int r = 1; r < 10; ++r) {
        key[0] += kW0;
        key[1] += kW1;
        round_once(c, key);
    }
    return c;
}

Rng::Rng(uint64_t seed, uint64_t stream) {
    key_[0] = static_cast<uint32_t>(seed);
    key_[1] = static_cast<uint32_t>(seed >> 32);
    sid_[0] = static_cast<uint32_t>(stream);
    sid_[1] = static_cast<uint32_t>(stream >> 32);
    stream_ = stream;
}

void Rng::refill() {
    std::array<uint32_t, 4> ctr = {static_cast<uint32_t>(draw_),
                                   static_cast<uint32_t>(draw_ >> 32), sid_[0], sid_[1]};
    buf_ = philox4x32::block(ctr, {key_[0], key_[1]});
    ++draw_;
    left_ = 4;
}

uint32_t Rng::u32() {
    if (left_ == 0) refill();
    return buf_[4 - left_--];
}

uint64_t Rng::u64() {
    uint64_t hi = u32();
    return (hi << 32) | u32();
}

double Rng::uniform() {
    return static_cast<double>(u64() >> 11) * 0x1.0p-53;
}

uint32_t Rng::below(uint32_t n) {
    uint64_t m = static_cast<uint64_t>(u32()) * n;
    uint32_t l = static_cast<uint32_t>(m);
    if (l < n) {
        uint32_t t = (0u - n) % n;
        while (l < t) {
            m = static_cast<uint64_t>(u32()) * n;
            l = static_cast<uint32_t>(m);
        }
    }
    return static_cast<uint32_t>(m >> 32);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double v1, v2, s;
    do {
        v1 = 2.0 * uniform() - 1.0;
        v2 = 2.0 * uniform() - 1.0;
        s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v2 * f;
    has_spare_ = true;
    return v1 * f;
}

double Rng::exponential(double mean) {
    return -mean * std::log1p(-uniform());
}

}  // namespace scl
