#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

using namespace scl;

TEST_CASE("philox block matches the reference vectors") {
    // counter {c0,c1,c2,c3}, key {k0,k1} -> expected block, reference test
    // vectors of the original generator implementation
    auto check = [](std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key,
                    std::array<uint32_t, 4> want) {
        auto got = philox4x32::block(ctr, key);
        CHECK(got[0] == want[0]);
        CHECK(got[1] == want[1]);
        CHECK(got[2] == want[2]);
        CHECK(got[3] == want[3]);
    };
    check({0u, 0u, 0u, 0u}, {0u, 0u}, {0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    check({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu},
          {0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    check({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u},
          {0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("same seed and stream reproduce the sequence") {
    Rng a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.u64() == b.u64());
}

TEST_CASE("streams are independent of draw history") {
    // drawing from one stream must not affect another
    Rng a(42, 1);
    std::vector<uint64_t> first;
    for (int i = 0; i < 10; ++i) first.push_back(a.u64());

    Rng other(42, 2);
    (void)other.u64();
    Rng a2(42, 1);
    for (int i = 0; i < 10; ++i) CHECK(a2.u64() == first[i]);
}

TEST_CASE("distinct seeds or streams give distinct output") {
    Rng a(1, 0), b(2, 0);
    Rng a2(1, 0), c(1, 1);
    int diff_seed = 0, diff_stream = 0;
    for (int i = 0; i < 16; ++i) {
        if (a.u64() != b.u64()) ++diff_seed;
        if (a2.u64() != c.u64()) ++diff_stream;
    }
    CHECK(diff_seed == 16);
    CHECK(diff_stream == 16);
}

TEST_CASE("substream packs purpose and index without collisions") {
    Rng a = substream(9, streams::graph, 3);
    Rng b = substream(9, streams::channel, 3);
    Rng c = substream(9, streams::graph, 4);
    CHECK(a.stream() != b.stream());
    CHECK(a.stream() != c.stream());
    CHECK(a.stream() == ((streams::graph << 56) | 3));
}

TEST_CASE("uniform lands in [0,1) and looks uniform") {
    Rng r(123, 0);
    Welford w;
    for (int i = 0; i < 100000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        w.add(u);
    }
    CHECK(std::abs(w.mean - 0.5) < 0.005);
    CHECK(std::abs(w.variance() - 1.0 / 12.0) < 0.005);
}

TEST_CASE("below is unbiased over a small range") {
    Rng r(5, 0);
    const uint32_t n = 7;
    std::vector<long> counts(n, 0);
    const long draws = 140000;
    for (long i = 0; i < draws; ++i) ++counts[r.below(n)];
    for (uint32_t k = 0; k < n; ++k) {
        double rel = static_cast<double>(counts[k]) * n / draws;
        CHECK(rel > 0.95);
        CHECK(rel < 1.05);
    }
}

TEST_CASE("normal moments") {
    Rng r(77, 0);
    Welford w;
    for (int i = 0; i < 200000; ++i) w.add(r.normal());
    CHECK(std::abs(w.mean) < 0.01);
    CHECK(std::abs(w.variance() - 1.0) < 0.02);
}

TEST_CASE("exponential moments") {
    Rng r(78, 0);
    Welford w;
    for (int i = 0; i < 200000; ++i) w.add(r.exponential(3.0));
    CHECK(std::abs(w.mean - 3.0) < 0.05);
    CHECK(std::abs(w.variance() - 9.0) < 0.3);
}
