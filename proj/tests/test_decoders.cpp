#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "scalelab/decoders.hpp"
#include "scalelab/ensemble.hpp"

using namespace scl;

namespace {

EnsembleSpec spec36(int L, int N, Termination term = Termination::terminated) {
    EnsembleSpec s;
    s.dv = 3;
    s.dc = 6;
    s.L = L;
    s.N = N;
    s.term = term;
    return s;
}

}  // namespace

TEST_CASE("peeling and fixpoint BP agree on every pattern of a small code") {
    EnsembleSpec s = spec36(2, 6);
    Rng grng(1, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    std::vector<uint8_t> erased(g.vn_count);
    for (uint32_t mask = 0; mask < (1u << g.vn_count); ++mask) {
        for (int v = 0; v < g.vn_count; ++v) erased[v] = (mask >> v) & 1u;
        Rng prng = substream(2, streams::peel, mask);
        DecodingTrace tp = peel(g, erased, prng);
        DecodingTrace tb = bp_full(g, erased, -1);
        REQUIRE(tp.success == tb.success);
        REQUIRE(tp.erased_remaining == tb.erased_remaining);
        REQUIRE(tp.residual_per_position == tb.residual_per_position);
    }
}

TEST_CASE("peeling and fixpoint BP agree on random coupled instances") {
    EnsembleSpec s = spec36(10, 60);
    TannerGraph g;
    std::vector<uint8_t> erased;
    PeelWorkspace pw;
    BpWorkspace bw;
    long trial = 0;
    for (double eps : {0.3, 0.4, 0.45}) {
        for (int t = 0; t < 300; ++t, ++trial) {
            Rng grng = substream(11, streams::graph, trial);
            sample_graph_into(s, grng, g);
            Rng crng = substream(11, streams::channel, trial);
            transmit_bec_into(g.vn_count, eps, crng, erased);
            Rng prng = substream(11, streams::peel, trial);
            DecodingTrace tp = peel(g, erased, prng, {}, &pw);
            DecodingTrace tb = bp_full(g, erased, -1, {}, &bw);
            REQUIRE(tp.success == tb.success);
            REQUIRE(tp.residual_per_position == tb.residual_per_position);
        }
    }
}

TEST_CASE("the residual stopping set does not depend on the peeling tie-break") {
    EnsembleSpec s = spec36(8, 60);
    Rng grng(3, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    Rng crng(3, streams::channel << 56);
    // high enough that failures with nonempty residuals are common
    auto erased = transmit_bec(g.vn_count, 0.55, crng);
    Rng p1 = substream(100, streams::peel, 0);
    Rng p2 = substream(200, streams::peel, 999);
    DecodingTrace a = peel(g, erased, p1);
    DecodingTrace b = peel(g, erased, p2);
    CHECK(a.success == b.success);
    CHECK(a.erased_remaining == b.erased_remaining);
    CHECK(a.residual_per_position == b.residual_per_position);
}

TEST_CASE("BP recovery is monotone in the iteration budget") {
    EnsembleSpec s = spec36(10, 60);
    Rng grng(7, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    Rng crng(7, streams::channel << 56);
    auto erased = transmit_bec(g.vn_count, 0.45, crng);

    DecodeOptions opts;
    opts.record_vbp = true;
    DecodingTrace full = bp_full(g, erased, -1, opts);

    int prev_remaining = full.erased_initial;
    for (long k : {1L, 2L, 4L, 8L, 16L, 64L}) {
        DecodingTrace t = bp_full(g, erased, k);
        CHECK(t.erased_remaining <= prev_remaining);
        prev_remaining = t.erased_remaining;
        // the truncated run reproduces the prefix of the full recovery history
        double recov = 0;
        for (long i = 0; i < std::min<long>(k, full.v_bp.size()); ++i) recov += full.v_bp[i];
        CHECK(t.erased_initial - t.erased_remaining ==
              std::lround(recov * g.N));
    }
    CHECK(prev_remaining == full.erased_remaining);
}

TEST_CASE("per-iteration recovery records account for every recovered bit") {
    EnsembleSpec s = spec36(10, 60);
    Rng grng(13, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    Rng crng(13, streams::channel << 56);
    auto erased = transmit_bec(g.vn_count, 0.4, crng);
    DecodeOptions opts;
    opts.record_vbp = true;
    opts.record_pleft = true;
    DecodingTrace t = bp_full(g, erased, -1, opts);
    double recov = std::accumulate(t.v_bp.begin(), t.v_bp.end(), 0.0);
    CHECK(std::lround(recov * g.N) == t.erased_initial - t.erased_remaining);
    CHECK(static_cast<long>(t.p_left.size()) == t.stop_iteration);
    for (size_t k = 1; k < t.p_left.size(); ++k) CHECK(t.p_left[k] >= t.p_left[k - 1]);
    if (t.success) CHECK(t.p_left.back() == g.vn_positions);
}

TEST_CASE("peeling trace layout") {
    EnsembleSpec s = spec36(6, 30);
    Rng grng(17, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    Rng crng(17, streams::channel << 56);
    auto erased = transmit_bec(g.vn_count, 0.4, crng);
    DecodeOptions opts;
    opts.record_r1 = true;
    opts.record_vmid = true;
    opts.vmid_position = 3;
    Rng prng(17, streams::peel << 56);
    DecodingTrace t = peel(g, erased, prng, opts);
    CHECK(static_cast<long>(t.r1.size()) == t.stop_iteration + 1);
    CHECK(t.r1.back() == 0.0f);  // peeling only stops when no degree-one check is left
    CHECK(t.vmid.size() == t.r1.size());
    CHECK(t.vmid.back() >= 0);
    if (t.success) CHECK(t.stop_iteration == t.erased_initial);
}

TEST_CASE("a window covering the whole chain reproduces full BP outcomes") {
    EnsembleSpec s = spec36(8, 30);
    TannerGraph g;
    std::vector<uint8_t> erased;
    for (long trial = 0; trial < 50; ++trial) {
        Rng grng = substream(23, streams::graph, trial);
        sample_graph_into(s, grng, g);
        Rng crng = substream(23, streams::channel, trial);
        transmit_bec_into(g.vn_count, 0.45, crng, erased);
        SlidingWindowConfig cfg;
        cfg.W = g.cn_positions;
        cfg.I_in = 10000;  // never slides before the fixpoint
        cfg.I_s = 1;
        DecodingTrace tw = bp_sliding_window(g, erased, cfg);
        DecodingTrace tf = bp_full(g, erased, -1);
        CHECK(tw.success == tf.success);
        CHECK(tw.residual_per_position == tf.residual_per_position);
        CHECK_FALSE(tw.overtaken);
    }
}

TEST_CASE("a starved window gets overtaken and fails") {
    EnsembleSpec s = spec36(12, 60);
    TannerGraph g;
    std::vector<uint8_t> erased;
    int overtaken = 0, frames = 0;
    for (long trial = 0; trial < 40; ++trial) {
        Rng grng = substream(31, streams::graph, trial);
        sample_graph_into(s, grng, g);
        Rng crng = substream(31, streams::channel, trial);
        transmit_bec_into(g.vn_count, 0.45, crng, erased);
        SlidingWindowConfig cfg;
        cfg.W = 4;
        cfg.I_in = 2;
        cfg.I_s = 1;  // window moves far faster than any wave
        DecodingTrace t = bp_sliding_window(g, erased, cfg);
        ++frames;
        if (t.overtaken) {
            ++overtaken;
            CHECK_FALSE(t.success);
            CHECK(t.erased_remaining > 0);
        }
    }
    CHECK(overtaken > frames / 2);
}

TEST_CASE("a generous window decodes like the unlimited decoder") {
    EnsembleSpec s = spec36(10, 60);
    TannerGraph g;
    std::vector<uint8_t> erased;
    for (long trial = 0; trial < 30; ++trial) {
        Rng grng = substream(37, streams::graph, trial);
        sample_graph_into(s, grng, g);
        Rng crng = substream(37, streams::channel, trial);
        transmit_bec_into(g.vn_count, 0.3, crng, erased);
        SlidingWindowConfig cfg;
        cfg.W = 6;
        cfg.I_in = 500;
        cfg.I_s = 200;
        DecodingTrace tw = bp_sliding_window(g, erased, cfg);
        DecodingTrace tf = bp_full(g, erased, -1);
        if (tf.success) CHECK(tw.success);
    }
}

TEST_CASE("frame errors are judged on the evaluated prefix only") {
    EnsembleSpec s = spec36(6, 12, Termination::unterminated_eval);
    s.margin = 4;
    Rng grng(41, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    REQUIRE(g.eval_positions == 6);
    REQUIRE(g.vn_positions == 10);

    DecodingTrace t;
    t.residual_per_position.assign(g.vn_positions, 0);
    t.residual_per_position[8] = 3;  // residual beyond the evaluated prefix
    t.success = false;
    CHECK_FALSE(frame_error(t, g));
    t.residual_per_position[2] = 1;
    CHECK(frame_error(t, g));
}

TEST_CASE("decoders reject mismatched erasure patterns") {
    EnsembleSpec s = spec36(4, 12);
    Rng grng(43, streams::graph << 56);
    TannerGraph g = sample_graph(s, grng);
    std::vector<uint8_t> bad(g.vn_count - 1, 0);
    Rng prng(43, streams::peel << 56);
    CHECK_THROWS_AS(peel(g, bad, prng), spec_error);
    CHECK_THROWS_AS(bp_full(g, bad, -1), spec_error);
}
