#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "scalelab/ensemble.hpp"
#include "scalelab/rng.hpp"

namespace scl {

struct DecodeOptions {
    bool record_r1 = false;   // peeling: degree-one fraction after every removal
    bool record_vmid = false; // peeling: erased count at vmid_position per removal
    int vmid_position = -1;
    int vu_stride = 0;        // peeling: snapshot all per-position counts every stride removals
    bool record_vbp = false;  // BP: fraction of VNs recovered per iteration
    bool record_pleft = false;// BP: leftmost undecided position per iteration
};

struct DecodingTrace {
    bool success = false;
    bool overtaken = false;  // sliding window: wave fell out of the window
    long stop_iteration = 0; // peeling: removals; BP: iterations run
    int erased_initial = 0;
    int erased_remaining = 0;
    std::vector<int32_t> residual_per_position;

    std::vector<float> r1;                       // r1[k] after k removals
    std::vector<int32_t> vmid;                   // tracked-position count after k removals
    std::vector<std::vector<int32_t>> vu_snapshots;
    std::vector<float> v_bp;                     // v_bp[k] = recovered in iteration k+1 / N
    std::vector<int32_t> p_left;                 // per iteration
};

struct SlidingWindowConfig {
    int W = 0;     // window width in check positions
    int I_in = 0;  // iterations before the first slide
    int I_s = 0;   // iterations per subsequent window position
    long total_budget(int L) const { return static_cast<long>(I_in) + static_cast<long>(L - 1) * I_s; }
};

// scratch buffers reused across frames of identical shape
struct PeelWorkspace {
    std::vector<uint8_t> erased;
    std::vector<int32_t> deg, r1_set, r1_pos, residual;
};
struct BpWorkspace {
    std::vector<uint8_t> vn_known, vn_msg, cn_msg;
    std::vector<int32_t> cn_unk, vn_known_in, first_known_edge, residual;
    std::vector<int32_t> cn_queue, cn_queue_next, new_msgs;
    std::vector<uint8_t> cn_queued;
};

// Peeling decoder: repeatedly pick a degree-one check uniformly at random and
// resolve its erased neighbour. The surviving erased set is the unique
// maximal stopping set, so success does not depend on the tie-break RNG.
DecodingTrace peel(const TannerGraph& g, const std::vector<uint8_t>& erased, Rng& rng,
                   const DecodeOptions& opts = {}, PeelWorkspace* ws = nullptr);

// Flooding erasure BP. max_iters < 0 runs to the fixpoint.
DecodingTrace bp_full(const TannerGraph& g, const std::vector<uint8_t>& erased, long max_iters,
                      const DecodeOptions& opts = {}, BpWorkspace* ws = nullptr);

// Windowed flooding BP: checks outside [W_L, W_L+W) stay silent, VNs left of
// W_L freeze when the window slides past them.
DecodingTrace bp_sliding_window(const TannerGraph& g, const std::vector<uint8_t>& erased,
                                const SlidingWindowConfig& cfg, const DecodeOptions& opts = {},
                                BpWorkspace* ws = nullptr);

// an erased payload bit (position < eval_positions) survived decoding
bool frame_error(const DecodingTrace& trace, const TannerGraph& g);

void write_peel_trace_csv(const DecodingTrace& trace, int N, std::ostream& out);
void write_bp_trace_csv(const DecodingTrace& trace, std::ostream& out);

}  // namespace scl
