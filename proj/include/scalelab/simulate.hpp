#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "scalelab/decoders.hpp"
#include "scalelab/ensemble.hpp"

namespace scl {

enum class DecoderKind { unlimited, full_bp, sliding_window };

const char* to_string(DecoderKind k);

struct ExperimentConfig {
    EnsembleSpec ensemble;
    std::vector<double> epsilon_grid;
    DecoderKind decoder = DecoderKind::unlimited;
    long iteration_budget = 0;    // full_bp only
    SlidingWindowConfig window;   // sliding_window only
    long frames = 10000;
    long max_frame_errors = 0;    // 0 disables early stopping
    std::uint64_t seed = 1;
    int workers = 1;
    bool fixed_graph = false;     // one code sample for the whole sweep

    void validate() const;
    std::string model_label() const;
};

struct SweepPoint {
    double epsilon = 0;
    long frames_run = 0;
    long errors = 0;
    double fer = 0;
    double ci_lo = 0, ci_hi = 0;  // Wilson 95%
};

struct SweepResult {
    std::string model;
    std::vector<SweepPoint> points;
};

// Monte-Carlo FER sweep. Frames draw (graph, channel, tie-break) substreams
// keyed by the frame index alone, so outcomes are identical at any worker
// count and frames are paired across epsilon values and decoder settings.
// Early stopping is checked at 256-frame block boundaries only.
SweepResult run_sweep(const ExperimentConfig& cfg);

// csv: epsilon,model,fer,frames,errors,ci_lo,ci_hi
void write_sweep_csv(const SweepResult& r, std::ostream& out);

}  // namespace scl
