#include "scalelab/simulate.hpp"

#include <algorithm>
#include <sstream>

#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scl {

const char* to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::unlimited: return "unlimited";
        case DecoderKind::full_bp: return "full_bp";
        case DecoderKind::sliding_window: return "sliding_window";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    ensemble.validate();
    if (frames <= 0) throw spec_error("frame count must be positive");
    if (epsilon_grid.empty()) throw spec_error("epsilon grid is empty");
    for (size_t i = 0; i < epsilon_grid.size(); ++i) {
        if (epsilon_grid[i] < 0 || epsilon_grid[i] > 1)
            throw spec_error("epsilon must lie in [0, 1]");
        if (i > 0 && epsilon_grid[i] <= epsilon_grid[i - 1])
            throw spec_error("epsilon grid must be sorted ascending");
    }
    if (decoder == DecoderKind::full_bp && iteration_budget <= 0)
        throw spec_error("iteration budget must be positive");
    if (decoder == DecoderKind::sliding_window &&
        (window.W < 1 || window.I_in < 1 || window.I_s < 1))
        throw spec_error("window configuration must be positive");
    if (max_frame_errors < 0) throw spec_error("max_frame_errors must be non-negative");
    if (workers < 0) throw spec_error("workers must be non-negative");
}

std::string ExperimentConfig::model_label() const {
    std::ostringstream os;
    os << "sim_";
    switch (decoder) {
        case DecoderKind::unlimited: os << "unlimited"; break;
        case DecoderKind::full_bp: os << "bp_i" << iteration_budget; break;
        case DecoderKind::sliding_window:
            os << "sw_w" << window.W << "_iin" << window.I_in << "_is" << window.I_s;
            break;
    }
    return os.str();
}

namespace {

struct FrameScratch {
    TannerGraph g;
    std::vector<uint8_t> erased;
    PeelWorkspace pws;
    BpWorkspace bws;
};

int run_frame(const ExperimentConfig& cfg, const TannerGraph* fixed, double eps, long frame,
              FrameScratch& sc) {
    const TannerGraph* g = fixed;
    if (!g) {
        Rng gr = substream(cfg.seed, streams::graph, static_cast<uint64_t>(frame));
        sample_graph_into(cfg.ensemble, gr, sc.g);
        g = &sc.g;
    }
    Rng ch = substream(cfg.seed, streams::channel, static_cast<uint64_t>(frame));
    transmit_bec_into(g->vn_count, eps, ch, sc.erased);
    DecodingTrace tr;
    DecodeOptions opts;
    switch (cfg.decoder) {
        case DecoderKind::unlimited: {
            // outcome-identical to BP run to its fixpoint, several times faster
            Rng pr = substream(cfg.seed, streams::peel, static_cast<uint64_t>(frame));
            tr = peel(*g, sc.erased, pr, opts, &sc.pws);
            break;
        }
        case DecoderKind::full_bp:
            tr = bp_full(*g, sc.erased, cfg.iteration_budget, opts, &sc.bws);
            break;
        case DecoderKind::sliding_window:
            tr = bp_sliding_window(*g, sc.erased, cfg.window, opts, &sc.bws);
            break;
    }
    return frame_error(tr, *g) ? 1 : 0;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    SweepResult out;
    out.model = cfg.model_label();

    TannerGraph fixed;
    if (cfg.fixed_graph) {
        Rng gr = substream(cfg.seed, streams::graph, 0);
        sample_graph_into(cfg.ensemble, gr, fixed);
    }
    const TannerGraph* fixed_ptr = cfg.fixed_graph ? &fixed : nullptr;

    const long block = 256;
    std::vector<uint8_t> outcome(static_cast<size_t>(block));
    FrameScratch serial_sc;
    for (double eps : cfg.epsilon_grid) {
        long done = 0, errors = 0;
        while (done < cfg.frames) {
            long bn = std::min(block, cfg.frames - done);
            if (cfg.workers > 1) {
#ifdef _OPENMP
#pragma omp parallel num_threads(cfg.workers)
                {
                    FrameScratch sc;
#pragma omp for schedule(dynamic, 8)
                    for (long k = 0; k < bn; ++k)
                        outcome[static_cast<size_t>(k)] =
                            static_cast<uint8_t>(run_frame(cfg, fixed_ptr, eps, done + k, sc));
                }
#else
                for (long k = 0; k < bn; ++k)
                    outcome[static_cast<size_t>(k)] =
                        static_cast<uint8_t>(run_frame(cfg, fixed_ptr, eps, done + k, serial_sc));
#endif
            } else {
                for (long k = 0; k < bn; ++k)
                    outcome[static_cast<size_t>(k)] =
                        static_cast<uint8_t>(run_frame(cfg, fixed_ptr, eps, done + k, serial_sc));
            }
            for (long k = 0; k < bn; ++k) errors += outcome[static_cast<size_t>(k)];
            done += bn;
            if (cfg.max_frame_errors > 0 && errors >= cfg.max_frame_errors) break;
        }
        SweepPoint pt;
        pt.epsilon = eps;
        pt.frames_run = done;
        pt.errors = errors;
        pt.fer = static_cast<double>(errors) / static_cast<double>(done);
        Interval ci = wilson_interval(static_cast<size_t>(errors), static_cast<size_t>(done));
        pt.ci_lo = ci.lo;
        pt.ci_hi = ci.hi;
        out.points.push_back(pt);
    }
    return out;
}

void write_sweep_csv(const SweepResult& r, std::ostream& out) {
    out << "epsilon,model,fer,frames,errors,ci_lo,ci_hi\n";
    for (const auto& p : r.points)
        out << format_double(p.epsilon) << ',' << r.model << ',' << format_double(p.fer) << ','
            << p.frames_run << ',' << p.errors << ',' << format_double(p.ci_lo) << ','
            << format_double(p.ci_hi) << '\n';
}

}  // namespace scl
