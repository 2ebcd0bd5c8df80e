#pragma once

#include <ostream>
#include <vector>

#include "scalelab/ensemble.hpp"
#include "scalelab/util.hpp"

namespace scl {

// Asymptotic (N -> infinity) per-position erasure probability recursion.
struct DeState {
    int L = 0;        // VN positions of the built chain
    int CP = 0;       // CN positions
    int dv = 0;
    int dc = 0;
    bool full_degree = false;        // terminated chains keep VN degree dv everywhere
    std::vector<double> p_msg;       // L*dv, vn i -> cn i+j message erasure prob
    std::vector<double> p_app;       // L, a-posteriori erasure prob per position
    std::vector<double> v_bp_mean;   // per-iteration recovered probability mass
    double msg_delta = 1.0;          // max |change| across p_msg in the last step
    long iteration = 0;

    int vn_degree(int i) const { return full_degree ? dv : std::min(dv, CP - i); }
};

DeState de_init(const EnsembleSpec& spec, double epsilon);
void de_step_inplace(DeState& st, double epsilon);
DeState de_step(const DeState& st, double epsilon);

struct DeOptions {
    long max_iters = 100000;
    double converge_below = 1e-10;   // max_i p_i under this => decoded
    double stall_delta = 1e-12;      // message change per iteration under this ...
    double stall_above = 1e-3;       // ... while max_i p_i is still above this => stuck
    bool track_front = false;        // record the eps/2 crossing position per iteration
    bool keep_history = true;
};

struct DeRun {
    bool converged = false;
    bool diverged = false;
    long iterations = 0;
    std::vector<double> v_bp_mean;   // v_bp_mean[k] is iteration k+1
    std::vector<double> sum_p;       // sum_i p_app after iteration k+1
    std::vector<double> front_mid;   // NaN when no crossing exists
    DeState state;
};

DeRun de_run(const EnsembleSpec& spec, double epsilon, const DeOptions& opts = {});

// Bisection for the largest epsilon where the recursion still reaches zero.
double de_threshold(const EnsembleSpec& spec, double tol);

struct DePhaseEstimates {
    double epsilon_star = 0;
    double v_bp_speed = 0;   // positions per iteration, single-wave chain
    double gamma_bp = 0;     // steady recovery level / (eps* - eps), single-wave chain
    int i_start = 0;         // iterations before the steady state, two-wave chain
    int i_end = 0;           // iterations after the steady state, two-wave chain
};

// Runs the terminated chain for the steady-state boundaries and the truncated
// chain (single wave) for the speed and recovery level.
DePhaseEstimates estimate_phase(const EnsembleSpec& spec, double epsilon, double epsilon_star);

QuadFit fit_speed_curve(const std::vector<double>& eps, const std::vector<double>& v_bp);

void write_de_history_csv(const DeRun& run, std::ostream& out);

}  // namespace scl
