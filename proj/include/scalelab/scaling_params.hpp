#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "scalelab/ensemble.hpp"
#include "scalelab/util.hpp"

namespace scl {

// One row of the epsilon-indexed parameter table.
struct ParamKnot {
    double epsilon = 0;
    double gamma_breve = 0;      // single-wave peeling plateau / (eps* - eps)
    double tau_start_breve = 0;  // single-wave steady-state onset, normalized removals
    double tau_start_tilde = 0;  // two-wave onset
    double tau_end_tilde = 0;    // two-wave end
    double v_pd = 0;             // positions per N removals
    double v_bp = 0;             // positions per BP iteration
    double gamma_bp = 0;         // BP steady recovery level / (eps* - eps)
    double i_start = 0;          // BP iterations before the steady state
    double i_end = 0;            // BP iterations after it
    double c_f = 0;              // mean drift of the randomized recovery clock
};

struct ScalarEstimate {
    double value = 0;
    double epsilon_est = 0;  // where it was measured
    long n_est = 0;
    long trials = 0;
};

// knobs of the estimation pipeline; stored alongside the table so reruns can
// tell whether cached sections are still valid
struct PipelineConfig {
    int dv = 5, dc = 10, L = 50;
    long n_est = 10000;            // block size for peeling estimation
    std::vector<double> eps_grid;  // defaults to 0.44:0.005:0.49
    long peel_trials = 300;
    long r1_cov_trials = 300;
    double r1_cov_epsilon = 0.4875;
    long bp_cov_trials = 600;
    double bp_cov_epsilon = 0.465;
    long bp_cov_n = 5000;
    long bp_small_trials = 1000;  // second covariance point and the sigma2 source
    double bp_small_epsilon = 0.455;
    long bp_small_n = 1000;
    int bp_trace_chain_length = 120;
    long ell_ref = 412;
    long cf_samples = 100000;
    long cf_n = 1000;  // block length the drift column is calibrated for
    long sigma2_model_paths = 100000;
    long i_eff_ref_total = 350;  // c_f horizon before subtracting i_start/i_end
    double threshold_tol = 1e-4;
    uint64_t seed = 1;
    int workers = 1;  // never affects results, excluded from compatibility
};

// everything but `workers` must match for cached sections to be reused
bool pipeline_compatible(const PipelineConfig& a, const PipelineConfig& b);

// canonical stage names in dependency order:
// threshold, phase, peel, cov_breve, cov_bp, cf, sigma2
const std::vector<std::string>& pipeline_sections();

struct ScalingParams {
    int dv = 0, dc = 0, L = 0;
    long n_est = 0;
    uint64_t seed = 0;
    double epsilon_star = 0;
    std::vector<ParamKnot> knots;  // ascending epsilon
    ScalarEstimate nu_breve, theta_breve, nu_bp, theta_bp, sigma2;
    PipelineConfig pipeline;            // provenance of the estimation run
    std::vector<std::string> sections;  // pipeline stages already completed

    // linear interpolation between knots; throws spec_error outside the grid
    ParamKnot at(double epsilon) const;
    bool has_section(const std::string& name) const;
};

void save_params(const ScalingParams& p, const std::string& path);
ScalingParams load_params(const std::string& path);

// --- peeling steady state ---------------------------------------------------

struct PeelingSteadyState {
    double gamma = 0;      // plateau of mean r1 / (eps* - eps)
    double tau_start = 0;
    double tau_end = 0;
    double v_pd = 0;       // NaN unless the chain is terminated (needs mid-chain count)
    double gamma_split[2] = {0, 0};  // plateau re-read from the even/odd trial halves
    long successful = 0;
    long trials = 0;
    double grid_step = 0;              // tau spacing of the curves below
    std::vector<double> r1_mean;       // averaged degree-one fraction
    std::vector<double> vmid_mean;     // averaged erased count at position L/2
};

// Averages r1 over successful peeling runs on a tau grid (~0.01 spacing) and
// reads the steady-state level and boundaries off the averaged curve.
PeelingSteadyState estimate_peeling_steady_state(const EnsembleSpec& spec, double epsilon,
                                                 double epsilon_star, long trials, uint64_t seed,
                                                 int workers = 1);

// Per-trial r1 segments restricted to [tau_start, tau_end], for covariance
// estimation. Rows are trials, columns tau-grid samples of spacing grid_step.
struct PeelingSegments {
    std::vector<std::vector<double>> segments;
    double grid_step = 0;
};
PeelingSegments collect_peeling_segments(const EnsembleSpec& spec, double epsilon,
                                         double tau_start, double tau_end, long trials,
                                         uint64_t seed, int workers = 1);

// --- covariance parameters ---------------------------------------------------

struct CovEstimate {
    double nu = 0;
    double theta = 0;
    long trajectories = 0;
};

// Pooled cross-sectional variance (nu = N * var) and log-autocovariance slope
// (theta) from steady-state segments sampled every dt time units.
CovEstimate estimate_cov_params(const std::vector<std::vector<double>>& segments, double dt,
                                double N);

// --- BP traces ----------------------------------------------------------------

struct BpSteadyTraces {
    std::vector<std::vector<double>> v_segments;  // per-iteration recovered fraction, steady part
    long trials = 0;
};

// Runs full BP on the single-wave chain and crops per-iteration recovery
// traces to the steady state [i_start+1, i_start+ell_ref].
BpSteadyTraces collect_bp_traces(const EnsembleSpec& spec, double epsilon, long trials,
                                 int i_start, long ell_ref, uint64_t seed, int workers = 1);

// Absolute position of the left decoding front after exactly ell full-BP
// iterations, one entry per trial. Trials whose front was gone by then (chain
// decoded, wave died, or waves about to merge) are skipped, so run this on a
// chain long enough that the fronts stay clear of each other.
std::vector<int> collect_front_positions(const EnsembleSpec& spec, double epsilon, long trials,
                                         long ell, uint64_t seed, int workers = 1);

// --- drift and extra diffusion -----------------------------------------------

// Mean of the randomized recovery clock at horizon i_eff_ref, divided by
// i_eff_ref (the per-iteration drift used by the shifted laws).
double estimate_cf(double gamma_breve, double nu_breve, double theta_breve, double eps_gap,
                   double N, long i_eff_ref, long samples, uint64_t seed, int workers = 1);

// Same, reading the inputs off an assembled table.
double estimate_cf(const ScalingParams& p, double epsilon, double N, long i_eff_ref,
                   long samples, uint64_t seed, int workers = 1);

struct Sigma2Estimate {
    double sigma2 = 0;
    double var_sim = 0, var_model = 0;
    double mean_sim = 0, mean_model = 0;
    long traces = 0;
    bool clamped = false;  // simulated variance fell below the model variance
};

// Extra per-iteration position variance: compares simulated front positions
// after ell_ref iterations (from collect_front_positions) with the
// integrated-OU model. The front shares the recovery budget with the opposite
// wave, so its position spreads faster than the recovery count alone implies;
// the surplus, spread evenly over iterations, is this coefficient.
Sigma2Estimate estimate_sigma2(const std::vector<int>& positions, double c_f, double v_pd,
                               double theta_bp, double nu_bp, double eps_gap, double N,
                               long ell_ref, long model_paths, uint64_t seed);

// --- full pipeline -------------------------------------------------------------

// Runs the estimators and assembles the table. Progress notes go to log when
// given. The stored covariance scalars are the small-N pair; the large-N pair
// is reported in the log only. When `prior` carries a compatible table,
// sections listed in it are reused instead of recomputed; `run` restricts the
// pass to exactly those sections (default: everything not already cached).
// Stage seeds are derived from fixed indices, so a table assembled over
// several passes is identical to one assembled in a single pass.
ScalingParams estimate_all(const PipelineConfig& cfg, std::ostream* log = nullptr,
                           const ScalingParams* prior = nullptr,
                           const std::vector<std::string>* run = nullptr);

void write_params_csv(const ScalingParams& p, std::ostream& out);

}  // namespace scl
