#pragma once

#include "scalelab/rng.hpp"

namespace scl {

double normal_cdf(double x);

// Mean first-hit time of zero for a stationary mean-reverting process with
// mean gamma*(eps_star-eps), reversion rate theta and stationary variance
// nu/N. Returns +inf when the start sits too many deviations above zero for
// the integral to fit in a double.
double mean_exit_time(double gamma, double nu, double theta, double N, double eps_gap);

// One exact transition of d x = -theta (x - mean) dt + noise with stationary
// variance stat_var; z is a standard normal draw.
double ou_step(double x, double mean, double theta, double stat_var, double dt, double z);

double ou_stationary_sample(double mean, double stat_var, double z);

// Joint exact transition over dt of the pair
//   d eta = -b (eta - m) dt + sigma1 dW1
//   d P   = eta dt + sigma2 dW2
// starting from (eta, P); z1, z2, z3 are independent standard normals.
struct OuPair {
    double eta;
    double P;
};
OuPair integrated_ou_step(OuPair s, double m, double b, double sigma1, double sigma2, double dt,
                          double z1, double z2, double z3);

// Conditional moments of the same transition with sigma2 folded in, used for
// closed-form variance checks.
struct IntegratedOuMoments {
    double mean_eta, mean_P;
    double var_eta, var_P, cov;
};
IntegratedOuMoments integrated_ou_moments(OuPair s, double m, double b, double sigma1,
                                          double sigma2, double dt);

class Rng;

// One run of the stall-aware recovery clock: the OU state starts stationary
// around `mean` and is re-sampled at the clock's own (irregular) times; each
// of the k_steps ticks advances the clock by max(0, state). A non-positive
// state freezes the clock for good (dt stays 0), so the path is cut short.
double ou_clock_path(double mean, double stat_var, double theta, long k_steps, Rng& rng);

}  // namespace scl
