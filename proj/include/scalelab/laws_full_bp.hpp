#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "scalelab/scaling_params.hpp"

namespace scl {

// Mean first-hit time of the steady-state process to zero:
//   mu0 = (sqrt(2 pi)/theta) * Int_0^{gamma sqrt(N/nu) (eps*-eps)} Phi(z) e^{z^2/2} dz.
// Returns +inf when the upper limit is large enough to overflow the integrand.
double mu0(double gamma, double nu, double theta, double N, double epsilon, double epsilon_star);

// mu0 fed from the table's peeling-side estimates at this epsilon.
double mu0_breve(const ScalingParams& p, double epsilon, double N);

// Distribution of the per-wave recovery-clock advance within the iteration
// budget: either an empirical histogram or a Gaussian surrogate.
struct NpdDistribution {
    enum class Kind { histogram, gaussian };
    Kind kind = Kind::gaussian;
    std::vector<double> bin_edges;  // histogram: masses.size() + 1, ascending
    std::vector<double> masses;     // histogram: sums to 1
    double mean = 0;                // gaussian moments
    double variance = 0;
    double sample_mean = 0;  // exact generator mean (histogram) or `mean`

    double survival(double w) const;  // Pr{value > w}
    double pdf(double w) const;
    double mass_below_zero() const;
};

// Iteration budget translated into the quantities the limited laws need.
struct LimitedBudget {
    long I = 0;
    double i_eff = 0;    // I - I_start - I_end
    double t_eff = 0;    // i_eff * (eps* - eps)
    double t_start = 0;  // steady-state onset of the two-wave chain, tau units
    double deadline = 0; // tau_end - tau_start
    double l_eff = 0;    // deadline * V_PD, positions
    double d_min = 0;    // positions a wave cannot reach within the budget
    double tau_min = 0;  // d_min / V_PD
};
LimitedBudget limited_budget(const ScalingParams& p, double epsilon, long I);

// --- unlimited-iteration laws -------------------------------------------------

// Failure of the two-wave race over a deadline T when each wave dies Exp(mu).
double fer_two_wave(double T, double mu);

double fer_unlimited_terminated(const ScalingParams& p, double epsilon, double N);
// Same law with the deadline width-adjusted to a chain of `positions` spatial
// positions (the table's own length maps to the tabulated deadline).
double fer_unlimited_terminated_len(const ScalingParams& p, double epsilon, double N,
                                    double positions);
double fer_unlimited_unterminated(const ScalingParams& p, double epsilon, double N,
                                  double l_prime);
double fer_unlimited_sliding_window(const ScalingParams& p, double epsilon, double N, int L,
                                    int W);

// --- limited-iteration laws ----------------------------------------------------

double fer_const_propagation(const ScalingParams& p, double epsilon, double N, long I);

NpdDistribution simulate_npd_iterative(const ScalingParams& p, double epsilon, double N,
                                       long i_eff, long samples, uint64_t seed, int workers = 1);
NpdDistribution npd_gaussian(const ScalingParams& p, double epsilon, double N, double i_eff,
                             bool shifted);

// Composes the budget-capped wave-advance distribution with the exponential
// first-hit death and evaluates the two-wave failure probability numerically.
double fer_randomized_npd(const ScalingParams& p, double epsilon, double N, long I,
                          const NpdDistribution& npd);

enum class FullBpLaw { unlimited, const_prop, iterative_ou, gaussian, shifted_gaussian };

const char* law_name(FullBpLaw law);
FullBpLaw law_from_name(const std::string& name);

// One-stop dispatcher; `samples`/`seed` feed the iterative-OU model only.
double fer_full_bp(const ScalingParams& p, double epsilon, double N, long I, FullBpLaw law,
                   long samples = 100000, uint64_t seed = 0x5ca1eb, int workers = 1);

struct PredictionRow {
    double epsilon;
    double N;
    long I;
    std::string model;
    double fer;
};
void write_prediction_csv(const std::vector<PredictionRow>& rows, std::ostream& out);

}  // namespace scl
