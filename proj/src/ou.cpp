#include "scalelab/ou.hpp"

#include <cmath>
#include <limits>

#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

namespace scl {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

double exit_integrand(double z) { return normal_cdf(z) * std::exp(0.5 * z * z); }

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = exit_integrand(lm), frm = exit_integrand(rm);
    double left = simpson(a, m, fa, flm, fm);
    double right = simpson(m, b, fm, frm, fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double mean_exit_time(double gamma, double nu, double theta, double N, double eps_gap) {
    if (gamma <= 0 || nu <= 0 || theta <= 0 || N <= 0)
        throw spec_error("mean_exit_time: parameters must be positive");
    if (eps_gap <= 0) throw spec_error("mean_exit_time: epsilon must be below the threshold");
    double upper = gamma * std::sqrt(N / nu) * eps_gap;
    if (upper > 37.0) return std::numeric_limits<double>::infinity();
    double fa = exit_integrand(0.0), fb = exit_integrand(upper);
    double fm = exit_integrand(0.5 * upper);
    double whole = simpson(0.0, upper, fa, fm, fb);
    double tol = 1e-12 * std::max(1.0, std::abs(whole));
    double integral = adaptive_simpson(0.0, upper, fa, fm, fb, whole, tol, 48);
    return std::sqrt(2.0 * M_PI) / theta * integral;
}

double ou_step(double x, double mean, double theta, double stat_var, double dt, double z) {
    double e = std::exp(-theta * dt);
    return mean + (x - mean) * e + std::sqrt(std::max(0.0, stat_var * (1.0 - e * e))) * z;
}

double ou_stationary_sample(double mean, double stat_var, double z) {
    return mean + std::sqrt(std::max(0.0, stat_var)) * z;
}

IntegratedOuMoments integrated_ou_moments(OuPair s, double m, double b, double sigma1,
                                          double sigma2, double dt) {
    double e = std::exp(-b * dt);
    IntegratedOuMoments mo;
    mo.mean_eta = m + (s.eta - m) * e;
    mo.mean_P = s.P + m * dt + (s.eta - m) * (1.0 - e) / b;
    double s2 = sigma1 * sigma1;
    mo.var_eta = s2 * (1.0 - e * e) / (2.0 * b);
    mo.cov = s2 * (1.0 - e) * (1.0 - e) / (2.0 * b * b);
    mo.var_P = s2 / (b * b) * (dt - 2.0 * (1.0 - e) / b + (1.0 - e * e) / (2.0 * b)) +
               sigma2 * sigma2 * dt;
    return mo;
}

OuPair integrated_ou_step(OuPair s, double m, double b, double sigma1, double sigma2, double dt,
                          double z1, double z2, double z3) {
    IntegratedOuMoments mo = integrated_ou_moments(s, m, b, sigma1, 0.0, dt);
    double sd_eta = std::sqrt(std::max(0.0, mo.var_eta));
    OuPair out;
    out.eta = mo.mean_eta + sd_eta * z1;
    double cond_var = mo.var_P - (mo.var_eta > 0 ? mo.cov * mo.cov / mo.var_eta : 0.0);
    double cond_mean = mo.mean_P + (mo.var_eta > 0 ? mo.cov / mo.var_eta * (out.eta - mo.mean_eta) : 0.0);
    out.P = cond_mean + std::sqrt(std::max(0.0, cond_var)) * z2 +
            sigma2 * std::sqrt(dt) * z3;
    return out;
}

double ou_clock_path(double mean, double stat_var, double theta, long k_steps, Rng& rng) {
    double x = ou_stationary_sample(mean, stat_var, rng.normal());
    double n = std::max(0.0, x);
    double tau = 0.0;  // time at which x was last refreshed
    for (long k = 2; k <= k_steps; ++k) {
        if (x <= 0.0) break;  // clock frozen: dt would stay 0 forever
        double dt = n - tau;
        x = ou_step(x, mean, theta, stat_var, dt, rng.normal());
        tau = n;
        n += std::max(0.0, x);
    }
    return n;
}

}  // namespace scl
