#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scl {

// invalid ensemble/decoder/law configuration
struct spec_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// an estimator could not produce a usable value (too few trials, no steady
// state, non-positive variance gap, ...)
struct estimation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Welford {
    size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

struct Interval {
    double lo = 0.0, hi = 0.0;
};

// Wilson score interval for a binomial proportion
Interval wilson_interval(size_t errors, size_t trials, double z = 1.959963984540054);

struct LineFit {
    double slope = 0.0, intercept = 0.0;
};
LineFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// y ~ c0 + c1 x + c2 x^2 by normal equations
struct QuadFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double eval(double x) const { return c0 + x * (c1 + x * c2); }
};
QuadFit quadratic_fit(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> moving_average(const std::vector<double>& v, int halfwidth);

// Flat-stretch detector shared by density evolution and the Monte-Carlo
// steady-state estimators. Scans the absolute second difference of `curve`
// taken at `stride` samples and marks indices quiet when it falls below
// max(threshold, 4 * robust noise floor); the steady state is the longest
// run of at least `hysteresis` consecutive quiet indices.
struct SteadyWindow {
    size_t a = 0, b = 0;  // inclusive sample indices
    bool found = false;
    double threshold_used = 0.0;
};
SteadyWindow detect_steady_window(const std::vector<double>& curve, int stride,
                                  double threshold = 1e-2, int hysteresis = 5);

// piecewise-linear interpolation on a sorted grid; throws spec_error outside
double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x,
                     const char* what);

std::string format_double(double v);

}  // namespace scl
