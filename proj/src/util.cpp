#include "scalelab/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace scl {

Interval wilson_interval(size_t errors, size_t trials, double z) {
    if (trials == 0) return {0.0, 1.0};
    double n = static_cast<double>(trials);
    double p = static_cast<double>(errors) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = p + z2 / (2.0 * n);
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, (center - half) / denom), std::min(1.0, (center + half) / denom)};
}

LineFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw spec_error("linear_fit: need >= 2 points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double d = n * sxx - sx * sx;
    if (d == 0.0) throw spec_error("linear_fit: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / d;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

QuadFit quadratic_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw spec_error("quadratic_fit: need >= 3 points");
    // normal equations for [1, x, x^2]
    double s0 = static_cast<double>(x.size());
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double xi = x[i], xi2 = xi * xi;
        s1 += xi;
        s2 += xi2;
        s3 += xi2 * xi;
        s4 += xi2 * xi2;
        t0 += y[i];
        t1 += xi * y[i];
        t2 += xi2 * y[i];
    }
    double a[3][4] = {{s0, s1, s2, t0}, {s1, s2, s3, t1}, {s2, s3, s4, t2}};
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        std::swap(a[piv], a[col]);
        if (a[col][col] == 0.0) throw spec_error("quadratic_fit: singular system");
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
        }
    }
    return {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};
}

std::vector<double> moving_average(const std::vector<double>& v, int halfwidth) {
    if (halfwidth <= 0) return v;
    std::vector<double> out(v.size());
    long n = static_cast<long>(v.size());
    for (long i = 0; i < n; ++i) {
        long lo = std::max(0L, i - halfwidth);
        long hi = std::min(n - 1, i + halfwidth);
        double s = 0;
        for (long j = lo; j <= hi; ++j) s += v[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

SteadyWindow detect_steady_window(const std::vector<double>& curve, int stride, double threshold,
                                  int hysteresis) {
    SteadyWindow w;
    long n = static_cast<long>(curve.size());
    long s = std::max(1, stride);
    if (n < 2 * s + 1) return w;
    std::vector<double> d2(n, 0.0), d1(n, 0.0);
    std::vector<char> valid(n, 0);
    for (long i = s; i + s < n; ++i) {
        d2[i] = std::fabs(curve[i + s] - 2.0 * curve[i] + curve[i - s]);
        d1[i] = std::fabs(curve[i + s] - curve[i - s]);
        valid[i] = 1;
    }
    // robust noise floor from the middle third of the curve
    std::vector<double> mid;
    for (long i = std::max(s, n / 3); i < std::min(n - s, 2 * n / 3); ++i) mid.push_back(d2[i]);
    double sigma = 0.0;
    if (mid.size() >= 8) {
        std::nth_element(mid.begin(), mid.begin() + mid.size() / 2, mid.end());
        sigma = mid[mid.size() / 2] / 0.6745;
    }
    double thr = std::max(threshold, 4.0 * sigma);
    w.threshold_used = thr;

    long best_a = -1, best_b = -1, best_len = 0, run_a = -1;
    for (long i = s; i + s <= n; ++i) {
        // a slow, large excursion has a vanishing second difference at its
        // inflection point, so the slope must be quiet too
        bool quiet = (i + s < n) && valid[i] && d2[i] < thr && d1[i] < 2.0 * thr;
        if (quiet) {
            if (run_a < 0) run_a = i;
        } else {
            if (run_a >= 0) {
                long len = i - run_a;
                if (len >= hysteresis && len > best_len) {
                    best_a = run_a;
                    best_b = i - 1;
                    best_len = len;
                }
            }
            run_a = -1;
        }
    }
    if (best_a >= 0) {
        w.a = static_cast<size_t>(best_a);
        w.b = static_cast<size_t>(best_b);
        w.found = true;
    }
    return w;
}

double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x,
                     const char* what) {
    if (xs.empty() || xs.size() != ys.size()) throw spec_error(std::string(what) + ": empty grid");
    const double tol = 1e-12;
    if (x < xs.front() - tol || x > xs.back() + tol)
        throw spec_error(std::string(what) + ": query " + format_double(x) +
                         " outside table range [" + format_double(xs.front()) + ", " +
                         format_double(xs.back()) + "]");
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    size_t hi = static_cast<size_t>(it - xs.begin());
    size_t lo = hi - 1;
    double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace scl
