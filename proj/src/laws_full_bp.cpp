#include "scalelab/laws_full_bp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "scalelab/ou.hpp"
#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

namespace scl {

double mu0(double gamma, double nu, double theta, double N, double epsilon,
           double epsilon_star) {
    return mean_exit_time(gamma, nu, theta, N, epsilon_star - epsilon);
}

double mu0_breve(const ScalingParams& p, double epsilon, double N) {
    ParamKnot k = p.at(epsilon);
    return mean_exit_time(k.gamma_breve, p.nu_breve.value, p.theta_breve.value, N,
                          p.epsilon_star - epsilon);
}

// --- NpdDistribution ------------------------------------------------------------

double NpdDistribution::survival(double w) const {
    if (kind == Kind::gaussian) {
        if (variance <= 0) return w < mean ? 1.0 : 0.0;
        return normal_cdf((mean - w) / std::sqrt(variance));
    }
    if (bin_edges.empty() || w <= bin_edges.front()) return 1.0;
    if (w >= bin_edges.back()) return 0.0;
    size_t i = std::upper_bound(bin_edges.begin(), bin_edges.end(), w) - bin_edges.begin() - 1;
    double tail = 0;
    for (size_t j = i + 1; j < masses.size(); ++j) tail += masses[j];
    double width = bin_edges[i + 1] - bin_edges[i];
    double part = width > 0 ? masses[i] * (bin_edges[i + 1] - w) / width : 0.0;
    return tail + part;
}

double NpdDistribution::pdf(double w) const {
    if (kind == Kind::gaussian) {
        if (variance <= 0) return 0.0;
        double d = w - mean;
        return std::exp(-d * d / (2.0 * variance)) / std::sqrt(2.0 * M_PI * variance);
    }
    if (bin_edges.empty() || w < bin_edges.front() || w >= bin_edges.back()) return 0.0;
    size_t i = std::upper_bound(bin_edges.begin(), bin_edges.end(), w) - bin_edges.begin();
    if (i > 0) --i;
    if (i >= masses.size()) return 0.0;
    double width = bin_edges[i + 1] - bin_edges[i];
    return width > 0 ? masses[i] / width : 0.0;
}

double NpdDistribution::mass_below_zero() const {
    if (kind == Kind::gaussian) {
        if (variance <= 0) return mean < 0 ? 1.0 : 0.0;
        return normal_cdf((0.0 - mean) / std::sqrt(variance));
    }
    return 1.0 - survival(0.0);
}

// --- budgets ---------------------------------------------------------------------

LimitedBudget limited_budget(const ScalingParams& p, double epsilon, long I) {
    ParamKnot k = p.at(epsilon);
    double gap = p.epsilon_star - epsilon;
    LimitedBudget b;
    b.I = I;
    b.i_eff = static_cast<double>(I) - k.i_start - k.i_end;
    b.t_eff = b.i_eff * gap;
    b.t_start = k.tau_start_tilde;
    b.deadline = k.tau_end_tilde - k.tau_start_tilde;
    b.l_eff = b.deadline * k.v_pd;
    b.d_min = std::max(0.0, b.l_eff - k.v_bp * b.i_eff);
    b.tau_min = b.d_min / k.v_pd;
    return b;
}

// --- unlimited laws -----------------------------------------------------------------

double fer_two_wave(double T, double mu) {
    if (T <= 0) return 0.0;
    if (!(mu > 0)) return 1.0;
    if (std::isinf(mu)) return 0.0;
    double r = T / mu;
    return -std::expm1(-r) - r * std::exp(-r);
}

double fer_unlimited_terminated_len(const ScalingParams& p, double epsilon, double N,
                                    double positions) {
    ParamKnot k = p.at(epsilon);
    double T = (k.tau_end_tilde - k.tau_start_tilde) + epsilon * (positions - p.L);
    return fer_two_wave(std::max(0.0, T), mu0_breve(p, epsilon, N));
}

double fer_unlimited_terminated(const ScalingParams& p, double epsilon, double N) {
    return fer_unlimited_terminated_len(p, epsilon, N, p.L);
}

double fer_unlimited_unterminated(const ScalingParams& p, double epsilon, double N,
                                  double l_prime) {
    ParamKnot k = p.at(epsilon);
    double mu = mu0_breve(p, epsilon, N);
    double span = epsilon * l_prime - k.tau_start_breve;
    if (span < 0) {
        std::cerr << "[laws] chain shorter than the single-wave onset at epsilon "
                  << format_double(epsilon) << "; clamping to FER 0\n";
        span = 0;
    }
    if (!(mu > 0)) return 1.0;
    if (std::isinf(mu)) return 0.0;
    return -std::expm1(-span / mu);
}

double fer_unlimited_sliding_window(const ScalingParams& p, double epsilon, double N, int L,
                                    int W) {
    if (W < 1 || W > L) throw spec_error("window must satisfy 1 <= W <= L");
    double pu = W < L ? fer_unlimited_unterminated(p, epsilon, N, static_cast<double>(L - W))
                      : 0.0;
    double pt = fer_unlimited_terminated_len(p, epsilon, N, static_cast<double>(W));
    return 1.0 - (1.0 - pu) * (1.0 - pt);
}

// --- limited laws --------------------------------------------------------------------

double fer_const_propagation(const ScalingParams& p, double epsilon, double N, long I) {
    LimitedBudget b = limited_budget(p, epsilon, I);
    if (b.i_eff <= 0) return 1.0;
    if (b.d_min >= b.l_eff / 2.0) return 1.0;
    double mu = mu0_breve(p, epsilon, N);
    if (!(mu > 0)) return 1.0;
    if (std::isinf(mu)) return 0.0;
    double T = b.deadline;
    return 1.0 - (1.0 + (T - 2.0 * b.tau_min) / mu) * std::exp(-T / mu);
}

NpdDistribution simulate_npd_iterative(const ScalingParams& p, double epsilon, double N,
                                       long i_eff, long samples, uint64_t seed, int workers) {
    if (i_eff < 1) throw spec_error("i_eff must be at least 1");
    if (samples < 2) throw spec_error("samples must be at least 2");
    ParamKnot k = p.at(epsilon);
    const double level = k.gamma_breve * (p.epsilon_star - epsilon);
    const double stat_var = p.nu_breve.value / N;
    const double theta = p.theta_breve.value;

    std::vector<double> vals(samples);
#ifdef _OPENMP
    if (workers > 1) {
#pragma omp parallel for schedule(static) num_threads(workers)
        for (long s = 0; s < samples; ++s) {
            Rng r = substream(seed, streams::npd, static_cast<uint64_t>(s));
            vals[s] = ou_clock_path(level, stat_var, theta, i_eff, r);
        }
    } else
#endif
    {
        for (long s = 0; s < samples; ++s) {
            Rng r = substream(seed, streams::npd, static_cast<uint64_t>(s));
            vals[s] = ou_clock_path(level, stat_var, theta, i_eff, r);
        }
    }

    double sum = 0;
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) {
        lo -= 5e-13;
        hi += 5e-13;
    }

    NpdDistribution d;
    d.kind = NpdDistribution::Kind::histogram;
    d.sample_mean = sum / static_cast<double>(samples);
    const int bins = 512;
    d.bin_edges.resize(bins + 1);
    d.masses.assign(bins, 0.0);
    double width = (hi - lo) / bins;
    for (int i = 0; i <= bins; ++i) d.bin_edges[i] = lo + width * i;
    double unit = 1.0 / static_cast<double>(samples);
    for (double v : vals) {
        int i = std::min<int>(bins - 1, static_cast<int>((v - lo) / width));
        d.masses[i] += unit;
    }
    return d;
}

NpdDistribution npd_gaussian(const ScalingParams& p, double epsilon, double N, double i_eff,
                             bool shifted) {
    if (i_eff < 0) throw spec_error("i_eff must be non-negative");
    ParamKnot k = p.at(epsilon);
    double gap = p.epsilon_star - epsilon;
    NpdDistribution d;
    d.kind = NpdDistribution::Kind::gaussian;
    d.mean = (shifted ? k.c_f : k.gamma_bp * gap) * i_eff;
    d.variance = 2.0 * p.nu_bp.value * i_eff / (N * p.theta_bp.value * gap);
    d.sample_mean = d.mean;
    return d;
}

namespace {

// closed-form pieces of Int e^(-z/mu) dz and Int z e^(-z/mu) dz
struct ExpPieces {
    double mu;
    bool finite;
    double e0(double a, double b) const {
        return finite ? mu * (std::exp(-a / mu) - std::exp(-b / mu)) : b - a;
    }
    double e1(double a, double b) const {
        return finite ? mu * ((a + mu) * std::exp(-a / mu) - (b + mu) * std::exp(-b / mu))
                      : (b * b - a * a) / 2.0;
    }
};

template <class F>
double simpson(F f, double a, double b, int n) {
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + h * i) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

// The capped advance of one wave is X = min(A, n) with A the exponential
// first-hit death (mean mu) independent of the budget cap n; decoding fails
// when X1 + X2 < T. f_X = f_A S_n + f_n S_A is integrated against
// S_X(T - z) = S_A(T - z) S_n(T - z). Since S_A(z) S_A(T - z) = e^(-T/mu),
// every histogram piece reduces to polynomials: those are integrated in closed
// form (Simpson is exact on each piece), while the Gaussian surrogate is
// smooth and uses a fine composite Simpson rule. Gaussian mass below zero is
// counted as failure outright, which overstates the FER by at most that mass.
double fer_randomized_npd(const ScalingParams& p, double epsilon, double N, long I,
                          const NpdDistribution& npd) {
    LimitedBudget b = limited_budget(p, epsilon, I);
    if (b.i_eff <= 0) return 1.0;
    const double T = b.deadline;
    if (T <= 0) return 0.0;
    double mu = mu0_breve(p, epsilon, N);
    if (!(mu > 0)) return 1.0;
    const bool finite_mu = std::isfinite(mu);

    auto surv_x = [&](double w) {
        double s = npd.survival(w);
        return finite_mu ? std::exp(-w / mu) * s : s;
    };

    double mass = 1.0 - npd.survival(0.0);  // surrogate mass at or below zero
    double win = 0.0;

    if (npd.kind == NpdDistribution::Kind::histogram) {
        const auto& e = npd.bin_edges;
        const auto& m = npd.masses;
        const size_t B = m.size();
        std::vector<double> suf(B + 1, 0.0);
        for (size_t i = B; i-- > 0;) suf[i] = suf[i + 1] + m[i];

        const double E = std::min(finite_mu ? T + 10.0 * mu : e.back(), e.back());
        if (finite_mu && E > 0) {
            ExpPieces X{mu, true};
            double lead = std::min(E, std::max(0.0, e.front()));
            if (lead > 0) mass += X.e0(0.0, lead) / mu;  // S_n = 1, f_n = 0 up front
            for (size_t i = 0; i < B && e[i] < E; ++i) {
                double a = std::max(0.0, e[i]), bb = std::min(E, e[i + 1]);
                if (bb <= a) continue;
                double w = e[i + 1] - e[i];
                double fi = w > 0 ? m[i] / w : 0.0;
                double alpha = suf[i] + fi * e[i];  // S_n(z) = alpha - fi z on this bin
                mass += (alpha * X.e0(a, bb) - fi * X.e1(a, bb)) / mu + fi * X.e0(a, bb);
            }
        } else if (!finite_mu) {
            for (size_t i = 0; i < B; ++i) {
                double a = std::max(0.0, e[i]);
                if (e[i + 1] <= a) continue;
                double w = e[i + 1] - e[i];
                mass += w > 0 ? m[i] * (e[i + 1] - a) / w : 0.0;
            }
        }
        mass += surv_x(std::max(0.0, E));

        // breakpoints where either factor changes its polynomial piece
        std::vector<double> bp = {0.0, T};
        for (double ed : e) {
            if (ed > 0 && ed < T) bp.push_back(ed);
            double r = T - ed;
            if (r > 0 && r < T) bp.push_back(r);
        }
        std::sort(bp.begin(), bp.end());
        bp.erase(std::unique(bp.begin(), bp.end(),
                             [T](double x, double y) { return y - x < 1e-12 * (T + 1.0); }),
                 bp.end());
        for (size_t i = 0; i + 1 < bp.size(); ++i) {
            double a = bp[i], bb = bp[i + 1];
            double fmid = npd.pdf((a + bb) / 2.0);
            auto g = [&](double z) {
                double core = fmid * npd.survival(T - z);
                if (finite_mu) core += npd.survival(z) * npd.survival(T - z) / mu;
                return core;
            };
            win += (bb - a) / 6.0 * (g(a) + 4.0 * g((a + bb) / 2.0) + g(bb));
        }
        if (finite_mu) win *= std::exp(-T / mu);
    } else {
        if (!(npd.variance > 0)) throw spec_error("degenerate gaussian advance distribution");
        double sd = std::sqrt(npd.variance);
        double zhi = npd.mean + 12.0 * sd;
        if (zhi <= 0) return 1.0;  // the cap is essentially surely non-positive
        double E = std::min(finite_mu ? T + 10.0 * mu : zhi, zhi);
        auto pdf_x = [&](double z) {
            double sa = finite_mu ? std::exp(-z / mu) : 1.0;
            double fa = finite_mu ? sa / mu : 0.0;
            return fa * npd.survival(z) + npd.pdf(z) * sa;
        };
        const int n = 1 << 16;
        mass += simpson(pdf_x, 0.0, E, n) + surv_x(E);
        double wtop = std::min(T, E);
        win = simpson([&](double z) { return pdf_x(z) * surv_x(T - z); }, 0.0, wtop, n);
    }

    if (std::abs(mass - 1.0) > 1e-6)
        throw estimation_error("capped-advance density lost mass: " + format_double(mass));

    double success = win + surv_x(T);
    return std::clamp(1.0 - success, 0.0, 1.0);
}

const char* law_name(FullBpLaw law) {
    switch (law) {
        case FullBpLaw::unlimited: return "unlimited";
        case FullBpLaw::const_prop: return "const_prop";
        case FullBpLaw::iterative_ou: return "iterative_ou";
        case FullBpLaw::gaussian: return "gaussian";
        case FullBpLaw::shifted_gaussian: return "shifted_gaussian";
    }
    return "?";
}

FullBpLaw law_from_name(const std::string& name) {
    for (FullBpLaw law : {FullBpLaw::unlimited, FullBpLaw::const_prop, FullBpLaw::iterative_ou,
                          FullBpLaw::gaussian, FullBpLaw::shifted_gaussian})
        if (name == law_name(law)) return law;
    throw spec_error("unknown prediction model '" + name + "'");
}

double fer_full_bp(const ScalingParams& p, double epsilon, double N, long I, FullBpLaw law,
                   long samples, uint64_t seed, int workers) {
    switch (law) {
        case FullBpLaw::unlimited:
            return fer_unlimited_terminated(p, epsilon, N);
        case FullBpLaw::const_prop:
            return fer_const_propagation(p, epsilon, N, I);
        case FullBpLaw::iterative_ou: {
            LimitedBudget b = limited_budget(p, epsilon, I);
            if (b.i_eff <= 0) return 1.0;
            long k = std::max<long>(1, llround(b.i_eff));
            NpdDistribution d = simulate_npd_iterative(p, epsilon, N, k, samples, seed, workers);
            return fer_randomized_npd(p, epsilon, N, I, d);
        }
        case FullBpLaw::gaussian:
        case FullBpLaw::shifted_gaussian: {
            LimitedBudget b = limited_budget(p, epsilon, I);
            if (b.i_eff <= 0) return 1.0;
            NpdDistribution d =
                npd_gaussian(p, epsilon, N, b.i_eff, law == FullBpLaw::shifted_gaussian);
            return fer_randomized_npd(p, epsilon, N, I, d);
        }
    }
    throw spec_error("unhandled prediction model");
}

void write_prediction_csv(const std::vector<PredictionRow>& rows, std::ostream& out) {
    out << "epsilon,N,I,model,fer_pred\n";
    for (const auto& r : rows) {
        out << format_double(r.epsilon) << ',' << format_double(r.N) << ',' << r.I << ','
            << r.model << ',' << format_double(r.fer) << '\n';
    }
}

}  // namespace scl
