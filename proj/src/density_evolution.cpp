#include "scalelab/density_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scl {

DeState de_init(const EnsembleSpec& spec, double epsilon) {
    spec.validate();
    if (epsilon < 0.0 || epsilon > 1.0) throw spec_error("de: epsilon must lie in [0,1]");
    DeState st;
    st.dv = spec.dv;
    st.dc = spec.dc;
    st.full_degree = spec.term == Termination::terminated;
    st.L = spec.term == Termination::unterminated_eval ? spec.L + spec.margin : spec.L;
    st.CP = st.full_degree ? st.L + spec.dv - 1 : st.L;
    st.p_msg.assign(static_cast<size_t>(st.L) * spec.dv, 0.0);
    st.p_app.assign(st.L, epsilon);
    for (int i = 0; i < st.L; ++i) {
        int deg = st.vn_degree(i);
        for (int j = 0; j < deg; ++j) st.p_msg[static_cast<size_t>(i) * spec.dv + j] = 1.0;
    }
    return st;
}

void de_step_inplace(DeState& st, double epsilon) {
    const int L = st.L, CP = st.CP, dv = st.dv;
    // a check position pools the edges of every variable position it covers,
    // so a single mixed erasure rate drives all of its outgoing messages;
    // slots the chain does not cover count as known bits
    static thread_local std::vector<double> q;
    q.assign(CP, 0.0);
    for (int c = 0; c < CP; ++c) {
        double s = 0.0;
        for (int j = 0; j < dv; ++j) {
            int i = c - j;
            if (i < 0 || i >= L || j >= st.vn_degree(i)) continue;
            s += st.p_msg[static_cast<size_t>(i) * dv + j];
        }
        q[c] = 1.0 - std::pow(1.0 - s / dv, st.dc - 1);
    }
    double recovered = 0.0, delta = 0.0;
    for (int i = 0; i < L; ++i) {
        int deg = st.vn_degree(i);
        for (int j = 0; j < deg; ++j) {
            double prod = epsilon;
            for (int j2 = 0; j2 < deg; ++j2)
                if (j2 != j) prod *= q[i + j2];
            double& slot = st.p_msg[static_cast<size_t>(i) * dv + j];
            delta = std::max(delta, std::abs(slot - prod));
            slot = prod;
        }
        double app = epsilon;
        for (int j = 0; j < deg; ++j) app *= q[i + j];
        recovered += st.p_app[i] - app;
        st.p_app[i] = app;
    }
    st.msg_delta = delta;
    st.v_bp_mean.push_back(recovered);
    ++st.iteration;
}

DeState de_step(const DeState& st, double epsilon) {
    DeState next = st;
    de_step_inplace(next, epsilon);
    return next;
}

namespace {

// Fractional position where p_app crosses level going left to right
// (recovered side below, unresolved side above). NaN when absent.
double front_midpoint(const std::vector<double>& p, double level) {
    const int L = static_cast<int>(p.size());
    if (L == 0 || p[0] >= level) return std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i + 1 < L; ++i)
        if (p[i] < level && p[i + 1] >= level)
            return i + (level - p[i]) / (p[i + 1] - p[i]);
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

DeRun de_run(const EnsembleSpec& spec, double epsilon, const DeOptions& opts) {
    DeRun run;
    run.state = de_init(spec, epsilon);
    DeState& st = run.state;
    while (st.iteration < opts.max_iters) {
        de_step_inplace(st, epsilon);
        double mx = 0.0, sum = 0.0;
        for (double p : st.p_app) {
            mx = std::max(mx, p);
            sum += p;
        }
        if (opts.keep_history) {
            run.v_bp_mean.push_back(st.v_bp_mean.back());
            run.sum_p.push_back(sum);
            if (opts.track_front) run.front_mid.push_back(front_midpoint(st.p_app, epsilon / 2));
        }
        if (mx < opts.converge_below) {
            run.converged = true;
            break;
        }
        // the max sits on the unresolved plateau while the waves travel, so a
        // frozen max says nothing; a fixed point is reached when the messages
        // stop moving
        if (mx > opts.stall_above && st.msg_delta < opts.stall_delta) {
            run.diverged = true;
            break;
        }
    }
    run.iterations = st.iteration;
    if (!opts.keep_history) run.v_bp_mean = st.v_bp_mean;
    return run;
}

double de_threshold(const EnsembleSpec& spec, double tol) {
    if (tol <= 0) throw spec_error("de_threshold: tol must be positive");
    DeOptions opts;
    opts.keep_history = false;
    // the wave slows down linearly in (eps* - eps), so runs just below the
    // threshold need room to finish; unfinished runs count as not decoded
    opts.max_iters = 400000;
    auto decodes = [&](double eps) { return de_run(spec, eps, opts).converged; };
    double lo = 0.05, hi = 0.99;
    if (!decodes(lo) || decodes(hi))
        throw estimation_error("de_threshold: initial interval does not bracket the threshold");
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        (decodes(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

DePhaseEstimates estimate_phase(const EnsembleSpec& spec, double epsilon, double epsilon_star) {
    if (epsilon >= epsilon_star)
        throw spec_error("estimate_phase: epsilon must be below the threshold");
    const double gap = epsilon_star - epsilon;
    DePhaseEstimates out;
    out.epsilon_star = epsilon_star;

    EnsembleSpec term = spec;
    term.term = Termination::terminated;
    EnsembleSpec trunc = spec;
    trunc.term = Termination::truncated;

    DeOptions opts;
    DeRun rt = de_run(term, epsilon, opts);
    if (!rt.converged) throw estimation_error("estimate_phase: terminated chain did not decode");
    std::vector<double> norm(rt.v_bp_mean.size());
    for (size_t k = 0; k < norm.size(); ++k) norm[k] = rt.v_bp_mean[k] / gap;
    SteadyWindow wt = detect_steady_window(norm, 1, 1e-2, 5);
    if (!wt.found) throw estimation_error("estimate_phase: no steady state on terminated chain");
    // entry k of the history is iteration k+1, so a quiet window [a, b] means
    // iterations 1..a lead in and iterations b+2..T lead out
    out.i_start = wt.a;
    out.i_end = static_cast<int>(rt.iterations) - (wt.b + 1);

    opts.track_front = true;
    DeRun ru = de_run(trunc, epsilon, opts);
    // the weak right edge of the truncated chain never resolves, so the run
    // ends at a fixed point; the single wave that swept up to it is all we need
    if (!ru.converged && !ru.diverged)
        throw estimation_error("estimate_phase: truncated chain ran out of iterations");
    std::vector<double> normu(ru.v_bp_mean.size());
    for (size_t k = 0; k < normu.size(); ++k) normu[k] = ru.v_bp_mean[k] / gap;
    SteadyWindow wu = detect_steady_window(normu, 1, 1e-2, 5);
    if (!wu.found) throw estimation_error("estimate_phase: no steady state on truncated chain");

    double level = 0.0;
    std::vector<double> its, mids;
    for (int k = wu.a; k <= wu.b; ++k) {
        level += normu[k];
        if (!std::isnan(ru.front_mid[k])) {
            its.push_back(k + 1.0);
            mids.push_back(ru.front_mid[k]);
        }
    }
    out.gamma_bp = level / (wu.b - wu.a + 1);
    if (its.size() < 2)
        throw estimation_error("estimate_phase: wave front not trackable in the steady state");
    out.v_bp_speed = linear_fit(its, mids).slope;
    if (out.v_bp_speed <= 0)
        throw estimation_error("estimate_phase: non-positive wave speed");
    return out;
}

QuadFit fit_speed_curve(const std::vector<double>& eps, const std::vector<double>& v_bp) {
    if (eps.size() < 3 || eps.size() != v_bp.size())
        throw spec_error("fit_speed_curve: need at least 3 (eps, speed) samples");
    return quadratic_fit(eps, v_bp);
}

void write_de_history_csv(const DeRun& run, std::ostream& out) {
    out << "iter,sum_p,v_bp_mean\n";
    for (size_t k = 0; k < run.v_bp_mean.size(); ++k) {
        out << (k + 1) << ',';
        out << (k < run.sum_p.size() ? format_double(run.sum_p[k]) : std::string()) << ','
            << format_double(run.v_bp_mean[k]) << '\n';
    }
}

}  // namespace scl
