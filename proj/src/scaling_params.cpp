#include "scalelab/scaling_params.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "scalelab/decoders.hpp"
#include "scalelab/density_evolution.hpp"
#include "scalelab/ou.hpp"
#include "scalelab/rng.hpp"

namespace scl {

using nlohmann::json;

// --- table lookup and persistence --------------------------------------------

static ParamKnot lerp_knot(const ParamKnot& a, const ParamKnot& b, double t) {
    auto mix = [t](double x, double y) { return x + t * (y - x); };
    ParamKnot k;
    k.epsilon = mix(a.epsilon, b.epsilon);
    k.gamma_breve = mix(a.gamma_breve, b.gamma_breve);
    k.tau_start_breve = mix(a.tau_start_breve, b.tau_start_breve);
    k.tau_start_tilde = mix(a.tau_start_tilde, b.tau_start_tilde);
    k.tau_end_tilde = mix(a.tau_end_tilde, b.tau_end_tilde);
    k.v_pd = mix(a.v_pd, b.v_pd);
    k.v_bp = mix(a.v_bp, b.v_bp);
    k.gamma_bp = mix(a.gamma_bp, b.gamma_bp);
    k.i_start = mix(a.i_start, b.i_start);
    k.i_end = mix(a.i_end, b.i_end);
    k.c_f = mix(a.c_f, b.c_f);
    return k;
}

ParamKnot ScalingParams::at(double epsilon) const {
    if (knots.empty()) throw spec_error("parameter table is empty");
    const double lo = knots.front().epsilon, hi = knots.back().epsilon;
    if (epsilon < lo - 1e-12 || epsilon > hi + 1e-12) {
        std::ostringstream os;
        os << "epsilon " << epsilon << " outside the table range [" << lo << ", " << hi << "]";
        throw spec_error(os.str());
    }
    for (const auto& k : knots)
        if (std::abs(k.epsilon - epsilon) < 1e-12) return k;
    size_t i = 1;
    while (i + 1 < knots.size() && knots[i].epsilon < epsilon) ++i;
    const ParamKnot& a = knots[i - 1];
    const ParamKnot& b = knots[i];
    double t = (epsilon - a.epsilon) / (b.epsilon - a.epsilon);
    return lerp_knot(a, b, std::clamp(t, 0.0, 1.0));
}

static json scalar_to_json(const ScalarEstimate& s) {
    return json{{"value", s.value},
                {"epsilon_est", s.epsilon_est},
                {"N_est", s.n_est},
                {"trials", s.trials}};
}

static ScalarEstimate scalar_from_json(const json& j) {
    ScalarEstimate s;
    s.value = j.at("value").get<double>();
    s.epsilon_est = j.at("epsilon_est").get<double>();
    s.n_est = j.at("N_est").get<long>();
    s.trials = j.at("trials").get<long>();
    return s;
}

bool ScalingParams::has_section(const std::string& name) const {
    return std::find(sections.begin(), sections.end(), name) != sections.end();
}

const std::vector<std::string>& pipeline_sections() {
    static const std::vector<std::string> names = {"threshold", "phase",  "peel", "cov_breve",
                                                   "cov_bp",    "cf",     "sigma2"};
    return names;
}

bool pipeline_compatible(const PipelineConfig& a, const PipelineConfig& b) {
    return a.dv == b.dv && a.dc == b.dc && a.L == b.L && a.n_est == b.n_est &&
           a.eps_grid == b.eps_grid && a.peel_trials == b.peel_trials &&
           a.r1_cov_trials == b.r1_cov_trials && a.r1_cov_epsilon == b.r1_cov_epsilon &&
           a.bp_cov_trials == b.bp_cov_trials && a.bp_cov_epsilon == b.bp_cov_epsilon &&
           a.bp_cov_n == b.bp_cov_n && a.bp_small_trials == b.bp_small_trials &&
           a.bp_small_epsilon == b.bp_small_epsilon && a.bp_small_n == b.bp_small_n &&
           a.bp_trace_chain_length == b.bp_trace_chain_length && a.ell_ref == b.ell_ref &&
           a.cf_samples == b.cf_samples && a.cf_n == b.cf_n &&
           a.sigma2_model_paths == b.sigma2_model_paths &&
           a.i_eff_ref_total == b.i_eff_ref_total && a.threshold_tol == b.threshold_tol &&
           a.seed == b.seed;
}

static json pipeline_to_json(const PipelineConfig& c) {
    return json{{"dv", c.dv},
                {"dc", c.dc},
                {"L", c.L},
                {"N_est", c.n_est},
                {"eps_grid", c.eps_grid},
                {"peel_trials", c.peel_trials},
                {"r1_cov_trials", c.r1_cov_trials},
                {"r1_cov_epsilon", c.r1_cov_epsilon},
                {"bp_cov_trials", c.bp_cov_trials},
                {"bp_cov_epsilon", c.bp_cov_epsilon},
                {"bp_cov_n", c.bp_cov_n},
                {"bp_small_trials", c.bp_small_trials},
                {"bp_small_epsilon", c.bp_small_epsilon},
                {"bp_small_n", c.bp_small_n},
                {"bp_trace_chain_length", c.bp_trace_chain_length},
                {"ell_ref", c.ell_ref},
                {"cf_samples", c.cf_samples},
                {"cf_n", c.cf_n},
                {"sigma2_model_paths", c.sigma2_model_paths},
                {"i_eff_ref_total", c.i_eff_ref_total},
                {"threshold_tol", c.threshold_tol},
                {"seed", c.seed}};
}

static PipelineConfig pipeline_from_json(const json& j) {
    PipelineConfig c;
    c.dv = j.at("dv").get<int>();
    c.dc = j.at("dc").get<int>();
    c.L = j.at("L").get<int>();
    c.n_est = j.at("N_est").get<long>();
    c.eps_grid = j.at("eps_grid").get<std::vector<double>>();
    c.peel_trials = j.at("peel_trials").get<long>();
    c.r1_cov_trials = j.at("r1_cov_trials").get<long>();
    c.r1_cov_epsilon = j.at("r1_cov_epsilon").get<double>();
    c.bp_cov_trials = j.at("bp_cov_trials").get<long>();
    c.bp_cov_epsilon = j.at("bp_cov_epsilon").get<double>();
    c.bp_cov_n = j.at("bp_cov_n").get<long>();
    c.bp_small_trials = j.at("bp_small_trials").get<long>();
    c.bp_small_epsilon = j.at("bp_small_epsilon").get<double>();
    c.bp_small_n = j.at("bp_small_n").get<long>();
    c.bp_trace_chain_length = j.at("bp_trace_chain_length").get<int>();
    c.ell_ref = j.at("ell_ref").get<long>();
    c.cf_samples = j.at("cf_samples").get<long>();
    c.cf_n = j.at("cf_n").get<long>();
    c.sigma2_model_paths = j.at("sigma2_model_paths").get<long>();
    c.i_eff_ref_total = j.at("i_eff_ref_total").get<long>();
    c.threshold_tol = j.at("threshold_tol").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void save_params(const ScalingParams& p, const std::string& path) {
    json j;
    j["schema_version"] = 2;
    j["ensemble"] = {{"dv", p.dv}, {"dc", p.dc}, {"L", p.L}};
    j["N_est"] = p.n_est;
    j["seed"] = p.seed;
    j["epsilon_star"] = p.epsilon_star;
    if (!p.sections.empty()) {
        j["pipeline"] = pipeline_to_json(p.pipeline);
        j["sections"] = p.sections;
    }
    json arr = json::array();
    for (const auto& k : p.knots) {
        arr.push_back(json{{"epsilon", k.epsilon},
                           {"gamma_breve", k.gamma_breve},
                           {"tau_start_breve", k.tau_start_breve},
                           {"tau_start_tilde", k.tau_start_tilde},
                           {"tau_end_tilde", k.tau_end_tilde},
                           {"v_pd", k.v_pd},
                           {"v_bp", k.v_bp},
                           {"gamma_bp", k.gamma_bp},
                           {"i_start", k.i_start},
                           {"i_end", k.i_end},
                           {"c_f", k.c_f}});
    }
    j["knots"] = std::move(arr);
    j["scalars"] = {{"nu_breve", scalar_to_json(p.nu_breve)},
                    {"theta_breve", scalar_to_json(p.theta_breve)},
                    {"nu_bp", scalar_to_json(p.nu_bp)},
                    {"theta_bp", scalar_to_json(p.theta_bp)},
                    {"sigma2", scalar_to_json(p.sigma2)}};
    std::ofstream out(path);
    if (!out) throw spec_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

ScalingParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw spec_error("cannot read " + path);
    json j;
    in >> j;
    int ver = j.at("schema_version").get<int>();
    if (ver != 2) {
        throw spec_error("params file " + path + " uses schema version " + std::to_string(ver) +
                         "; this build understands version 2");
    }
    ScalingParams p;
    p.dv = j.at("ensemble").at("dv").get<int>();
    p.dc = j.at("ensemble").at("dc").get<int>();
    p.L = j.at("ensemble").at("L").get<int>();
    p.n_est = j.at("N_est").get<long>();
    p.seed = j.at("seed").get<uint64_t>();
    p.epsilon_star = j.at("epsilon_star").get<double>();
    for (const auto& e : j.at("knots")) {
        ParamKnot k;
        k.epsilon = e.at("epsilon").get<double>();
        k.gamma_breve = e.at("gamma_breve").get<double>();
        k.tau_start_breve = e.at("tau_start_breve").get<double>();
        k.tau_start_tilde = e.at("tau_start_tilde").get<double>();
        k.tau_end_tilde = e.at("tau_end_tilde").get<double>();
        k.v_pd = e.at("v_pd").get<double>();
        k.v_bp = e.at("v_bp").get<double>();
        k.gamma_bp = e.at("gamma_bp").get<double>();
        k.i_start = e.at("i_start").get<double>();
        k.i_end = e.at("i_end").get<double>();
        k.c_f = e.at("c_f").get<double>();
        p.knots.push_back(k);
    }
    const auto& sc = j.at("scalars");
    p.nu_breve = scalar_from_json(sc.at("nu_breve"));
    p.theta_breve = scalar_from_json(sc.at("theta_breve"));
    p.nu_bp = scalar_from_json(sc.at("nu_bp"));
    p.theta_bp = scalar_from_json(sc.at("theta_bp"));
    p.sigma2 = scalar_from_json(sc.at("sigma2"));
    if (j.contains("pipeline")) p.pipeline = pipeline_from_json(j.at("pipeline"));
    if (j.contains("sections")) p.sections = j.at("sections").get<std::vector<std::string>>();
    return p;
}

void write_params_csv(const ScalingParams& p, std::ostream& out) {
    out << "epsilon,gamma_breve,tau_start_breve,tau_start_tilde,tau_end_tilde,v_pd,v_bp,"
           "gamma_bp,i_start,i_end,c_f\n";
    for (const auto& k : p.knots) {
        out << format_double(k.epsilon) << ',' << format_double(k.gamma_breve) << ','
            << format_double(k.tau_start_breve) << ',' << format_double(k.tau_start_tilde) << ','
            << format_double(k.tau_end_tilde) << ',' << format_double(k.v_pd) << ','
            << format_double(k.v_bp) << ',' << format_double(k.gamma_bp) << ','
            << format_double(k.i_start) << ',' << format_double(k.i_end) << ','
            << format_double(k.c_f) << '\n';
    }
}

// --- peeling Monte-Carlo -------------------------------------------------------

namespace {

struct PeelTrialScratch {
    TannerGraph graph;
    std::vector<uint8_t> erased;
    PeelWorkspace ws;
};

long chain_positions(const EnsembleSpec& spec) {
    return spec.term == Termination::unterminated_eval ? spec.L + spec.margin : spec.L;
}

int thread_count(int workers) {
#ifdef _OPENMP
    return workers > 1 ? workers : 1;
#else
    (void)workers;
    return 1;
#endif
}

}  // namespace

PeelingSteadyState estimate_peeling_steady_state(const EnsembleSpec& spec, double epsilon,
                                                 double epsilon_star, long trials, uint64_t seed,
                                                 int workers) {
    spec.validate();
    if (!(epsilon > 0.0) || epsilon >= epsilon_star)
        throw spec_error("epsilon must lie in (0, epsilon_star)");
    if (trials < 1) throw spec_error("trials must be positive");

    const long N = spec.N;
    const long stride = std::max<long>(1, N / 100);
    const double h = static_cast<double>(stride) / static_cast<double>(N);
    const long vn_count = chain_positions(spec) * N;
    const long G = vn_count / stride + 2;
    const int vmid_pos = spec.L / 2;
    const double gap = epsilon_star - epsilon;

    const int nt = thread_count(workers);
    std::vector<std::vector<int64_t>> part_r1(nt, std::vector<int64_t>(G, 0));
    std::vector<std::vector<int64_t>> part_r1_even(nt, std::vector<int64_t>(G, 0));
    std::vector<std::vector<int64_t>> part_vmid(nt, std::vector<int64_t>(G, 0));
    std::vector<int64_t> part_succ(nt, 0), part_succ_even(nt, 0);

    auto run_trial = [&](long t, int tid, PeelTrialScratch& sc) {
        Rng rg = substream(seed, streams::graph, static_cast<uint64_t>(t));
        sample_graph_into(spec, rg, sc.graph);
        Rng rc = substream(seed, streams::channel, static_cast<uint64_t>(t));
        transmit_bec_into(sc.graph.vn_count, epsilon, rc, sc.erased);
        Rng rp = substream(seed, streams::peel, static_cast<uint64_t>(t));
        DecodeOptions opts;
        opts.record_r1 = true;
        opts.record_vmid = true;
        opts.vmid_position = vmid_pos;
        DecodingTrace tr = peel(sc.graph, sc.erased, rp, opts, &sc.ws);
        if (frame_error(tr, sc.graph)) return;
        part_succ[tid]++;
        bool even = (t % 2) == 0;
        if (even) part_succ_even[tid]++;
        for (long k = 0; k < G; ++k) {
            size_t step = static_cast<size_t>(k * stride);
            int64_t cnt =
                step < tr.r1.size() ? llround(static_cast<double>(tr.r1[step]) * N) : 0;
            part_r1[tid][k] += cnt;
            if (even) part_r1_even[tid][k] += cnt;
            int64_t vm = step < tr.vmid.size() ? tr.vmid[step] : 0;
            part_vmid[tid][k] += vm;
        }
    };

    if (nt <= 1) {
        PeelTrialScratch sc;
        for (long t = 0; t < trials; ++t) run_trial(t, 0, sc);
    } else {
#ifdef _OPENMP
        std::vector<PeelTrialScratch> scratch(nt);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
        for (long t = 0; t < trials; ++t) {
            int tid = omp_get_thread_num();
            run_trial(t, tid, scratch[tid]);
        }
#endif
    }

    std::vector<int64_t> sum_r1(G, 0), sum_r1_even(G, 0), sum_vmid(G, 0);
    int64_t succ = 0, succ_even = 0;
    for (int tid = 0; tid < nt; ++tid) {
        succ += part_succ[tid];
        succ_even += part_succ_even[tid];
        for (long k = 0; k < G; ++k) {
            sum_r1[k] += part_r1[tid][k];
            sum_r1_even[k] += part_r1_even[tid][k];
            sum_vmid[k] += part_vmid[tid][k];
        }
    }

    // decoding failures are expected physics near the threshold, so demand a
    // quorum of successful runs rather than a clean sweep
    if (succ < std::min<int64_t>(50, std::max<int64_t>(10, trials / 2))) {
        throw estimation_error("only " + std::to_string(succ) + " of " + std::to_string(trials) +
                               " peeling trials decoded the evaluation region");
    }

    PeelingSteadyState out;
    out.successful = succ;
    out.trials = trials;
    out.grid_step = h;
    out.r1_mean.resize(G);
    out.vmid_mean.resize(G);
    std::vector<double> norm(G);
    for (long k = 0; k < G; ++k) {
        out.r1_mean[k] = static_cast<double>(sum_r1[k]) / static_cast<double>(succ) / N;
        out.vmid_mean[k] = static_cast<double>(sum_vmid[k]) / static_cast<double>(succ);
        norm[k] = out.r1_mean[k] / gap;
    }

    // trailing zeros past the longest trial would read as a perfect plateau
    long gmax = G - 1;
    while (gmax > 0 && sum_r1[gmax] == 0) --gmax;
    norm.resize(gmax + 1);

    int half = std::max(1, static_cast<int>(llround(0.5 / h)));
    std::vector<double> smooth = moving_average(norm, half);
    SteadyWindow w = detect_steady_window(smooth, half, 1e-2, 5);
    if (!w.found || w.b <= w.a)
        throw estimation_error("no steady-state window in the averaged degree-one curve");
    out.tau_start = w.a * h;
    out.tau_end = w.b * h;

    auto window_mean = [&](const std::vector<int64_t>& sums, int64_t count) {
        if (count <= 0) return 0.0;
        double acc = 0;
        for (long k = w.a; k <= w.b; ++k) acc += static_cast<double>(sums[k]);
        return acc / static_cast<double>(count) / N / gap / static_cast<double>(w.b - w.a + 1);
    };
    out.gamma = window_mean(sum_r1, succ);
    out.gamma_split[0] = window_mean(sum_r1_even, succ_even);
    std::vector<int64_t> sum_r1_odd(G);
    for (long k = 0; k < G; ++k) sum_r1_odd[k] = sum_r1[k] - sum_r1_even[k];
    out.gamma_split[1] = window_mean(sum_r1_odd, succ - succ_even);
    if (out.gamma <= 0) throw estimation_error("non-positive steady-state degree-one level");

    if (spec.term == Termination::terminated) {
        // halfway through the steady window's span the mid-chain position is
        // still untouched, so its erased count reads the effective channel there
        long kmid = llround(((out.tau_end - out.tau_start) / 2.0) / h);
        kmid = std::clamp<long>(kmid, 0, G - 1);
        double vm = out.vmid_mean[kmid];
        if (vm <= 0) throw estimation_error("mid-chain erased count vanished before the midpoint");
        out.v_pd = static_cast<double>(N) / vm;
    } else {
        out.v_pd = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

PeelingSegments collect_peeling_segments(const EnsembleSpec& spec, double epsilon,
                                         double tau_start, double tau_end, long trials,
                                         uint64_t seed, int workers) {
    spec.validate();
    if (!(tau_end > tau_start) || tau_start < 0) throw spec_error("bad steady-state window");
    const long N = spec.N;
    const long stride = std::max<long>(1, N / 100);
    const double h = static_cast<double>(stride) / static_cast<double>(N);
    const long a = static_cast<long>(std::ceil(tau_start / h - 1e-9));
    const long b = static_cast<long>(std::floor(tau_end / h + 1e-9));
    if (b - a < 1) throw spec_error("steady-state window shorter than the sampling grid");

    std::vector<std::vector<double>> rows(trials);
    const int nt = thread_count(workers);

    auto run_trial = [&](long t, PeelTrialScratch& sc) {
        Rng rg = substream(seed, streams::graph, static_cast<uint64_t>(t));
        sample_graph_into(spec, rg, sc.graph);
        Rng rc = substream(seed, streams::channel, static_cast<uint64_t>(t));
        transmit_bec_into(sc.graph.vn_count, epsilon, rc, sc.erased);
        Rng rp = substream(seed, streams::peel, static_cast<uint64_t>(t));
        DecodeOptions opts;
        opts.record_r1 = true;
        DecodingTrace tr = peel(sc.graph, sc.erased, rp, opts, &sc.ws);
        if (frame_error(tr, sc.graph)) return;
        long last = std::min<long>(b, (static_cast<long>(tr.r1.size()) - 1) / stride);
        if (last - a < 1) return;
        std::vector<double>& row = rows[t];
        row.reserve(last - a + 1);
        for (long k = a; k <= last; ++k)
            row.push_back(static_cast<double>(tr.r1[static_cast<size_t>(k * stride)]));
    };

    if (nt <= 1) {
        PeelTrialScratch sc;
        for (long t = 0; t < trials; ++t) run_trial(t, sc);
    } else {
#ifdef _OPENMP
        std::vector<PeelTrialScratch> scratch(nt);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
        for (long t = 0; t < trials; ++t) run_trial(t, scratch[omp_get_thread_num()]);
#endif
    }

    PeelingSegments out;
    out.grid_step = h;
    for (auto& r : rows)
        if (!r.empty()) out.segments.push_back(std::move(r));
    return out;
}

// --- covariance fit -------------------------------------------------------------

// Pooled lagged covariance: for every column pair (k, k+m) the contribution
// sum((x - xbar)(y - ybar)) over rows long enough has expectation (n-1) c(m),
// so dividing the pooled numerator by the pooled (n-1) keeps it unbiased even
// with ragged rows.
static double pooled_cov(const std::vector<std::vector<double>>& rows, long m, long maxlen) {
    std::vector<double> sx(maxlen, 0.0), sy(maxlen, 0.0), sxy(maxlen, 0.0);
    std::vector<long> n(maxlen, 0);
    for (const auto& r : rows) {
        long len = static_cast<long>(r.size());
        for (long k = 0; k + m < len; ++k) {
            double x = r[k], y = r[k + m];
            sx[k] += x;
            sy[k] += y;
            sxy[k] += x * y;
            n[k]++;
        }
    }
    double num = 0;
    long den = 0;
    for (long k = 0; k < maxlen; ++k) {
        if (n[k] < 2) continue;
        num += sxy[k] - sx[k] * sy[k] / static_cast<double>(n[k]);
        den += n[k] - 1;
    }
    if (den < 1) return std::numeric_limits<double>::quiet_NaN();
    return num / static_cast<double>(den);
}

CovEstimate estimate_cov_params(const std::vector<std::vector<double>>& segments, double dt,
                                double N) {
    if (segments.size() < 100)
        throw estimation_error("covariance fit needs at least 100 trajectories, got " +
                               std::to_string(segments.size()));
    if (!(dt > 0) || !(N > 0)) throw spec_error("dt and N must be positive");
    long maxlen = 0;
    for (const auto& r : segments) maxlen = std::max<long>(maxlen, static_cast<long>(r.size()));
    if (maxlen < 3) throw estimation_error("trajectory segments too short for a covariance fit");

    double c0 = pooled_cov(segments, 0, maxlen);
    if (!(c0 > 0)) throw estimation_error("non-positive pooled variance at lag 0");

    long max_lag = std::min<long>(maxlen - 1, 512);
    std::vector<double> lag_t, neg_log;
    for (long m = 1; m <= max_lag; ++m) {
        double c = pooled_cov(segments, m, maxlen);
        if (!(c > 0)) break;
        lag_t.push_back(m * dt);
        neg_log.push_back(-std::log(c / c0));
    }
    if (lag_t.size() < 2)
        throw estimation_error("autocovariance turns non-positive before two usable lags");

    auto slope_through_origin = [](const std::vector<double>& x, const std::vector<double>& y,
                                   size_t count) {
        double sxy = 0, sxx = 0;
        for (size_t i = 0; i < count; ++i) {
            sxy += x[i] * y[i];
            sxx += x[i] * x[i];
        }
        return sxy / sxx;
    };

    double theta = slope_through_origin(lag_t, neg_log, lag_t.size());
    if (theta > 0) {
        // one refinement pass: drop the noisy tail beyond two decay times
        size_t keep = 0;
        while (keep < lag_t.size() && lag_t[keep] <= 2.0 / theta) ++keep;
        keep = std::max<size_t>(keep, 2);
        theta = slope_through_origin(lag_t, neg_log, keep);
    }
    if (!(theta > 0)) throw estimation_error("non-positive autocovariance decay rate");

    CovEstimate out;
    out.nu = N * c0;
    out.theta = theta;
    out.trajectories = static_cast<long>(segments.size());
    return out;
}

// --- BP trace collection ---------------------------------------------------------

BpSteadyTraces collect_bp_traces(const EnsembleSpec& spec, double epsilon, long trials,
                                 int i_start, long ell_ref, uint64_t seed, int workers) {
    spec.validate();
    if (i_start < 1) throw spec_error("i_start must be at least 1");
    if (ell_ref < 2) throw spec_error("ell_ref must be at least 2");
    const long horizon = i_start + ell_ref;

    std::vector<std::vector<double>> vrows(trials);
    const int nt = thread_count(workers);

    struct Scratch {
        TannerGraph graph;
        std::vector<uint8_t> erased;
        BpWorkspace ws;
    };

    auto run_trial = [&](long t, Scratch& sc) {
        Rng rg = substream(seed, streams::graph, static_cast<uint64_t>(t));
        sample_graph_into(spec, rg, sc.graph);
        Rng rc = substream(seed, streams::channel, static_cast<uint64_t>(t));
        transmit_bec_into(sc.graph.vn_count, epsilon, rc, sc.erased);
        DecodeOptions opts;
        opts.record_vbp = true;
        DecodingTrace tr = bp_full(sc.graph, sc.erased, static_cast<int>(horizon), opts, &sc.ws);

        std::vector<double>& row = vrows[t];
        for (long k = i_start; k < static_cast<long>(tr.v_bp.size()); ++k) {
            double v = static_cast<double>(tr.v_bp[k]);
            if (v <= 0.0) break;
            row.push_back(v);
            if (static_cast<long>(row.size()) >= ell_ref) break;
        }
        if (row.size() < 2) row.clear();
    };

    if (nt <= 1) {
        Scratch sc;
        for (long t = 0; t < trials; ++t) run_trial(t, sc);
    } else {
#ifdef _OPENMP
        std::vector<Scratch> scratch(nt);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
        for (long t = 0; t < trials; ++t) run_trial(t, scratch[omp_get_thread_num()]);
#endif
    }

    BpSteadyTraces out;
    out.trials = trials;
    for (long t = 0; t < trials; ++t)
        if (!vrows[t].empty()) out.v_segments.push_back(std::move(vrows[t]));
    return out;
}

std::vector<int> collect_front_positions(const EnsembleSpec& spec, double epsilon, long trials,
                                         long ell, uint64_t seed, int workers) {
    spec.validate();
    if (ell < 2) throw spec_error("ell must be at least 2");
    const long L_chain = chain_positions(spec);
    // a front frozen over the last stretch belongs to a wave that died
    const long quiet = std::min<long>(50, ell - 1);

    std::vector<int> pos(trials, -1);
    const int nt = thread_count(workers);

    struct Scratch {
        TannerGraph graph;
        std::vector<uint8_t> erased;
        BpWorkspace ws;
    };

    auto run_trial = [&](long t, Scratch& sc) {
        Rng rg = substream(seed, streams::graph, static_cast<uint64_t>(t));
        sample_graph_into(spec, rg, sc.graph);
        Rng rc = substream(seed, streams::channel, static_cast<uint64_t>(t));
        transmit_bec_into(sc.graph.vn_count, epsilon, rc, sc.erased);
        DecodeOptions opts;
        opts.record_pleft = true;
        DecodingTrace tr = bp_full(sc.graph, sc.erased, static_cast<int>(ell), opts, &sc.ws);
        if (static_cast<long>(tr.p_left.size()) < ell) return;  // decoded before the horizon
        int p = tr.p_left[ell - 1];
        if (p >= L_chain / 2) return;  // too close to the opposite front
        if (p <= tr.p_left[ell - 1 - quiet]) return;
        pos[t] = p;
    };

    if (nt <= 1) {
        Scratch sc;
        for (long t = 0; t < trials; ++t) run_trial(t, sc);
    } else {
#ifdef _OPENMP
        std::vector<Scratch> scratch(nt);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
        for (long t = 0; t < trials; ++t) run_trial(t, scratch[omp_get_thread_num()]);
#endif
    }

    std::vector<int> out;
    out.reserve(trials);
    for (long t = 0; t < trials; ++t)
        if (pos[t] >= 0) out.push_back(pos[t]);
    return out;
}

// --- drift and extra diffusion ----------------------------------------------------

double estimate_cf(double gamma_breve, double nu_breve, double theta_breve, double eps_gap,
                   double N, long i_eff_ref, long samples, uint64_t seed, int workers) {
    if (i_eff_ref < 1) throw spec_error("i_eff_ref must be positive");
    if (samples < 1) throw spec_error("samples must be positive");
    const double level = gamma_breve * eps_gap;
    const double stat_var = nu_breve / N;
    std::vector<double> vals(samples);
    const int nt = thread_count(workers);
    if (nt <= 1) {
        for (long s = 0; s < samples; ++s) {
            Rng r = substream(seed, streams::npd, static_cast<uint64_t>(s));
            vals[s] = ou_clock_path(level, stat_var, theta_breve, i_eff_ref, r);
        }
    } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
        for (long s = 0; s < samples; ++s) {
            Rng r = substream(seed, streams::npd, static_cast<uint64_t>(s));
            vals[s] = ou_clock_path(level, stat_var, theta_breve, i_eff_ref, r);
        }
#endif
    }
    double sum = 0;  // fixed-order reduction keeps the result worker-independent
    for (double v : vals) sum += v;
    return sum / static_cast<double>(samples) / static_cast<double>(i_eff_ref);
}

double estimate_cf(const ScalingParams& p, double epsilon, double N, long i_eff_ref, long samples,
                   uint64_t seed, int workers) {
    ParamKnot k = p.at(epsilon);
    return estimate_cf(k.gamma_breve, p.nu_breve.value, p.theta_breve.value,
                       p.epsilon_star - epsilon, N, i_eff_ref, samples, seed, workers);
}

Sigma2Estimate estimate_sigma2(const std::vector<int>& positions, double c_f, double v_pd,
                               double theta_bp, double nu_bp, double eps_gap, double N,
                               long ell_ref, long model_paths, uint64_t seed) {
    if (positions.size() < 200)
        throw estimation_error("position-diffusion fit needs at least 200 qualifying traces, got " +
                               std::to_string(positions.size()));
    if (ell_ref < 1 || model_paths < 2) throw spec_error("bad sigma2 configuration");

    Welford sim;
    for (int a : positions) sim.add(static_cast<double>(a));

    const double m = c_f * v_pd;
    const double b = theta_bp * eps_gap;
    const double sigma1 = std::sqrt(2.0 * theta_bp * eps_gap * nu_bp / N) * v_pd;
    const double stat_var = v_pd * v_pd * nu_bp / N;

    Welford model;
    Rng r(seed, streams::ou_model << 56);
    for (long i = 0; i < model_paths; ++i) {
        OuPair s;
        s.eta = ou_stationary_sample(m, stat_var, r.normal());
        s.P = 0.0;
        OuPair e = integrated_ou_step(s, m, b, sigma1, 0.0, static_cast<double>(ell_ref),
                                      r.normal(), r.normal(), r.normal());
        model.add(std::floor(e.P));
    }

    Sigma2Estimate out;
    out.traces = static_cast<long>(positions.size());
    out.var_sim = sim.variance();
    out.var_model = model.variance();
    out.mean_sim = sim.mean;
    out.mean_model = model.mean;
    double diff = out.var_sim - out.var_model;
    out.clamped = diff < 0;
    out.sigma2 = std::sqrt(std::max(0.0, diff) / static_cast<double>(ell_ref));
    return out;
}

// --- pipeline ---------------------------------------------------------------------

namespace {

struct StageClock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double lap() {
        auto t1 = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(t1 - t0).count();
        t0 = t1;
        return s;
    }
};

void log_line(std::ostream* log, const std::string& msg) {
    if (log) *log << "[estimate] " << msg << std::endl;
}

}  // namespace

ScalingParams estimate_all(const PipelineConfig& cfg, std::ostream* log,
                           const ScalingParams* prior, const std::vector<std::string>* run) {
    PipelineConfig c = cfg;
    if (c.eps_grid.empty())
        for (int i = 0; i <= 10; ++i) c.eps_grid.push_back(0.44 + 0.005 * i);
    if (!std::is_sorted(c.eps_grid.begin(), c.eps_grid.end()))
        throw spec_error("epsilon grid must be ascending");

    const auto& names = pipeline_sections();
    auto known = [&](const std::string& s) {
        return std::find(names.begin(), names.end(), s) != names.end();
    };

    std::set<std::string> have;
    if (prior) {
        bool ok = pipeline_compatible(prior->pipeline, c) &&
                  prior->knots.size() == c.eps_grid.size();
        for (size_t i = 0; ok && i < c.eps_grid.size(); ++i)
            ok = prior->knots[i].epsilon == c.eps_grid[i];
        if (ok) {
            for (const auto& s : prior->sections)
                if (known(s)) have.insert(s);
        } else {
            log_line(log, "existing table does not match this configuration, recomputing");
            prior = nullptr;
        }
    }

    std::set<std::string> todo;
    if (run) {
        for (const auto& s : *run) {
            if (!known(s)) throw spec_error("unknown pipeline section: " + s);
            todo.insert(s);
        }
    } else {
        for (const auto& s : names)
            if (!have.count(s)) todo.insert(s);
    }

    static const std::map<std::string, std::vector<std::string>> deps = {
        {"threshold", {}},
        {"phase", {"threshold"}},
        {"peel", {"threshold"}},
        {"cov_breve", {"threshold"}},
        {"cov_bp", {"threshold", "phase"}},
        {"cf", {"threshold", "phase", "peel", "cov_breve"}},
        {"sigma2", {"threshold", "peel", "cov_bp", "cf"}},
    };
    for (const auto& s : todo)
        for (const auto& d : deps.at(s))
            if (!todo.count(d) && !have.count(d))
                throw spec_error("section " + s + " needs " + d +
                                 " either cached or requested alongside it");

    auto active = [&](const char* s) { return todo.count(s) != 0; };
    auto skip_note = [&](const char* s) {
        if (have.count(s) && !todo.count(s)) log_line(log, std::string(s) + ": cached");
    };
    // Stage seeds are fixed functions of the stage identity, never of what ran
    // before, so a table assembled over several passes matches a one-pass run.
    auto stage_seed = [&](uint64_t idx) { return substream(c.seed, streams::misc, idx).u64(); };
    const uint64_t kCovWin = uint64_t(1) << 20, kCovSeg = kCovWin + 1, kCovBig = kCovWin + 2,
                   kCovSmall = kCovWin + 3, kCfBase = uint64_t(1) << 21,
                   kSigma2 = uint64_t(1) << 22;

    ScalingParams p;
    if (prior) p = *prior;
    p.dv = c.dv;
    p.dc = c.dc;
    p.L = c.L;
    p.n_est = c.n_est;
    p.seed = c.seed;
    p.pipeline = c;
    p.pipeline.workers = 1;  // results never depend on the worker count
    if (p.knots.size() != c.eps_grid.size()) {
        p.knots.assign(c.eps_grid.size(), ParamKnot{});
        for (size_t i = 0; i < c.eps_grid.size(); ++i) p.knots[i].epsilon = c.eps_grid[i];
    }

    StageClock clock;
    EnsembleSpec de_spec;
    de_spec.dv = c.dv;
    de_spec.dc = c.dc;
    de_spec.L = c.L;
    de_spec.N = c.n_est;
    de_spec.term = Termination::terminated;

    if (active("threshold")) {
        p.epsilon_star = de_threshold(de_spec, c.threshold_tol);
        log_line(log, "threshold " + format_double(p.epsilon_star) + " (" +
                          format_double(clock.lap()) + " s)");
    } else {
        skip_note("threshold");
    }

    if (active("phase")) {
        for (auto& k : p.knots) {
            DePhaseEstimates ph = estimate_phase(de_spec, k.epsilon, p.epsilon_star);
            k.v_bp = ph.v_bp_speed;
            k.gamma_bp = ph.gamma_bp;
            k.i_start = ph.i_start;
            k.i_end = ph.i_end;
        }
        log_line(log, "phase table done (" + format_double(clock.lap()) + " s)");
    } else {
        skip_note("phase");
    }

    EnsembleSpec term_spec = de_spec;
    EnsembleSpec open_spec = de_spec;
    open_spec.term = Termination::unterminated_eval;

    if (active("peel")) {
        for (size_t ki = 0; ki < p.knots.size(); ++ki) {
            ParamKnot& k = p.knots[ki];
            PeelingSteadyState two =
                estimate_peeling_steady_state(term_spec, k.epsilon, p.epsilon_star, c.peel_trials,
                                              stage_seed(2 * ki), c.workers);
            k.tau_start_tilde = two.tau_start;
            k.tau_end_tilde = two.tau_end;
            k.v_pd = two.v_pd;
            PeelingSteadyState one =
                estimate_peeling_steady_state(open_spec, k.epsilon, p.epsilon_star, c.peel_trials,
                                              stage_seed(2 * ki + 1), c.workers);
            k.gamma_breve = one.gamma;
            k.tau_start_breve = one.tau_start;
            for (const PeelingSteadyState* ps : {&two, &one}) {
                double lo = std::min(ps->gamma_split[0], ps->gamma_split[1]);
                double hi = std::max(ps->gamma_split[0], ps->gamma_split[1]);
                if (!(lo > 0) || (hi - lo) / ps->gamma > 0.10)
                    throw estimation_error("split-half steady-state levels disagree at epsilon " +
                                           format_double(k.epsilon));
            }
            log_line(log, "knot " + format_double(k.epsilon) + ": gamma_breve " +
                              format_double(k.gamma_breve) + ", v_pd " + format_double(k.v_pd) +
                              " (" + format_double(clock.lap()) + " s)");
        }
    } else {
        skip_note("peel");
    }

    if (active("cov_breve")) {
        PeelingSteadyState win =
            estimate_peeling_steady_state(open_spec, c.r1_cov_epsilon, p.epsilon_star,
                                          c.peel_trials, stage_seed(kCovWin), c.workers);
        PeelingSegments segs =
            collect_peeling_segments(open_spec, c.r1_cov_epsilon, win.tau_start, win.tau_end,
                                     c.r1_cov_trials, stage_seed(kCovSeg), c.workers);
        CovEstimate cov =
            estimate_cov_params(segs.segments, segs.grid_step, static_cast<double>(c.n_est));
        p.nu_breve = {cov.nu, c.r1_cov_epsilon, c.n_est, cov.trajectories};
        p.theta_breve = {cov.theta, c.r1_cov_epsilon, c.n_est, cov.trajectories};
        log_line(log, "nu_breve " + format_double(cov.nu) + ", theta_breve " +
                          format_double(cov.theta) + " (" + format_double(clock.lap()) + " s)");
    } else {
        skip_note("cov_breve");
    }

    EnsembleSpec trace_spec;
    trace_spec.dv = c.dv;
    trace_spec.dc = c.dc;
    trace_spec.L = c.bp_trace_chain_length;
    trace_spec.term = Termination::truncated;

    if (active("cov_bp")) {
        trace_spec.N = c.bp_cov_n;
        int istart = static_cast<int>(llround(p.at(c.bp_cov_epsilon).i_start));
        BpSteadyTraces tr = collect_bp_traces(trace_spec, c.bp_cov_epsilon, c.bp_cov_trials,
                                              std::max(1, istart), c.ell_ref,
                                              stage_seed(kCovBig), c.workers);
        CovEstimate big = estimate_cov_params(tr.v_segments, p.epsilon_star - c.bp_cov_epsilon,
                                              static_cast<double>(c.bp_cov_n));
        log_line(log, "bp covariance at N " + std::to_string(c.bp_cov_n) + ": nu_bp " +
                          format_double(big.nu) + ", theta_bp " + format_double(big.theta) +
                          " (reference only, " + format_double(clock.lap()) + " s)");

        trace_spec.N = c.bp_small_n;
        istart = static_cast<int>(llround(p.at(c.bp_small_epsilon).i_start));
        BpSteadyTraces small_traces = collect_bp_traces(trace_spec, c.bp_small_epsilon,
                                                        c.bp_small_trials, std::max(1, istart),
                                                        c.ell_ref, stage_seed(kCovSmall),
                                                        c.workers);
        CovEstimate cov = estimate_cov_params(small_traces.v_segments,
                                              p.epsilon_star - c.bp_small_epsilon,
                                              static_cast<double>(c.bp_small_n));
        p.nu_bp = {cov.nu, c.bp_small_epsilon, c.bp_small_n, cov.trajectories};
        p.theta_bp = {cov.theta, c.bp_small_epsilon, c.bp_small_n, cov.trajectories};
        log_line(log, "bp covariance at N " + std::to_string(c.bp_small_n) + ": nu_bp " +
                          format_double(cov.nu) + ", theta_bp " + format_double(cov.theta) + " (" +
                          format_double(clock.lap()) + " s)");
    } else {
        skip_note("cov_bp");
    }

    if (active("cf")) {
        for (size_t ki = 0; ki < p.knots.size(); ++ki) {
            ParamKnot& k = p.knots[ki];
            long i_eff = c.i_eff_ref_total - llround(k.i_start) - llround(k.i_end);
            if (i_eff < 1)
                throw estimation_error("drift horizon exhausted by the wave build-up at epsilon " +
                                       format_double(k.epsilon));
            k.c_f = estimate_cf(k.gamma_breve, p.nu_breve.value, p.theta_breve.value,
                                p.epsilon_star - k.epsilon, static_cast<double>(c.cf_n), i_eff,
                                c.cf_samples, stage_seed(kCfBase + ki), c.workers);
        }
        log_line(log, "drift column done (" + format_double(clock.lap()) + " s)");
    } else {
        skip_note("cf");
    }

    if (active("sigma2")) {
        // the front is measured on a two-wave chain long enough that the waves
        // stay apart for the whole reference stretch
        EnsembleSpec front_spec = trace_spec;
        front_spec.term = Termination::terminated;
        front_spec.L = 2 * c.bp_trace_chain_length;
        front_spec.N = c.bp_small_n;
        std::vector<int> fronts =
            collect_front_positions(front_spec, c.bp_small_epsilon, c.bp_small_trials, c.ell_ref,
                                    stage_seed(kSigma2 + 1), c.workers);
        ParamKnot k = p.at(c.bp_small_epsilon);
        Sigma2Estimate s2 = estimate_sigma2(
            fronts, k.c_f, k.v_pd, p.theta_bp.value, p.nu_bp.value,
            p.epsilon_star - c.bp_small_epsilon, static_cast<double>(c.bp_small_n), c.ell_ref,
            c.sigma2_model_paths, stage_seed(kSigma2));
        p.sigma2 = {s2.sigma2, c.bp_small_epsilon, c.bp_small_n, s2.traces};
        log_line(log, "sigma2 " + format_double(s2.sigma2) + " (front mean sim " +
                          format_double(s2.mean_sim) + " vs model " +
                          format_double(s2.mean_model) + ", " + format_double(clock.lap()) +
                          " s)");
    } else {
        skip_note("sigma2");
    }

    p.sections.clear();
    for (const auto& s : names)
        if (have.count(s) || todo.count(s)) p.sections.push_back(s);

    const bool hp = p.has_section("peel"), hf = p.has_section("phase"), hc = p.has_section("cf");
    for (const auto& k : p.knots) {
        if (hp && (!(k.gamma_breve > 0) || !(k.tau_start_breve > 0) || !(k.tau_start_tilde > 0) ||
                   !(k.tau_end_tilde > k.tau_start_tilde) || !(k.v_pd > 0)))
            throw estimation_error("peeling columns failed their positivity checks at epsilon " +
                                   format_double(k.epsilon));
        if (hf && (!(k.v_bp > 0) || !(k.gamma_bp > 0) || k.i_start < 0 || k.i_end < 0))
            throw estimation_error("phase columns failed their positivity checks at epsilon " +
                                   format_double(k.epsilon));
        if (hc && !(k.c_f > 0))
            throw estimation_error("drift column failed its positivity check at epsilon " +
                                   format_double(k.epsilon));
        if (hp && hf) {
            double pred = k.v_pd * k.gamma_breve * (p.epsilon_star - k.epsilon);
            double rel = std::abs(k.v_bp - pred) / k.v_bp;
            if (log && rel >= 0.10)
                log_line(log, "warning: speed conversion off by " + format_double(rel * 100) +
                                  "% at epsilon " + format_double(k.epsilon));
        }
    }
    return p;
}

}  // namespace scl
