#include "scalelab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "scalelab/laws_full_bp.hpp"
#include "scalelab/scaling_params.hpp"
#include "scalelab/simulate.hpp"
#include "scalelab/util.hpp"
#include "scalelab/window_race.hpp"

namespace scl {
namespace {

double parse_number(const std::string& tok, const std::string& what) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw spec_error(what + ": cannot parse '" + tok + "' as a number");
    }
}

// "start:end:step" (inclusive), a comma list, or a single value
std::vector<double> parse_eps_grid(const std::string& text) {
    std::vector<double> grid;
    if (text.empty()) return grid;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::istringstream in(text);
        std::string tok;
        while (std::getline(in, tok, ':')) parts.push_back(tok);
        if (parts.size() != 3)
            throw spec_error("epsilon grid '" + text + "' is not start:end:step");
        double a = parse_number(parts[0], "epsilon grid");
        double b = parse_number(parts[1], "epsilon grid");
        double step = parse_number(parts[2], "epsilon grid");
        if (!(step > 0) || b < a)
            throw spec_error("epsilon grid '" + text + "' must ascend with a positive step");
        long n = static_cast<long>(std::floor((b - a) / step + 1e-9));
        for (long k = 0; k <= n; ++k) grid.push_back(a + static_cast<double>(k) * step);
        return grid;
    }
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        grid.push_back(parse_number(tok, "epsilon grid"));
    }
    if (grid.empty()) throw spec_error("epsilon grid '" + text + "' is empty");
    return grid;
}

bool file_exists(const std::string& path) {
    std::ifstream probe(path);
    return probe.good();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw spec_error("cannot write " + path);
    return out;
}

// --- de: threshold + phase table ---------------------------------------------

struct DeArgs {
    PipelineConfig pipe;
    std::string grid_text;
    std::string params_path = "params.json";
};

void cmd_de(DeArgs& a) {
    if (!a.grid_text.empty()) a.pipe.eps_grid = parse_eps_grid(a.grid_text);
    ScalingParams prior;
    const ScalingParams* prior_ptr = nullptr;
    if (file_exists(a.params_path)) {
        prior = load_params(a.params_path);
        prior_ptr = &prior;
    }
    const std::vector<std::string> run = {"threshold", "phase"};
    ScalingParams table = estimate_all(a.pipe, &std::cerr, prior_ptr, &run);
    save_params(table, a.params_path);
    std::cout << "epsilon_star," << format_double(table.epsilon_star) << "\n";
    std::cout << "epsilon,v_bp,gamma_bp,i_start,i_end\n";
    for (const auto& k : table.knots) {
        std::cout << format_double(k.epsilon) << ',' << format_double(k.v_bp) << ','
                  << format_double(k.gamma_bp) << ',' << format_double(k.i_start) << ','
                  << format_double(k.i_end) << '\n';
    }
    std::cerr << "[de] wrote " << a.params_path << "\n";
}

// --- estimate: the full parameter pipeline -----------------------------------

struct EstimateArgs {
    PipelineConfig pipe;
    std::string grid_text;
    std::string params_path = "params.json";
    std::vector<std::string> only;
};

void cmd_estimate(EstimateArgs& a) {
    if (!a.grid_text.empty()) a.pipe.eps_grid = parse_eps_grid(a.grid_text);
    ScalingParams prior;
    const ScalingParams* prior_ptr = nullptr;
    if (file_exists(a.params_path)) {
        prior = load_params(a.params_path);
        prior_ptr = &prior;
        std::cerr << "[estimate] loaded existing table from " << a.params_path << "\n";
    }
    ScalingParams table =
        estimate_all(a.pipe, &std::cerr, prior_ptr, a.only.empty() ? nullptr : &a.only);
    save_params(table, a.params_path);
    std::cerr << "[estimate] wrote " << a.params_path << "\n";
}

// --- predict: FER curves from the scaling laws --------------------------------

struct PredictArgs {
    std::string params_path = "params.json";
    std::string grid_text;
    std::vector<std::string> models = {"all"};
    double N = 1000;
    long I = 0;
    long npd_samples = 100000;
    std::uint64_t seed = 0x5ca1eb;
    int workers = 1;
    int W = 20, I_in = 60, I_s = 10;
    std::string out_path = "curves_pred.csv";
};

void cmd_predict(PredictArgs& a) {
    ScalingParams p = load_params(a.params_path);
    std::vector<double> grid = parse_eps_grid(a.grid_text);
    if (grid.empty())
        for (const auto& k : p.knots) grid.push_back(k.epsilon);
    if (grid.empty()) throw spec_error("parameter table has no knots and no --eps-grid was given");

    std::vector<std::string> models;
    auto add_model = [&](const std::string& m) {
        if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
    };
    for (const std::string& tok : a.models) {
        if (tok == "all") {
            for (FullBpLaw law : {FullBpLaw::unlimited, FullBpLaw::const_prop,
                                  FullBpLaw::iterative_ou, FullBpLaw::gaussian,
                                  FullBpLaw::shifted_gaussian})
                add_model(law_name(law));
        } else {
            add_model(tok);
        }
    }

    WindowConfig wcfg;
    wcfg.W = a.W;
    wcfg.I_in = a.I_in;
    wcfg.I_s = a.I_s;

    std::vector<PredictionRow> rows;
    auto run_point = [&](const std::string& label, double eps, long I, auto&& fer_fn) {
        try {
            rows.push_back({eps, a.N, I, label, fer_fn()});
        } catch (const spec_error& e) {
            std::cerr << "[predict] skipping " << label << " at epsilon " << format_double(eps)
                      << ": " << e.what() << "\n";
        }
    };

    for (const std::string& model : models) {
        if (model == "sw_unlimited") {
            std::string label = "sw_unlimited_w" + std::to_string(a.W);
            for (double eps : grid)
                run_point(label, eps, 0,
                          [&] { return fer_unlimited_sliding_window(p, eps, a.N, p.L, a.W); });
        } else if (model == "sw_limited") {
            std::string label = "sw_limited_w" + std::to_string(a.W) + "_iin" +
                                std::to_string(a.I_in) + "_is" + std::to_string(a.I_s);
            for (double eps : grid)
                run_point(label, eps, wcfg.total_budget(p.L),
                          [&] { return fer_sliding_window_limited(p, eps, a.N, p.L, wcfg); });
        } else {
            FullBpLaw law = law_from_name(model);
            bool limited = law != FullBpLaw::unlimited;
            if (limited && a.I <= 0)
                throw spec_error("model " + model + " needs a positive --iters budget");
            std::string label = limited ? model + "_i" + std::to_string(a.I) : model;
            for (double eps : grid)
                run_point(label, eps, limited ? a.I : 0, [&] {
                    return fer_full_bp(p, eps, a.N, a.I, law, a.npd_samples, a.seed, a.workers);
                });
        }
    }
    if (rows.empty()) throw spec_error("no predictions were produced");
    auto out = open_out(a.out_path);
    write_prediction_csv(rows, out);
    std::cerr << "[predict] wrote " << rows.size() << " rows to " << a.out_path << "\n";
}

// --- simulate: Monte-Carlo FER sweeps -----------------------------------------

struct SimulateArgs {
    int dv = 5, dc = 10, L = 50;
    int N = 1000;
    std::string term = "terminated";
    int margin = 20;
    std::string grid_text;
    std::string decoder = "unlimited";
    long I = 0;
    int W = 20, I_in = 60, I_s = 10;
    long frames = 10000;
    long max_frame_errors = 0;
    bool fixed_graph = false;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out_path = "curves_sim.csv";
};

void cmd_simulate(SimulateArgs& a) {
    ExperimentConfig cfg;
    cfg.ensemble.dv = a.dv;
    cfg.ensemble.dc = a.dc;
    cfg.ensemble.L = a.L;
    cfg.ensemble.N = a.N;
    cfg.ensemble.margin = a.margin;
    if (a.term == "terminated")
        cfg.ensemble.term = Termination::terminated;
    else if (a.term == "truncated")
        cfg.ensemble.term = Termination::truncated;
    else if (a.term == "unterminated")
        cfg.ensemble.term = Termination::unterminated_eval;
    else
        throw spec_error("unknown termination '" + a.term + "'");
    if (a.decoder == "unlimited")
        cfg.decoder = DecoderKind::unlimited;
    else if (a.decoder == "bp" || a.decoder == "full_bp")
        cfg.decoder = DecoderKind::full_bp;
    else if (a.decoder == "sw" || a.decoder == "sliding_window")
        cfg.decoder = DecoderKind::sliding_window;
    else
        throw spec_error("unknown decoder '" + a.decoder + "'");
    cfg.epsilon_grid = parse_eps_grid(a.grid_text);
    cfg.iteration_budget = a.I;
    cfg.window.W = a.W;
    cfg.window.I_in = a.I_in;
    cfg.window.I_s = a.I_s;
    cfg.frames = a.frames;
    cfg.max_frame_errors = a.max_frame_errors;
    cfg.fixed_graph = a.fixed_graph;
    cfg.seed = a.seed;
    cfg.workers = a.workers;
    cfg.validate();

    SweepResult r = run_sweep(cfg);
    auto out = open_out(a.out_path);
    write_sweep_csv(r, out);
    for (const auto& pt : r.points)
        std::cerr << "[simulate] eps=" << format_double(pt.epsilon)
                  << " fer=" << format_double(pt.fer) << " (" << pt.errors << "/" << pt.frames_run
                  << ")\n";
    std::cerr << "[simulate] wrote " << a.out_path << "\n";
}

// --- fp: the window race solved head-on ---------------------------------------

struct FpArgs {
    std::string params_path = "params.json";
    double eps = 0;
    double N = 1000;
    int L = 0;  // 0 = chain length of the parameter table
    int W = 20, I_in = 60, I_s = 10;
    FpOptions opts;
    long em_paths = 0;
    double em_dt = 0.1;
    std::uint64_t seed = 0x5ca1eb;
    int workers = 1;
    std::string mass_csv;
    std::string out_path;  // empty = stdout
};

void cmd_fp(FpArgs& a) {
    ScalingParams p = load_params(a.params_path);
    int L = a.L > 0 ? a.L : p.L;
    WindowConfig wcfg;
    wcfg.W = a.W;
    wcfg.I_in = a.I_in;
    wcfg.I_s = a.I_s;
    FpOptions opts = a.opts;
    opts.record_mass = !a.mass_csv.empty();
    SwLimitedPrediction pred = predict_sliding_window_limited(p, a.eps, a.N, L, wcfg, opts);

    nlohmann::json j;
    j["config"] = {{"dv", p.dv}, {"dc", p.dc},       {"L", L},          {"N", a.N},
                   {"epsilon", a.eps}, {"W", a.W},   {"I_in", a.I_in},  {"I_s", a.I_s}};
    j["pr_overtake"] = pred.pr_overtake;
    j["w_prime"] = pred.w_prime;
    j["fer_pred"] = pred.fer;
    j["grid"] = {{"n_eta", pred.race.field.n_eta},
                 {"n_pl", pred.race.field.n_pl},
                 {"dt", opts.dt}};
    if (a.em_paths > 0) {
        FpProblem prob = build_problem(p, a.eps, a.N, L, wcfg);
        double em = em_simulate(prob, a.em_paths, a.em_dt, a.seed, a.workers);
        j["em"] = {{"paths", a.em_paths}, {"dt", a.em_dt}, {"pr_overtake", em}};
        std::cerr << "[fp] em oracle pr_overtake=" << format_double(em)
                  << " |fp-em|=" << format_double(std::abs(em - pred.pr_overtake)) << "\n";
    }
    if (!a.mass_csv.empty()) {
        auto mass_out = open_out(a.mass_csv);
        mass_out << "step,tau,mass\n";
        const auto& mh = pred.race.mass_history;
        for (size_t i = 0; i < mh.size(); ++i) {
            double tau = std::min(static_cast<double>(i + 1) * opts.dt, pred.race.field.time);
            mass_out << i + 1 << ',' << format_double(tau) << ',' << format_double(mh[i]) << '\n';
        }
        std::cerr << "[fp] wrote " << a.mass_csv << "\n";
    }
    std::string text = j.dump(2);
    text += "\n";
    if (a.out_path.empty()) {
        std::cout << text;
    } else {
        auto out = open_out(a.out_path);
        out << text;
        std::cerr << "[fp] wrote " << a.out_path << "\n";
    }
}

void add_pipeline_options(CLI::App* cmd, PipelineConfig& pipe, std::string& grid_text,
                          bool full_set) {
    cmd->add_option("--dv", pipe.dv, "variable node degree");
    cmd->add_option("--dc", pipe.dc, "check node degree");
    cmd->add_option("-L,--chain-length", pipe.L, "coupled chain length");
    cmd->add_option("--n-est", pipe.n_est, "block length used by the estimators");
    cmd->add_option("--eps-grid", grid_text, "knots as start:end:step or a comma list");
    cmd->add_option("--tol", pipe.threshold_tol, "threshold bisection tolerance");
    cmd->add_option("--seed", pipe.seed, "pipeline seed");
    if (!full_set) return;
    cmd->add_option("--workers", pipe.workers, "worker threads (results are identical)");
    cmd->add_option("--peel-trials", pipe.peel_trials, "peeling trials per knot");
    cmd->add_option("--r1-cov-trials", pipe.r1_cov_trials, "peeling covariance trials");
    cmd->add_option("--r1-cov-eps", pipe.r1_cov_epsilon, "peeling covariance channel");
    cmd->add_option("--bp-cov-trials", pipe.bp_cov_trials, "BP covariance trials, large N");
    cmd->add_option("--bp-cov-eps", pipe.bp_cov_epsilon, "BP covariance channel, large N");
    cmd->add_option("--bp-cov-n", pipe.bp_cov_n, "large block length for the BP covariance");
    cmd->add_option("--bp-small-trials", pipe.bp_small_trials, "BP covariance trials, small N");
    cmd->add_option("--bp-small-eps", pipe.bp_small_epsilon, "BP covariance channel, small N");
    cmd->add_option("--bp-small-n", pipe.bp_small_n, "small block length for the BP covariance");
    cmd->add_option("--trace-chain", pipe.bp_trace_chain_length,
                    "chain length for the covariance traces");
    cmd->add_option("--ell-ref", pipe.ell_ref, "iteration span the excess variance refers to");
    cmd->add_option("--cf-samples", pipe.cf_samples, "clock paths per drift estimate");
    cmd->add_option("--cf-n", pipe.cf_n, "block length the drift column is calibrated for");
    cmd->add_option("--sigma2-paths", pipe.sigma2_model_paths,
                    "model paths for the excess-variance baseline");
    cmd->add_option("--i-eff-total", pipe.i_eff_ref_total,
                    "drift horizon before subtracting ramp iterations");
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"finite-length FER toolkit for spatially coupled LDPC codes on the BEC"};
    app.require_subcommand(1);

    DeArgs de_a;
    EstimateArgs est_a;
    PredictArgs pred_a;
    SimulateArgs sim_a;
    FpArgs fp_a;

    auto* de = app.add_subcommand("de", "density evolution threshold and phase table");
    de->set_config("--config", "", "key=value config file");
    add_pipeline_options(de, de_a.pipe, de_a.grid_text, false);
    de->add_option("-o,--params", de_a.params_path, "parameter table to create or refresh");
    de->callback([&] { cmd_de(de_a); });

    auto* est = app.add_subcommand("estimate", "Monte-Carlo scaling parameter pipeline");
    est->set_config("--config", "", "key=value config file");
    add_pipeline_options(est, est_a.pipe, est_a.grid_text, true);
    est->add_option("-o,--params", est_a.params_path, "parameter table to create or refresh");
    est->add_option("--only", est_a.only,
                    "pipeline sections to (re)run, comma separated; cached sections are kept")
        ->delimiter(',');
    est->callback([&] { cmd_estimate(est_a); });

    auto* pred = app.add_subcommand("predict", "FER curves from the scaling laws");
    pred->set_config("--config", "", "key=value config file");
    pred->add_option("-p,--params", pred_a.params_path, "parameter table");
    pred->add_option("--eps-grid", pred_a.grid_text,
                     "channel values, default: the table knots");
    pred->add_option("--models", pred_a.models,
                     "comma list of unlimited, const_prop, iterative_ou, gaussian, "
                     "shifted_gaussian, sw_unlimited, sw_limited, or all")
        ->delimiter(',');
    pred->add_option("-N,--n", pred_a.N, "block length");
    pred->add_option("-I,--iters", pred_a.I, "iteration budget for limited models");
    pred->add_option("--npd-samples", pred_a.npd_samples, "clock paths for iterative_ou");
    pred->add_option("--seed", pred_a.seed, "seed for iterative_ou");
    pred->add_option("--workers", pred_a.workers, "worker threads (results are identical)");
    pred->add_option("--window-w", pred_a.W, "window size for sw models");
    pred->add_option("--window-iin", pred_a.I_in, "first-position iterations for sw models");
    pred->add_option("--window-is", pred_a.I_s, "iterations per window shift for sw models");
    pred->add_option("-o,--out", pred_a.out_path, "output CSV");
    pred->callback([&] { cmd_predict(pred_a); });

    auto* sim = app.add_subcommand("simulate", "Monte-Carlo FER sweep");
    sim->set_config("--config", "", "key=value config file");
    sim->add_option("--dv", sim_a.dv, "variable node degree");
    sim->add_option("--dc", sim_a.dc, "check node degree");
    sim->add_option("-L,--chain-length", sim_a.L, "coupled chain length");
    sim->add_option("-N,--n", sim_a.N, "block length");
    sim->add_option("--term", sim_a.term, "terminated, truncated, or unterminated")
        ->check(CLI::IsMember({"terminated", "truncated", "unterminated"}));
    sim->add_option("--margin", sim_a.margin, "extra positions for the unterminated proxy");
    sim->add_option("--eps-grid", sim_a.grid_text,
                    "channel values as start:end:step or a comma list")
        ->required();
    sim->add_option("--decoder", sim_a.decoder, "unlimited, bp, or sw")
        ->check(CLI::IsMember({"unlimited", "bp", "full_bp", "sw", "sliding_window"}));
    sim->add_option("-I,--iters", sim_a.I, "iteration budget for the bp decoder");
    sim->add_option("--window-w", sim_a.W, "window size for the sw decoder");
    sim->add_option("--window-iin", sim_a.I_in, "first-position iterations for the sw decoder");
    sim->add_option("--window-is", sim_a.I_s, "iterations per window shift for the sw decoder");
    sim->add_option("--frames", sim_a.frames, "frames per channel value");
    sim->add_option("--max-frame-errors", sim_a.max_frame_errors,
                    "stop a point early after this many frame errors (0 = never)");
    sim->add_flag("--fixed-graph", sim_a.fixed_graph, "reuse one code sample for the whole sweep");
    sim->add_option("--seed", sim_a.seed, "sweep seed");
    sim->add_option("--workers", sim_a.workers, "worker threads (results are identical)");
    sim->add_option("-o,--out", sim_a.out_path, "output CSV");
    sim->callback([&] { cmd_simulate(sim_a); });

    auto* fp = app.add_subcommand("fp", "window race first-passage solver");
    fp->set_config("--config", "", "key=value config file");
    fp->add_option("-p,--params", fp_a.params_path, "parameter table");
    fp->add_option("--eps", fp_a.eps, "channel erasure probability")->required();
    fp->add_option("-N,--n", fp_a.N, "block length");
    fp->add_option("-L,--chain-length", fp_a.L, "chain length, default: the table's");
    fp->add_option("--window-w", fp_a.W, "window size");
    fp->add_option("--window-iin", fp_a.I_in, "first-position iterations");
    fp->add_option("--window-is", fp_a.I_s, "iterations per window shift");
    fp->add_option("--n-eta", fp_a.opts.n_eta, "cells across the speed axis");
    fp->add_option("--n-pl-per-w", fp_a.opts.n_pl_per_w, "cells per unit of barrier separation");
    fp->add_option("--dt", fp_a.opts.dt, "implicit time step");
    fp->add_option("--solver-tol", fp_a.opts.tol, "linear solver tolerance");
    fp->add_option("--em-paths", fp_a.em_paths, "also run this many Euler-Maruyama paths");
    fp->add_option("--em-dt", fp_a.em_dt, "Euler-Maruyama time step");
    fp->add_option("--seed", fp_a.seed, "seed for the Euler-Maruyama oracle");
    fp->add_option("--workers", fp_a.workers, "worker threads (results are identical)");
    fp->add_option("--mass-csv", fp_a.mass_csv, "write the surviving mass per step here");
    fp->add_option("-o,--out", fp_a.out_path, "output JSON, default: stdout");
    fp->callback([&] { cmd_fp(fp_a); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const estimation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const spec_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace scl
