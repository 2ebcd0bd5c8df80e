#include "scalelab/decoders.hpp"

#include <algorithm>

namespace scl {

DecodingTrace peel(const TannerGraph& g, const std::vector<uint8_t>& erased, Rng& rng,
                   const DecodeOptions& opts, PeelWorkspace* ws) {
    if (static_cast<int>(erased.size()) != g.vn_count)
        throw spec_error("peel: erasure pattern size mismatch");
    PeelWorkspace local;
    PeelWorkspace& w = ws ? *ws : local;
    const int L = g.vn_positions;
    const double invN = 1.0 / g.N;

    w.erased.assign(erased.begin(), erased.end());
    w.deg.assign(g.cn_count, 0);
    w.residual.assign(L, 0);
    w.r1_pos.assign(g.cn_count, -1);
    w.r1_set.clear();

    DecodingTrace t;
    int remaining = 0;
    for (int v = 0; v < g.vn_count; ++v) {
        if (!erased[v]) continue;
        ++remaining;
        ++w.residual[g.vn_pos(v)];
        for (int k = g.vn_off[v]; k < g.vn_off[v + 1]; ++k) ++w.deg[g.edge_cn[k]];
    }
    t.erased_initial = remaining;
    for (int c = 0; c < g.cn_count; ++c) {
        if (w.deg[c] == 1) {
            w.r1_pos[c] = static_cast<int32_t>(w.r1_set.size());
            w.r1_set.push_back(c);
        }
    }

    auto record = [&](long step) {
        if (opts.record_r1) t.r1.push_back(static_cast<float>(w.r1_set.size() * invN));
        if (opts.record_vmid && opts.vmid_position >= 0 && opts.vmid_position < L)
            t.vmid.push_back(w.residual[opts.vmid_position]);
        if (opts.vu_stride > 0 && step % opts.vu_stride == 0)
            t.vu_snapshots.emplace_back(w.residual.begin(), w.residual.end());
    };
    auto drop_r1 = [&](int c) {
        int32_t p = w.r1_pos[c];
        int back = w.r1_set.back();
        w.r1_set[p] = back;
        w.r1_pos[back] = p;
        w.r1_set.pop_back();
        w.r1_pos[c] = -1;
    };

    long step = 0;
    record(step);
    while (!w.r1_set.empty()) {
        int c = w.r1_set[rng.below(static_cast<uint32_t>(w.r1_set.size()))];
        int victim = -1;
        for (int k = g.cn_off[c]; k < g.cn_off[c + 1]; ++k) {
            int v = g.edge_vn[g.cn_edges[k]];
            if (w.erased[v]) {
                victim = v;
                break;
            }
        }
        w.erased[victim] = 0;
        --remaining;
        --w.residual[g.vn_pos(victim)];
        for (int k = g.vn_off[victim]; k < g.vn_off[victim + 1]; ++k) {
            int c2 = g.edge_cn[k];
            int d = --w.deg[c2];
            if (d == 1) {
                w.r1_pos[c2] = static_cast<int32_t>(w.r1_set.size());
                w.r1_set.push_back(c2);
            } else if (d == 0 && w.r1_pos[c2] >= 0) {
                drop_r1(c2);
            }
        }
        ++step;
        record(step);
    }

    t.success = remaining == 0;
    t.stop_iteration = step;
    t.erased_remaining = remaining;
    t.residual_per_position.assign(w.residual.begin(), w.residual.end());
    return t;
}

namespace {

// Incremental flooding BP. Erasure messages only flip unknown -> known, so
// each iteration touches just the checks whose unknown-input count reached
// 0 or 1 during the previous half-iteration; the recovered sets per
// iteration are exactly those of the textbook simultaneous schedule.
DecodingTrace bp_run(const TannerGraph& g, const std::vector<uint8_t>& erased, long max_iters,
                     const SlidingWindowConfig* wcfg, const DecodeOptions& opts, BpWorkspace* ws) {
    if (static_cast<int>(erased.size()) != g.vn_count)
        throw spec_error("bp: erasure pattern size mismatch");
    BpWorkspace local;
    BpWorkspace& w = ws ? *ws : local;
    const int L = g.vn_positions;
    const int CP = g.cn_positions;
    const int M = g.M;
    const long E = g.edge_count;
    const float invN = 1.0f / static_cast<float>(g.N);

    long budget = max_iters;
    int w_l = 0, w_r = CP;
    if (wcfg) {
        if (g.term != Termination::terminated)
            throw spec_error("sliding window: graph must use the terminated construction");
        if (wcfg->W < 1 || wcfg->W > CP)
            throw spec_error("sliding window: W must lie in [1, cn_positions]");
        if (wcfg->I_in < 1 || (L > 1 && wcfg->I_s < 1))
            throw spec_error("sliding window: iteration budgets must be positive");
        w_r = std::min(wcfg->W, CP);
        budget = wcfg->total_budget(L);
    }

    w.vn_known.assign(g.vn_count, 0);
    w.vn_msg.assign(E, 0);
    w.cn_msg.assign(E, 0);
    w.cn_unk.assign(g.cn_count, 0);
    w.vn_known_in.assign(g.vn_count, 0);
    w.first_known_edge.assign(g.vn_count, -1);
    w.residual.assign(L, 0);
    w.cn_queued.assign(g.cn_count, 0);
    w.cn_queue.clear();
    w.cn_queue_next.clear();
    w.new_msgs.clear();

    DecodingTrace t;
    int remaining = 0;
    for (int c = 0; c < g.cn_count; ++c) w.cn_unk[c] = g.cn_degree(c);
    for (int v = 0; v < g.vn_count; ++v) {
        if (erased[v]) {
            ++remaining;
            ++w.residual[g.vn_pos(v)];
        } else {
            w.vn_known[v] = 1;
            for (int k = g.vn_off[v]; k < g.vn_off[v + 1]; ++k) {
                w.vn_msg[k] = 1;
                --w.cn_unk[g.edge_cn[k]];
            }
        }
    }
    t.erased_initial = remaining;

    auto enqueue = [&](int c) {
        if (!w.cn_queued[c]) {
            w.cn_queued[c] = 1;
            w.cn_queue_next.push_back(c);
        }
    };
    for (int c = 0; c < g.cn_count; ++c)
        if (w.cn_unk[c] <= 1) enqueue(c);

    int p_left = 0;
    while (p_left < L && w.residual[p_left] == 0) ++p_left;

    long iter = 0;
    while (remaining > 0 && (budget < 0 || iter < budget)) {
        if (wcfg) {
            int due_wl = iter < wcfg->I_in
                             ? 0
                             : static_cast<int>(std::min<long>(
                                   L - 1, 1 + (iter - wcfg->I_in) / wcfg->I_s));
            if (due_wl != w_l) {
                int new_r = std::min(due_wl + wcfg->W, CP);
                for (int c = w_r * M; c < new_r * M; ++c)
                    if (w.cn_unk[c] <= 1) enqueue(c);
                w_l = due_wl;
                w_r = new_r;
                if (p_left < w_l) t.overtaken = true;
            }
        }

        if (w.cn_queue_next.empty()) {
            // nothing can change until the window slides again
            if (!wcfg || w_l == L - 1) break;
            long next_slide = w_l == 0 ? wcfg->I_in
                                       : static_cast<long>(wcfg->I_in) +
                                             static_cast<long>(w_l) * wcfg->I_s;
            if (next_slide > iter && !opts.record_vbp && !opts.record_pleft) {
                iter = std::min(next_slide, budget);
                continue;
            }
        }

        std::swap(w.cn_queue, w.cn_queue_next);
        w.new_msgs.clear();
        for (int c : w.cn_queue) {
            w.cn_queued[c] = 0;
            int pos = c / M;
            if (pos < w_l || pos >= w_r) continue;
            int unk = w.cn_unk[c];
            if (unk > 1) continue;
            if (unk == 0) {
                for (int k = g.cn_off[c]; k < g.cn_off[c + 1]; ++k) {
                    int e = g.cn_edges[k];
                    if (!w.cn_msg[e]) {
                        w.cn_msg[e] = 1;
                        w.new_msgs.push_back(e);
                    }
                }
            } else {
                for (int k = g.cn_off[c]; k < g.cn_off[c + 1]; ++k) {
                    int e = g.cn_edges[k];
                    if (!w.vn_msg[e]) {
                        if (!w.cn_msg[e]) {
                            w.cn_msg[e] = 1;
                            w.new_msgs.push_back(e);
                        }
                        break;
                    }
                }
            }
        }
        w.cn_queue.clear();

        int recovered = 0;
        for (int e : w.new_msgs) {
            int v = g.edge_vn[e];
            if (!erased[v]) continue;
            int pos = g.vn_pos(v);
            if (pos < w_l) continue;  // frozen by a past slide
            int known = ++w.vn_known_in[v];
            if (known == 1) {
                w.first_known_edge[v] = e;
                if (!w.vn_known[v]) {
                    w.vn_known[v] = 1;
                    ++recovered;
                    --w.residual[pos];
                    --remaining;
                }
                for (int k = g.vn_off[v]; k < g.vn_off[v + 1]; ++k) {
                    if (k == e || w.vn_msg[k]) continue;
                    w.vn_msg[k] = 1;
                    int c = g.edge_cn[k];
                    if (--w.cn_unk[c] <= 1) enqueue(c);
                }
            } else if (known == 2) {
                int f = w.first_known_edge[v];
                if (!w.vn_msg[f]) {
                    w.vn_msg[f] = 1;
                    int c = g.edge_cn[f];
                    if (--w.cn_unk[c] <= 1) enqueue(c);
                }
            }
        }
        ++iter;

        while (p_left < L && w.residual[p_left] == 0) ++p_left;
        if (wcfg && p_left < w_l) t.overtaken = true;
        if (opts.record_vbp) t.v_bp.push_back(static_cast<float>(recovered) * invN);
        if (opts.record_pleft) t.p_left.push_back(p_left);

        if (w.new_msgs.empty() && w.cn_queue_next.empty() && (!wcfg || w_l == L - 1)) break;
    }

    t.success = remaining == 0;
    t.stop_iteration = iter;
    t.erased_remaining = remaining;
    t.residual_per_position.assign(w.residual.begin(), w.residual.end());
    return t;
}

}  // namespace

DecodingTrace bp_full(const TannerGraph& g, const std::vector<uint8_t>& erased, long max_iters,
                      const DecodeOptions& opts, BpWorkspace* ws) {
    return bp_run(g, erased, max_iters, nullptr, opts, ws);
}

DecodingTrace bp_sliding_window(const TannerGraph& g, const std::vector<uint8_t>& erased,
                                const SlidingWindowConfig& cfg, const DecodeOptions& opts,
                                BpWorkspace* ws) {
    return bp_run(g, erased, -1, &cfg, opts, ws);
}

bool frame_error(const DecodingTrace& trace, const TannerGraph& g) {
    int limit = std::min<int>(g.eval_positions, static_cast<int>(trace.residual_per_position.size()));
    for (int p = 0; p < limit; ++p)
        if (trace.residual_per_position[p] > 0) return true;
    return false;
}

void write_peel_trace_csv(const DecodingTrace& trace, int N, std::ostream& out) {
    out << "step,tau,r1\n";
    for (size_t k = 0; k < trace.r1.size(); ++k)
        out << k << ',' << format_double(static_cast<double>(k) / N) << ','
            << format_double(trace.r1[k]) << '\n';
}

void write_bp_trace_csv(const DecodingTrace& trace, std::ostream& out) {
    out << "iteration,v_bp,p_left\n";
    size_t n = std::max(trace.v_bp.size(), trace.p_left.size());
    for (size_t k = 0; k < n; ++k) {
        out << (k + 1) << ',';
        out << (k < trace.v_bp.size() ? format_double(trace.v_bp[k]) : std::string()) << ',';
        out << (k < trace.p_left.size() ? std::to_string(trace.p_left[k]) : std::string()) << '\n';
    }
}

}  // namespace scl
