#include "scalelab/ensemble.hpp"

#include <algorithm>
#include <numeric>

namespace scl {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::terminated: return "terminated";
        case Termination::truncated: return "truncated";
        case Termination::unterminated_eval: return "unterminated_eval";
    }
    return "?";
}

void EnsembleSpec::validate() const {
    if (dv < 2) throw spec_error("ensemble: dv must be >= 2");
    if (dc <= dv) throw spec_error("ensemble: dc must exceed dv");
    if (L < 1) throw spec_error("ensemble: L must be positive");
    if (N < 1) throw spec_error("ensemble: N must be positive");
    if ((static_cast<long>(N) * dv) % dc != 0)
        throw spec_error("ensemble: N*dv/dc must be an integer number of checks per position");
    if (M() < 1) throw spec_error("ensemble: N*dv/dc must be >= 1");
    if (term == Termination::unterminated_eval && margin < 0)
        throw spec_error("ensemble: margin must be >= 0");
}

namespace {
int built_length(const EnsembleSpec& s) {
    return s.term == Termination::unterminated_eval ? s.L + s.margin : s.L;
}
}  // namespace

void sample_graph_into(const EnsembleSpec& spec, Rng& rng, TannerGraph& g) {
    spec.validate();
    const int Lb = built_length(spec);
    const int dv = spec.dv, N = spec.N, M = spec.M();
    const bool full_degree = spec.term == Termination::terminated;

    g.dv = dv;
    g.dc = spec.dc;
    g.N = N;
    g.M = M;
    g.term = spec.term;
    g.vn_positions = Lb;
    g.cn_positions = full_degree ? Lb + dv - 1 : Lb;
    g.eval_positions = spec.term == Termination::unterminated_eval ? spec.L : Lb;
    g.vn_count = Lb * N;
    g.cn_count = g.cn_positions * M;

    long edges = 0;
    for (int i = 0; i < Lb; ++i) edges += full_degree ? dv : std::min(dv, Lb - i);
    edges *= N;
    g.edge_count = edges;

    g.vn_off.assign(g.vn_count + 1, 0);
    g.edge_vn.resize(edges);
    g.edge_cn.resize(edges);

    long e = 0;
    for (int i = 0; i < Lb; ++i) {
        int deg = full_degree ? dv : std::min(dv, Lb - i);
        for (int n = 0; n < N; ++n) {
            int v = i * N + n;
            g.vn_off[v] = static_cast<int32_t>(e);
            for (int j = 0; j < deg; ++j) g.edge_vn[e++] = v;
        }
    }
    g.vn_off[g.vn_count] = static_cast<int32_t>(e);

    // one permutation block per check position: every edge arriving there,
    // regardless of which variable position it comes from, is shuffled into a
    // common pool and dealt round-robin across the M checks, so a check can
    // draw any mix of variable positions within its coupling window
    std::vector<int32_t> pool;
    pool.reserve(static_cast<size_t>(dv) * N);
    for (int u = 0; u < g.cn_positions; ++u) {
        pool.clear();
        for (int j = dv - 1; j >= 0; --j) {
            int i = u - j;
            if (i < 0 || i >= Lb) continue;
            int deg = full_degree ? dv : std::min(dv, Lb - i);
            if (j >= deg) continue;
            for (int n = 0; n < N; ++n)
                pool.push_back(g.vn_off[static_cast<size_t>(i) * N + n] + j);
        }
        for (size_t k = pool.size() - 1; k > 0; --k)
            std::swap(pool[k], pool[rng.below(static_cast<uint32_t>(k + 1))]);
        for (size_t s = 0; s < pool.size(); ++s)
            g.edge_cn[pool[s]] = u * M + static_cast<int>(s % static_cast<size_t>(M));
    }

    // CSR from the CN side by counting sort over edge ids
    g.cn_off.assign(g.cn_count + 1, 0);
    for (long k = 0; k < edges; ++k) ++g.cn_off[g.edge_cn[k] + 1];
    for (int c = 0; c < g.cn_count; ++c) g.cn_off[c + 1] += g.cn_off[c];
    g.cn_edges.resize(edges);
    std::vector<int32_t> fill(g.cn_count, 0);
    for (long k = 0; k < edges; ++k) {
        int c = g.edge_cn[k];
        g.cn_edges[g.cn_off[c] + fill[c]++] = static_cast<int32_t>(k);
    }
}

TannerGraph sample_graph(const EnsembleSpec& spec, Rng& rng) {
    TannerGraph g;
    sample_graph_into(spec, rng, g);
    return g;
}

GraphAudit audit_graph(const TannerGraph& g) {
    GraphAudit a;
    a.degrees_ok = true;
    a.locality_ok = true;
    a.offsets_ok = true;
    a.min_vn_degree = g.dv;
    a.max_vn_degree = 0;
    const bool full_degree = g.term == Termination::terminated;
    std::vector<char> seen(g.dv, 0);
    for (int v = 0; v < g.vn_count; ++v) {
        int deg = g.vn_degree(v);
        a.min_vn_degree = std::min(a.min_vn_degree, deg);
        a.max_vn_degree = std::max(a.max_vn_degree, deg);
        int pos = g.vn_pos(v);
        int want = full_degree ? g.dv : std::min(g.dv, g.vn_positions - pos);
        if (deg != want) {
            a.degrees_ok = false;
            a.detail = "vn " + std::to_string(v) + " degree " + std::to_string(deg);
        }
        std::fill(seen.begin(), seen.end(), 0);
        for (int k = g.vn_off[v]; k < g.vn_off[v + 1]; ++k) {
            int off = g.cn_pos(g.edge_cn[k]) - pos;
            if (off < 0 || off >= g.dv) {
                a.locality_ok = false;
                a.detail = "edge " + std::to_string(k) + " offset " + std::to_string(off);
            } else if (seen[off]) {
                a.offsets_ok = false;
                a.detail = "vn " + std::to_string(v) + " duplicate offset " + std::to_string(off);
            } else {
                seen[off] = 1;
            }
        }
    }
    long sum = 0;
    a.min_cn_degree = g.dc * g.dv;
    for (int c = 0; c < g.cn_count; ++c) {
        int deg = g.cn_degree(c);
        sum += deg;
        a.min_cn_degree = std::min(a.min_cn_degree, deg);
        a.max_cn_degree = std::max(a.max_cn_degree, deg);
    }
    a.mean_cn_degree = g.cn_count ? static_cast<double>(sum) / g.cn_count : 0.0;
    a.counts_ok = sum == g.edge_count &&
                  g.vn_off[g.vn_count] == g.edge_count &&
                  static_cast<long>(g.cn_edges.size()) == g.edge_count;
    a.ok = a.degrees_ok && a.locality_ok && a.offsets_ok && a.counts_ok;
    return a;
}

void export_edge_list(const TannerGraph& g, std::ostream& out) {
    out << "edge,vn,cn,vn_pos,cn_pos\n";
    for (long e = 0; e < g.edge_count; ++e)
        out << e << ',' << g.edge_vn[e] << ',' << g.edge_cn[e] << ',' << g.vn_pos(g.edge_vn[e])
            << ',' << g.cn_pos(g.edge_cn[e]) << '\n';
}

void transmit_bec_into(int vn_count, double eps, Rng& rng, std::vector<uint8_t>& erased) {
    if (eps < 0.0 || eps > 1.0) throw spec_error("channel: erasure probability outside [0,1]");
    erased.assign(vn_count, 0);
    for (int v = 0; v < vn_count; ++v) erased[v] = rng.uniform() < eps ? 1 : 0;
}

std::vector<uint8_t> transmit_bec(int vn_count, double eps, Rng& rng) {
    std::vector<uint8_t> e;
    transmit_bec_into(vn_count, eps, rng, e);
    return e;
}

}  // namespace scl
