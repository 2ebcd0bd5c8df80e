#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "scalelab/ensemble.hpp"

using namespace scl;

namespace {

TannerGraph make(int dv, int dc, int L, int N, Termination term, uint64_t seed = 7,
                 int margin = 20) {
    EnsembleSpec spec;
    spec.dv = dv;
    spec.dc = dc;
    spec.L = L;
    spec.N = N;
    spec.term = term;
    spec.margin = margin;
    Rng rng(seed, streams::graph << 56);
    return sample_graph(spec, rng);
}

// VN positions covering check position u, given Lb built VN positions
int coverage(const TannerGraph& g, int u) {
    int c = 0;
    for (int j = 0; j < g.dv; ++j) {
        int i = u - j;
        if (i < 0 || i >= g.vn_positions) continue;
        if (g.term != Termination::terminated && j >= std::min(g.dv, g.vn_positions - i)) continue;
        ++c;
    }
    return c;
}

}  // namespace

TEST_CASE("spec validation rejects malformed ensembles") {
    EnsembleSpec s;
    s.dv = 3;
    s.dc = 6;
    s.L = 10;
    s.N = 60;
    CHECK_NOTHROW(s.validate());
    auto bad = s;
    bad.dv = 1;
    CHECK_THROWS_AS(bad.validate(), spec_error);
    bad = s;
    bad.dc = 3;
    CHECK_THROWS_AS(bad.validate(), spec_error);
    bad = s;
    bad.N = 61;  // N*dv not divisible by dc
    CHECK_THROWS_AS(bad.validate(), spec_error);
    bad = s;
    bad.L = 0;
    CHECK_THROWS_AS(bad.validate(), spec_error);
    bad = s;
    bad.term = Termination::unterminated_eval;
    bad.margin = -1;
    CHECK_THROWS_AS(bad.validate(), spec_error);
}

TEST_CASE("terminated chain shape and degrees") {
    const int dv = 3, dc = 6, L = 8, N = 24;
    TannerGraph g = make(dv, dc, L, N, Termination::terminated);
    CHECK(g.vn_positions == L);
    CHECK(g.cn_positions == L + dv - 1);
    CHECK(g.eval_positions == L);
    CHECK(g.vn_count == L * N);
    CHECK(g.M == N * dv / dc);
    CHECK(g.cn_count == g.cn_positions * g.M);
    CHECK(g.edge_count == static_cast<long>(L) * N * dv);

    for (int v = 0; v < g.vn_count; ++v) CHECK(g.vn_degree(v) == dv);

    // a check splits its position's pooled edges evenly up to rounding
    for (int c = 0; c < g.cn_count; ++c) {
        int u = g.cn_pos(c);
        long arriving = static_cast<long>(coverage(g, u)) * N;
        long lo = arriving / g.M, hi = (arriving + g.M - 1) / g.M;
        CHECK(g.cn_degree(c) >= lo);
        CHECK(g.cn_degree(c) <= hi);
    }
    // positions covered by all dv variable positions carry the full degree
    for (int c = (dv - 1) * g.M; c < L * g.M; ++c) CHECK(g.cn_degree(c) == dc);

    GraphAudit a = audit_graph(g);
    CHECK(a.ok);
    CHECK(a.degrees_ok);
    CHECK(a.locality_ok);
    CHECK(a.offsets_ok);
    CHECK(a.counts_ok);
}

TEST_CASE("truncated chain drops overhanging edges") {
    const int dv = 5, dc = 10, L = 12, N = 20;
    TannerGraph g = make(dv, dc, L, N, Termination::truncated);
    CHECK(g.vn_positions == L);
    CHECK(g.cn_positions == L);
    CHECK(g.eval_positions == L);
    for (int v = 0; v < g.vn_count; ++v) {
        int want = std::min(dv, L - g.vn_pos(v));
        CHECK(g.vn_degree(v) == want);
    }
    CHECK(audit_graph(g).ok);
}

TEST_CASE("unterminated evaluation prefix keeps a margin of extra positions") {
    const int dv = 3, dc = 6, L = 6, N = 12, margin = 5;
    TannerGraph g = make(dv, dc, L, N, Termination::unterminated_eval, 9, margin);
    CHECK(g.vn_positions == L + margin);
    CHECK(g.eval_positions == L);
    CHECK(g.cn_positions == L + margin);
    CHECK(audit_graph(g).ok);
}

TEST_CASE("edges are local and VN offsets are distinct") {
    TannerGraph g = make(5, 10, 10, 30, Termination::terminated, 3);
    for (int v = 0; v < g.vn_count; ++v) {
        std::set<int> seen;
        for (int e = g.vn_off[v]; e < g.vn_off[v + 1]; ++e) {
            CHECK(g.edge_vn[e] == v);
            int off = g.cn_pos(g.edge_cn[e]) - g.vn_pos(v);
            CHECK(off >= 0);
            CHECK(off < g.dv);
            seen.insert(off);
        }
        CHECK(static_cast<int>(seen.size()) == g.vn_degree(v));
    }
}

TEST_CASE("edge bookkeeping conserves both sides") {
    TannerGraph g = make(3, 6, 7, 18, Termination::terminated, 11);
    long vn_sum = 0, cn_sum = 0;
    for (int v = 0; v < g.vn_count; ++v) vn_sum += g.vn_degree(v);
    for (int c = 0; c < g.cn_count; ++c) cn_sum += g.cn_degree(c);
    CHECK(vn_sum == g.edge_count);
    CHECK(cn_sum == g.edge_count);

    // cn_edges is a permutation of all edge ids, consistent with edge_cn
    std::vector<int> count(g.edge_count, 0);
    for (int c = 0; c < g.cn_count; ++c)
        for (int k = g.cn_off[c]; k < g.cn_off[c + 1]; ++k) {
            int e = g.cn_edges[k];
            CHECK(g.edge_cn[e] == c);
            ++count[e];
        }
    CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 1; }));
}

TEST_CASE("checks draw mixed position compositions from the pool") {
    // with per-position classes every interior (3,6) check would see exactly
    // two edges from each covering position; the pooled deal must not
    const int dv = 3, dc = 6, L = 12, N = 120;
    TannerGraph g = make(dv, dc, L, N, Termination::terminated, 2024);
    int uneven = 0, total = 0;
    for (int c = 0; c < g.cn_count; ++c) {
        int u = g.cn_pos(c);
        if (u < dv - 1 || u > L - 1) continue;  // interior positions only
        std::map<int, int> comp;
        for (int k = g.cn_off[c]; k < g.cn_off[c + 1]; ++k)
            ++comp[g.vn_pos(g.edge_vn[g.cn_edges[k]])];
        ++total;
        bool balanced = comp.size() == static_cast<size_t>(dv);
        for (auto& [pos, cnt] : comp)
            if (cnt != dc / dv) balanced = false;
        if (!balanced) ++uneven;
    }
    CHECK(total > 0);
    // the balanced composition has probability well under 1 per check
    CHECK(uneven > total / 4);
}

TEST_CASE("sampling is reproducible per substream") {
    EnsembleSpec spec;
    spec.dv = 3;
    spec.dc = 6;
    spec.L = 6;
    spec.N = 24;
    Rng a(42, streams::graph << 56);
    Rng b(42, streams::graph << 56);
    TannerGraph ga = sample_graph(spec, a);
    TannerGraph gb = sample_graph(spec, b);
    CHECK(ga.edge_cn == gb.edge_cn);
    CHECK(ga.cn_edges == gb.cn_edges);
    Rng c(43, streams::graph << 56);
    TannerGraph gc = sample_graph(spec, c);
    CHECK(ga.edge_cn != gc.edge_cn);
}

TEST_CASE("audit flags a corrupted graph") {
    TannerGraph g = make(3, 6, 6, 12, Termination::terminated, 5);
    g.edge_cn[0] = g.cn_count - 1;  // breaks locality for an edge at position 0
    GraphAudit a = audit_graph(g);
    CHECK_FALSE(a.ok);
}

TEST_CASE("channel draws are reproducible and have the right rate") {
    Rng r1(9, streams::channel << 56);
    Rng r2(9, streams::channel << 56);
    auto e1 = transmit_bec(50000, 0.3, r1);
    auto e2 = transmit_bec(50000, 0.3, r2);
    CHECK(e1 == e2);
    double mean = std::accumulate(e1.begin(), e1.end(), 0.0) / e1.size();
    CHECK(mean == doctest::Approx(0.3).epsilon(0.05));
    Rng r3(9, streams::channel << 56);
    auto none = transmit_bec(1000, 0.0, r3);
    CHECK(std::count(none.begin(), none.end(), 1) == 0);
}

TEST_CASE("edge list export matches the graph") {
    TannerGraph g = make(3, 6, 4, 12, Termination::terminated, 8);
    std::ostringstream os;
    export_edge_list(g, os);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "edge,vn,cn,vn_pos,cn_pos");
    long rows = 0;
    std::string line;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == g.edge_count);
}
