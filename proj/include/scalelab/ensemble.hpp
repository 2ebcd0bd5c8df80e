#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

namespace scl {

enum class Termination {
    terminated,         // dv-1 extra check-only positions appended
    truncated,          // overhanging edges dropped, weak right edge
    unterminated_eval,  // truncated proxy chain, errors counted on the first eval_len positions
};

const char* to_string(Termination t);

struct EnsembleSpec {
    int dv = 0;
    int dc = 0;
    int L = 0;  // coupled chain length (for unterminated_eval: the evaluated prefix L')
    int N = 0;  // variable nodes per position
    Termination term = Termination::terminated;
    int margin = 20;  // extra positions appended beyond L for unterminated_eval

    void validate() const;
    int M() const { return static_cast<int>((static_cast<long>(N) * dv) / dc); }
};

// protograph-style bipartite graph, nodes grouped by position
struct TannerGraph {
    int dv = 0, dc = 0, N = 0, M = 0;
    Termination term = Termination::terminated;
    int vn_positions = 0;  // built chain length
    int cn_positions = 0;
    int eval_positions = 0;  // frame errors counted on positions < eval_positions
    int vn_count = 0, cn_count = 0;
    long edge_count = 0;

    std::vector<int32_t> vn_off;    // size vn_count+1, edges of a VN are contiguous
    std::vector<int32_t> cn_off;    // size cn_count+1
    std::vector<int32_t> cn_edges;  // edge ids grouped by CN
    std::vector<int32_t> edge_vn;   // per edge
    std::vector<int32_t> edge_cn;   // per edge

    int vn_pos(int v) const { return v / N; }
    int cn_pos(int c) const { return c / M; }
    int vn_degree(int v) const { return vn_off[v + 1] - vn_off[v]; }
    int cn_degree(int c) const { return cn_off[c + 1] - cn_off[c]; }
};

// Draws one member of the semi-structured ensemble: every VN at position i
// owns one edge per check position i..i+deg-1, and each check position deals
// all of its incoming edges, pooled across the covering VN positions, onto
// its M checks through a single uniform shuffle. A check therefore meets an
// arbitrary mix of covering positions, only its total degree is fixed. The
// Rng is consumed sequentially, so one (seed, frame) substream reproduces the
// same graph at any worker count.
void sample_graph_into(const EnsembleSpec& spec, Rng& rng, TannerGraph& g);
TannerGraph sample_graph(const EnsembleSpec& spec, Rng& rng);

struct GraphAudit {
    bool ok = false;
    int min_vn_degree = 0, max_vn_degree = 0;
    int min_cn_degree = 0, max_cn_degree = 0;
    double mean_cn_degree = 0.0;
    bool degrees_ok = false;    // VN degrees match the termination rule
    bool locality_ok = false;   // every edge spans cn_pos - vn_pos in [0, dv)
    bool offsets_ok = false;    // each VN touches distinct check positions
    bool counts_ok = false;     // CSR bookkeeping consistent
    std::string detail;
};
GraphAudit audit_graph(const TannerGraph& g);

// csv: edge,vn,cn,vn_pos,cn_pos
void export_edge_list(const TannerGraph& g, std::ostream& out);

// one bit per VN, 1 = erased
void transmit_bec_into(int vn_count, double eps, Rng& rng, std::vector<uint8_t>& erased);
std::vector<uint8_t> transmit_bec(int vn_count, double eps, Rng& rng);

}  // namespace scl
