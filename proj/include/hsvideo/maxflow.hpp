#ifndef HSVIDEO_MAXFLOW_HPP
#define HSVIDEO_MAXFLOW_HPP

#include <cstdint>
#include <deque>
#include <vector>

namespace hsvideo {

/// Boykov-Kolmogorov augmenting-path max-flow over a graph with two
/// implicit terminals. Capacities are doubles; arcs are added in pairs.
class MaxFlowGraph {
public:
    explicit MaxFlowGraph(int nodes, int edge_hint = 0);

    int node_count() const { return static_cast<int>(nodes_.size()); }

    /// Adds terminal capacities source->i and i->sink. Only their difference
    /// matters for the cut; the common part goes straight into the flow.
    void add_tweights(int i, double to_source, double to_sink);

    /// Arc i->j with capacity `cap` and j->i with `rev_cap`.
    void add_edge(int i, int j, double cap, double rev_cap);

    double maxflow();

    /// After maxflow(): true when i ends on the sink side of the minimum cut.
    /// Nodes left in neither search tree are reported on the source side.
    bool in_sink_segment(int i) const;

private:
    static constexpr int kNone = -1;
    static constexpr int kTerminal = -2;
    static constexpr int kOrphan = -3;
    static constexpr int kInfiniteDist = 1 << 30;

    struct Node {
        int first = -1;     // first outgoing arc
        int parent = kNone;
        double tr_cap = 0;  // >0: residual from source, <0: residual to sink
        int ts = 0;
        int dist = 0;
        bool is_sink = false;
        bool queued = false;
    };
    struct Arc {
        int head;
        int next;
        double r_cap;
    };

    static int sister(int a) { return a ^ 1; }

    void set_active(int i);
    int next_active();
    void augment(int middle);
    void process_source_orphan(int i);
    void process_sink_orphan(int i);

    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::deque<int> active_;
    std::deque<int> orphans_;
    double flow_ = 0;
    int time_ = 0;
};

}  // namespace hsvideo

#endif  // HSVIDEO_MAXFLOW_HPP
