#include "hsvideo/maxflow.hpp"

#include "hsvideo/types.hpp"

#include <algorithm>

namespace hsvideo {

MaxFlowGraph::MaxFlowGraph(int nodes, int edge_hint)
    : nodes_(static_cast<std::size_t>(nodes))
{
    arcs_.reserve(static_cast<std::size_t>(edge_hint) * 2);
}

void MaxFlowGraph::add_tweights(int i, double to_source, double to_sink)
{
    double delta = nodes_[i].tr_cap;
    if (delta > 0)
        to_source += delta;
    else
        to_sink -= delta;
    flow_ += std::min(to_source, to_sink);
    nodes_[i].tr_cap = to_source - to_sink;
}

void MaxFlowGraph::add_edge(int i, int j, double cap, double rev_cap)
{
    if (i == j) throw Error("max-flow: self loop");
    const int a = static_cast<int>(arcs_.size());
    arcs_.push_back({j, nodes_[i].first, cap});
    arcs_.push_back({i, nodes_[j].first, rev_cap});
    nodes_[i].first = a;
    nodes_[j].first = a + 1;
}

bool MaxFlowGraph::in_sink_segment(int i) const
{
    return nodes_[i].parent != kNone && nodes_[i].is_sink;
}

void MaxFlowGraph::set_active(int i)
{
    if (nodes_[i].queued) return;
    nodes_[i].queued = true;
    active_.push_back(i);
}

int MaxFlowGraph::next_active()
{
    while (!active_.empty()) {
        const int i = active_.front();
        active_.pop_front();
        nodes_[i].queued = false;
        if (nodes_[i].parent != kNone) return i;
    }
    return kNone;
}

void MaxFlowGraph::augment(int middle)
{
    // `middle` runs from the source tree into the sink tree.
    double bottleneck = arcs_[middle].r_cap;
    int i = arcs_[sister(middle)].head;
    for (;;) {
        const int a = nodes_[i].parent;
        if (a == kTerminal) break;
        bottleneck = std::min(bottleneck, arcs_[sister(a)].r_cap);
        i = arcs_[a].head;
    }
    bottleneck = std::min(bottleneck, nodes_[i].tr_cap);
    i = arcs_[middle].head;
    for (;;) {
        const int a = nodes_[i].parent;
        if (a == kTerminal) break;
        bottleneck = std::min(bottleneck, arcs_[a].r_cap);
        i = arcs_[a].head;
    }
    bottleneck = std::min(bottleneck, -nodes_[i].tr_cap);

    arcs_[sister(middle)].r_cap += bottleneck;
    arcs_[middle].r_cap -= bottleneck;

    auto orphan = [this](int n) {
        nodes_[n].parent = kOrphan;
        orphans_.push_front(n);
    };
    i = arcs_[sister(middle)].head;
    for (;;) {
        const int a = nodes_[i].parent;
        if (a == kTerminal) break;
        arcs_[a].r_cap += bottleneck;
        arcs_[sister(a)].r_cap -= bottleneck;
        if (arcs_[sister(a)].r_cap <= 0) {
            arcs_[sister(a)].r_cap = 0;
            orphan(i);
        }
        i = arcs_[a].head;
    }
    nodes_[i].tr_cap -= bottleneck;
    if (nodes_[i].tr_cap <= 0) {
        nodes_[i].tr_cap = 0;
        orphan(i);
    }
    i = arcs_[middle].head;
    for (;;) {
        const int a = nodes_[i].parent;
        if (a == kTerminal) break;
        arcs_[sister(a)].r_cap += bottleneck;
        arcs_[a].r_cap -= bottleneck;
        if (arcs_[a].r_cap <= 0) {
            arcs_[a].r_cap = 0;
            orphan(i);
        }
        i = arcs_[a].head;
    }
    nodes_[i].tr_cap += bottleneck;
    if (nodes_[i].tr_cap >= 0) {
        nodes_[i].tr_cap = 0;
        orphan(i);
    }
    flow_ += bottleneck;
}

void MaxFlowGraph::process_source_orphan(int i)
{
    int best_arc = kNone;
    int best_dist = kInfiniteDist;
    for (int a0 = nodes_[i].first; a0 != -1; a0 = arcs_[a0].next) {
        if (arcs_[sister(a0)].r_cap <= 0) continue;
        int j = arcs_[a0].head;
        if (nodes_[j].is_sink || nodes_[j].parent == kNone) continue;
        // Trace j back to a terminal to confirm it still has a valid origin.
        int d = 0;
        for (;;) {
            if (nodes_[j].ts == time_) {
                d += nodes_[j].dist;
                break;
            }
            const int a = nodes_[j].parent;
            ++d;
            if (a == kTerminal) {
                nodes_[j].ts = time_;
                nodes_[j].dist = 1;
                break;
            }
            if (a == kOrphan) {
                d = kInfiniteDist;
                break;
            }
            j = arcs_[a].head;
        }
        if (d < kInfiniteDist) {
            if (d < best_dist) {
                best_arc = a0;
                best_dist = d;
            }
            for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
                nodes_[j].ts = time_;
                nodes_[j].dist = d--;
            }
        }
    }
    nodes_[i].parent = best_arc;
    if (best_arc != kNone) {
        nodes_[i].ts = time_;
        nodes_[i].dist = best_dist + 1;
        return;
    }
    for (int a0 = nodes_[i].first; a0 != -1; a0 = arcs_[a0].next) {
        const int j = arcs_[a0].head;
        const int a = nodes_[j].parent;
        if (nodes_[j].is_sink || a == kNone) continue;
        if (arcs_[sister(a0)].r_cap > 0) set_active(j);
        if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
            nodes_[j].parent = kOrphan;
            orphans_.push_back(j);
        }
    }
}

void MaxFlowGraph::process_sink_orphan(int i)
{
    int best_arc = kNone;
    int best_dist = kInfiniteDist;
    for (int a0 = nodes_[i].first; a0 != -1; a0 = arcs_[a0].next) {
        if (arcs_[a0].r_cap <= 0) continue;
        int j = arcs_[a0].head;
        if (!nodes_[j].is_sink || nodes_[j].parent == kNone) continue;
        int d = 0;
        for (;;) {
            if (nodes_[j].ts == time_) {
                d += nodes_[j].dist;
                break;
            }
            const int a = nodes_[j].parent;
            ++d;
            if (a == kTerminal) {
                nodes_[j].ts = time_;
                nodes_[j].dist = 1;
                break;
            }
            if (a == kOrphan) {
                d = kInfiniteDist;
                break;
            }
            j = arcs_[a].head;
        }
        if (d < kInfiniteDist) {
            if (d < best_dist) {
                best_arc = a0;
                best_dist = d;
            }
            for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
                nodes_[j].ts = time_;
                nodes_[j].dist = d--;
            }
        }
    }
    nodes_[i].parent = best_arc;
    if (best_arc != kNone) {
        nodes_[i].ts = time_;
        nodes_[i].dist = best_dist + 1;
        return;
    }
    for (int a0 = nodes_[i].first; a0 != -1; a0 = arcs_[a0].next) {
        const int j = arcs_[a0].head;
        const int a = nodes_[j].parent;
        if (!nodes_[j].is_sink || a == kNone) continue;
        if (arcs_[a0].r_cap > 0) set_active(j);
        if (a != kTerminal && a != kOrphan && arcs_[a].head == i) {
            nodes_[j].parent = kOrphan;
            orphans_.push_back(j);
        }
    }
}

double MaxFlowGraph::maxflow()
{
    active_.clear();
    orphans_.clear();
    for (int i = 0; i < node_count(); ++i) {
        auto& n = nodes_[i];
        n.queued = false;
        n.ts = 0;
        if (n.tr_cap > 0) {
            n.is_sink = false;
            n.parent = kTerminal;
            n.dist = 1;
            set_active(i);
        } else if (n.tr_cap < 0) {
            n.is_sink = true;
            n.parent = kTerminal;
            n.dist = 1;
            set_active(i);
        } else {
            n.parent = kNone;
        }
    }
    time_ = 0;

    int current = kNone;
    for (;;) {
        int i = current;
        if (i != kNone) {
            nodes_[i].queued = false;
            if (nodes_[i].parent == kNone) i = kNone;
        }
        if (i == kNone) {
            i = next_active();
            if (i == kNone) break;
        }

        int found = kNone;
        if (!nodes_[i].is_sink) {
            for (int a = nodes_[i].first; a != -1; a = arcs_[a].next) {
                if (arcs_[a].r_cap <= 0) continue;
                const int j = arcs_[a].head;
                auto& nj = nodes_[j];
                if (nj.parent == kNone) {
                    nj.is_sink = false;
                    nj.parent = sister(a);
                    nj.ts = nodes_[i].ts;
                    nj.dist = nodes_[i].dist + 1;
                    set_active(j);
                } else if (nj.is_sink) {
                    found = a;
                    break;
                } else if (nj.ts <= nodes_[i].ts && nj.dist > nodes_[i].dist) {
                    nj.parent = sister(a);
                    nj.ts = nodes_[i].ts;
                    nj.dist = nodes_[i].dist + 1;
                }
            }
        } else {
            for (int a = nodes_[i].first; a != -1; a = arcs_[a].next) {
                if (arcs_[sister(a)].r_cap <= 0) continue;
                const int j = arcs_[a].head;
                auto& nj = nodes_[j];
                if (nj.parent == kNone) {
                    nj.is_sink = true;
                    nj.parent = sister(a);
                    nj.ts = nodes_[i].ts;
                    nj.dist = nodes_[i].dist + 1;
                    set_active(j);
                } else if (!nj.is_sink) {
                    found = sister(a);
                    break;
                } else if (nj.ts <= nodes_[i].ts && nj.dist > nodes_[i].dist) {
                    nj.parent = sister(a);
                    nj.ts = nodes_[i].ts;
                    nj.dist = nodes_[i].dist + 1;
                }
            }
        }

        ++time_;
        if (found != kNone) {
            // Keep i as the current node; mark it so it is not queued twice.
            nodes_[i].queued = true;
            current = i;
            augment(found);
            while (!orphans_.empty()) {
                const int o = orphans_.front();
                orphans_.pop_front();
                if (nodes_[o].is_sink)
                    process_sink_orphan(o);
                else
                    process_source_orphan(o);
            }
        } else {
            current = kNone;
        }
    }
    return flow_;
}

}  // namespace hsvideo
