#pragma once

//==========================================================================================
// Yannakakis evaluation over a join tree of bag relations: full semijoin reduction
// (bottom-up then top-down), then assembly over a join tree of bags + {free} rooted at
// the virtual free node. After full reduction every filter below the root is vacuous and
// every per-bag projection fits inside its bag, so the assembly materializes at most one
// relation per bag plus the output itself, which the instrumentation counter tracks.
//==========================================================================================

#include <algorithm>
#include <set>
#include <vector>

#include "panda/hypergraph.hpp"
#include "panda/relation.hpp"
#include "panda/varset.hpp"

namespace panda {

struct BagNode {
    std::set<Variable> bag;
    Relation relation;  // schema must cover exactly the bag variables
};

struct YannakakisStats {
    size_t tuples_produced = 0;    // assembly-phase materializations, output included
    size_t max_intermediate = 0;
};

namespace detail {

inline void check_running_intersection(const std::vector<BagNode>& nodes,
                                       const std::vector<std::pair<int, int>>& edges) {
    size_t n = nodes.size();
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    if (n > 0) {
        std::vector<bool> seen(n, false);
        std::vector<int> stack{0};
        seen[0] = true;
        size_t cnt = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int u : adj[v])
                if (!seen[u]) { seen[u] = true; cnt++; stack.push_back(u); }
        }
        if (cnt != n || edges.size() != n - 1)
            throw plan_error("yannakakis: bag graph is not a tree");
    }
    std::set<Variable> all;
    for (const auto& nd : nodes) all.insert(nd.bag.begin(), nd.bag.end());
    for (const auto& v : all) {
        std::vector<bool> holds(n, false);
        int start = -1, total = 0;
        for (size_t i = 0; i < n; i++)
            if (nodes[i].bag.count(v)) { holds[i] = true; start = static_cast<int>(i); total++; }
        std::vector<bool> seen(n, false);
        std::vector<int> stack{start};
        seen[start] = true;
        int cnt = 1;
        while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            for (int u : adj[x])
                if (!seen[u] && holds[u]) { seen[u] = true; cnt++; stack.push_back(u); }
        }
        if (cnt != total)
            throw plan_error("yannakakis: running intersection violated for variable " + v);
    }
}

}  // namespace detail

inline Relation yannakakis(const std::vector<BagNode>& nodes,
                           const std::vector<std::pair<int, int>>& edges,
                           const std::set<Variable>& free,
                           YannakakisStats* stats = nullptr) {
    size_t n = nodes.size();
    if (n == 0) throw plan_error("yannakakis: no bags");
    for (const auto& nd : nodes)
        if (nd.relation.schema().var_set() != nd.bag)
            throw plan_error("yannakakis: bag relation schema does not match its bag");
    detail::check_running_intersection(nodes, edges);
    std::set<Variable> all;
    for (const auto& nd : nodes) all.insert(nd.bag.begin(), nd.bag.end());
    for (const auto& v : free)
        if (!all.count(v)) throw plan_error("yannakakis: free variable " + v + " not in any bag");
    std::vector<Variable> free_cols(free.begin(), free.end());

    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<int> parent(n, -1), order;
    {
        std::vector<bool> seen(n, false);
        std::vector<int> queue{0};
        seen[0] = true;
        for (size_t q = 0; q < queue.size(); q++) {
            int v = queue[q];
            order.push_back(v);
            for (int u : adj[v])
                if (!seen[u]) { seen[u] = true; parent[u] = v; queue.push_back(u); }
        }
    }

    // full reduction: leaves to root, then root to leaves (pure filtering)
    std::vector<Relation> rel;
    rel.reserve(n);
    for (const auto& nd : nodes) rel.push_back(nd.relation);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int v = *it;
        if (parent[v] >= 0) rel[parent[v]] = semijoin(rel[parent[v]], rel[v]);
    }
    for (int v : order)
        if (parent[v] >= 0) rel[v] = semijoin(rel[v], rel[parent[v]]);

    for (const auto& r : rel)
        if (r.empty()) return Relation{Schema(free_cols)};

    // join tree of bags + {free}, rooted at the free node
    VarTable vt(all);
    std::vector<VarSet> eprime;
    for (const auto& nd : nodes) eprime.push_back(vt.set_of(nd.bag));
    VarSet fset = vt.set_of(free);
    eprime.push_back(fset);
    auto [acyclic, jt] = gyo_acyclic(eprime);
    if (!acyclic)
        throw plan_error("yannakakis: bags plus the free set are not acyclic (not free-connex)");
    size_t froot = n;  // index of the free node in eprime
    std::vector<std::vector<int>> adj2(n + 1);
    for (auto [a, b] : jt.edge_list()) {
        adj2[a].push_back(b);
        adj2[b].push_back(a);
    }
    std::vector<int> parent2(n + 1, -1), order2;
    {
        std::vector<bool> seen(n + 1, false);
        std::vector<int> queue{static_cast<int>(froot)};
        seen[froot] = true;
        for (size_t q = 0; q < queue.size(); q++) {
            int v = queue[q];
            order2.push_back(v);
            for (int u : adj2[v])
                if (!seen[u]) { seen[u] = true; parent2[u] = v; queue.push_back(u); }
        }
    }

    auto note = [&](size_t produced, size_t total) {
        if (!stats) return;
        stats->tuples_produced += produced;
        stats->max_intermediate = std::max(stats->max_intermediate, total);
    };

    // assembly below the root: Q_v = project(R_v filtered by children, keep_v) where
    // keep_v = (B_v intersect parent) + (free intersect B_v). After reduction the child
    // filters are vacuous, but they are kept as cheap hash probes.
    std::vector<Relation> q(n + 1);
    for (auto it = order2.rbegin(); it != order2.rend(); ++it) {
        int v = *it;
        if (v == static_cast<int>(froot)) continue;
        std::set<Variable> keep;
        for (const auto& x : nodes[v].bag) {
            if (free.count(x)) keep.insert(x);
            else if (parent2[v] != static_cast<int>(froot) && parent2[v] >= 0 &&
                     nodes[parent2[v]].bag.count(x))
                keep.insert(x);
        }
        std::vector<int> children;
        for (int u : adj2[v])
            if (parent2[u] == v) children.push_back(u);
        Relation filtered = rel[v];
        for (int u : children) filtered = semijoin(filtered, q[u]);
        q[v] = project(filtered, keep);
        note(q[v].size(), q[v].size());
    }

    // root: backtracking join of the children straight into the output set
    std::vector<int> fchildren;
    for (int u : adj2[froot])
        if (parent2[u] == static_cast<int>(froot)) fchildren.push_back(u);
    Relation out{Schema(free_cols)};
    std::map<Variable, Value> binding;
    auto emit = [&]() {
        Tuple t;
        t.reserve(free_cols.size());
        for (const auto& v : free_cols) t.push_back(binding.at(v));
        out.insert(std::move(t));
    };
    auto rec = [&](auto&& self, size_t i) -> void {
        if (i == fchildren.size()) {
            emit();
            return;
        }
        const Relation& r = q[fchildren[i]];
        const auto& vars = r.schema().vars();
        for (const auto& t : r.tuples()) {
            bool ok = true;
            std::vector<Variable> fresh;
            for (size_t j = 0; j < vars.size() && ok; j++) {
                auto it = binding.find(vars[j]);
                if (it == binding.end()) {
                    binding.emplace(vars[j], t[j]);
                    fresh.push_back(vars[j]);
                } else if (!(it->second == t[j])) {
                    ok = false;
                }
            }
            if (ok) self(self, i + 1);
            for (const auto& v : fresh) binding.erase(v);
        }
    };
    if (fchildren.empty()) {
        if (free.empty()) emit();  // Boolean query over nonempty reduced bags: yes
    } else {
        rec(rec, 0);
    }
    note(out.size(), out.size());
    return out;
}

}  // namespace panda
