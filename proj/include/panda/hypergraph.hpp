#pragma once

//==========================================================================================
// Structural analysis of queries: GYO acyclicity testing, free-connex tree decomposition
// enumeration via variable elimination orders, bag selectors, and disjunctive rule
// construction for adaptive plans.
//==========================================================================================

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "panda/query.hpp"
#include "panda/varset.hpp"

namespace panda {

struct plan_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Hypergraph {
    VarSet vertices = 0;
    std::vector<VarSet> edges;

    static Hypergraph of_query(const ConjunctiveQuery& q, const VarTable& vt) {
        Hypergraph h;
        h.vertices = vt.set_of(q.all_vars());
        for (const auto& a : q.atoms) h.edges.push_back(vt.set_of(a.vars));
        return h;
    }
};

// Join tree as parent links over edge indices; root has parent -1.
struct JoinTree {
    std::vector<int> parent;

    std::vector<std::pair<int, int>> edge_list() const {
        std::vector<std::pair<int, int>> out;
        for (size_t i = 0; i < parent.size(); i++)
            if (parent[i] >= 0) out.push_back({static_cast<int>(i), parent[i]});
        return out;
    }
};

// GYO reduction: repeatedly strip vertices unique to one edge and absorb edges contained
// in other edges, recording who absorbed whom. Acyclic iff everything collapses to one
// edge; the parentage is then a join tree of the original edges.
inline std::pair<bool, JoinTree> gyo_acyclic(const std::vector<VarSet>& edges) {
    size_t m = edges.size();
    JoinTree tree;
    tree.parent.assign(m, -1);
    if (m == 0) return {true, tree};

    std::vector<VarSet> cur = edges;
    std::vector<bool> alive(m, true);
    size_t alive_count = m;

    bool changed = true;
    while (changed && alive_count > 1) {
        changed = false;
        // vertex occurrence counts over alive edges
        std::map<int, int> occ;
        for (size_t i = 0; i < m; i++) {
            if (!alive[i]) continue;
            VarSet s = cur[i];
            while (s) {
                occ[std::countr_zero(s)]++;
                s &= s - 1;
            }
        }
        for (size_t i = 0; i < m; i++) {
            if (!alive[i]) continue;
            VarSet keep = 0, s = cur[i];
            while (s) {
                int v = std::countr_zero(s);
                if (occ.at(v) > 1) keep |= VarSet(1) << v;
                s &= s - 1;
            }
            if (keep != cur[i]) { cur[i] = keep; changed = true; }
        }
        for (size_t i = 0; i < m && alive_count > 1; i++) {
            if (!alive[i]) continue;
            for (size_t j = 0; j < m; j++) {
                if (i == j || !alive[j]) continue;
                if (subset(cur[i], cur[j])) {
                    alive[i] = false;
                    alive_count--;
                    tree.parent[i] = static_cast<int>(j);
                    changed = true;
                    break;
                }
            }
        }
    }
    return {alive_count <= 1, tree};
}

struct TreeDecomposition {
    std::vector<VarSet> bags;  // canonical order, pairwise non-subsumed
    JoinTree tree;             // join tree over bag indices

    bool trivial() const { return bags.size() == 1; }

    friend bool operator==(const TreeDecomposition& a, const TreeDecomposition& b) {
        return a.bags == b.bags;
    }
};

// bags(td) + {free} must stay acyclic; Boolean and full queries pass vacuously.
inline bool td_is_free_connex(const std::vector<VarSet>& bags, VarSet free) {
    std::vector<VarSet> edges = bags;
    edges.push_back(free);
    return gyo_acyclic(edges).first;
}

// All three tree decomposition conditions, checked structurally.
inline bool td_valid(const TreeDecomposition& td, const Hypergraph& h) {
    // 1. every atom edge inside some bag
    for (VarSet e : h.edges) {
        bool covered = false;
        for (VarSet b : td.bags) covered |= subset(e, b);
        if (!covered) return false;
    }
    // 2. the bags form an acyclic query
    auto [ok, tree] = gyo_acyclic(td.bags);
    if (!ok) return false;
    // 3. running intersection over the stored tree: each variable's bags are connected
    size_t n = td.bags.size();
    for (size_t v = 0; v < kMaxVars; v++) {
        VarSet bit = VarSet(1) << v;
        std::vector<int> holders;
        for (size_t i = 0; i < n; i++)
            if (td.bags[i] & bit) holders.push_back(static_cast<int>(i));
        if (holders.size() <= 1) continue;
        // connectivity within the induced subforest
        std::set<int> hs(holders.begin(), holders.end());
        std::set<int> seen{holders[0]};
        std::vector<int> stack{holders[0]};
        auto adjacent = [&](int a, int b) {
            return td.tree.parent[a] == b || td.tree.parent[b] == a;
        };
        while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            for (int y : holders)
                if (!seen.count(y) && adjacent(x, y)) { seen.insert(y); stack.push_back(y); }
        }
        if (seen.size() != hs.size()) return false;
    }
    return true;
}

namespace detail {

// Remove bags contained in other bags, keep canonical order.
inline std::vector<VarSet> reduce_bags(std::vector<VarSet> bags) {
    std::sort(bags.begin(), bags.end(), VarSetLess{});
    bags.erase(std::unique(bags.begin(), bags.end()), bags.end());
    std::vector<VarSet> out;
    for (size_t i = 0; i < bags.size(); i++) {
        bool subsumed = false;
        for (size_t j = 0; j < bags.size(); j++)
            if (i != j && subset(bags[i], bags[j]) && bags[i] != bags[j]) { subsumed = true; break; }
        if (!subsumed) out.push_back(bags[i]);
    }
    return out;
}

struct EliminationState {
    VarSet remaining;
    std::vector<VarSet> adj;       // neighborhood per variable index, over remaining vars
    std::vector<VarSet> bags;      // reduced, canonical

    std::pair<VarSet, std::vector<VarSet>> key() const { return {remaining, bags}; }
};

}  // namespace detail

// Generate tree decompositions from variable elimination orders: eliminating v makes the
// bag {v} + N(v) and connects N(v) into a clique. Distinct reduced bag sets are collected,
// the trivial all-in-one-bag TD is always added, and only free-connex TDs survive.
inline std::vector<TreeDecomposition> enumerate_tds(const ConjunctiveQuery& q, const VarTable& vt) {
    Hypergraph h = Hypergraph::of_query(q, vt);
    size_t n = vt.size();
    if (n > kMaxVars) throw size_error("enumerate_tds: variable cap exceeded");
    VarSet free = vt.set_of(q.free_set());

    std::set<std::vector<VarSet>> bagsets;

    // primal graph
    std::vector<VarSet> adj0(n, 0);
    for (VarSet e : h.edges) {
        VarSet s = e;
        while (s) {
            int v = std::countr_zero(s);
            adj0[v] |= e & ~(VarSet(1) << v);
            s &= s - 1;
        }
    }

    std::set<std::pair<VarSet, std::vector<VarSet>>> visited;
    std::vector<detail::EliminationState> stack;
    stack.push_back({h.vertices, adj0, {}});
    while (!stack.empty()) {
        auto st = std::move(stack.back());
        stack.pop_back();
        if (st.remaining == 0) {
            bagsets.insert(st.bags);
            continue;
        }
        if (!visited.insert(st.key()).second) continue;
        VarSet rem = st.remaining;
        while (rem) {
            int v = std::countr_zero(rem);
            rem &= rem - 1;
            VarSet vbit = VarSet(1) << v;
            VarSet bag = vbit | st.adj[v];
            detail::EliminationState next;
            next.remaining = st.remaining & ~vbit;
            next.adj = st.adj;
            // connect the neighborhood, drop v
            VarSet nb = st.adj[v];
            VarSet s = nb;
            while (s) {
                int u = std::countr_zero(s);
                s &= s - 1;
                next.adj[u] = (next.adj[u] | nb) & ~(VarSet(1) << u) & ~vbit;
            }
            next.adj[v] = 0;
            next.bags = st.bags;
            next.bags.push_back(bag);
            next.bags = detail::reduce_bags(std::move(next.bags));
            stack.push_back(std::move(next));
        }
    }

    bagsets.insert({h.vertices});  // the trivial TD

    std::vector<TreeDecomposition> out;
    for (const auto& bags : bagsets) {
        if (!td_is_free_connex(bags, free)) continue;
        auto [ok, tree] = gyo_acyclic(bags);
        if (!ok) continue;  // elimination bags are always acyclic, but stay defensive
        out.push_back({bags, tree});
    }
    std::sort(out.begin(), out.end(), [](const TreeDecomposition& a, const TreeDecomposition& b) {
        return std::lexicographical_compare(a.bags.begin(), a.bags.end(), b.bags.begin(),
                                            b.bags.end(), VarSetLess{});
    });
    return out;
}

// One bag chosen from each TD.
struct BagSelector {
    std::vector<int> choice;      // per-TD bag index
    std::vector<VarSet> bags;     // the chosen bags, in TD order

    // distinct bags in canonical order
    std::vector<VarSet> distinct_bags() const {
        std::vector<VarSet> d = bags;
        std::sort(d.begin(), d.end(), VarSetLess{});
        d.erase(std::unique(d.begin(), d.end()), d.end());
        return d;
    }
};

// Cartesian product of bag choices over the TDs. Dominance pruning (skip selectors where
// one chosen bag strictly contains another) is available but off by default.
inline std::vector<BagSelector> bag_selectors(const std::vector<TreeDecomposition>& tds,
                                              bool dominance_pruning = false) {
    if (tds.empty()) throw argument_error("bag_selectors: no tree decompositions");
    std::vector<BagSelector> out;
    std::vector<int> choice(tds.size(), 0);
    while (true) {
        BagSelector sel;
        sel.choice = choice;
        for (size_t i = 0; i < tds.size(); i++) sel.bags.push_back(tds[i].bags[choice[i]]);
        bool keep = true;
        if (dominance_pruning) {
            for (size_t i = 0; keep && i < sel.bags.size(); i++)
                for (size_t j = 0; keep && j < sel.bags.size(); j++)
                    if (i != j && sel.bags[i] != sel.bags[j] && subset(sel.bags[j], sel.bags[i]))
                        keep = false;
        }
        if (keep) out.push_back(std::move(sel));
        // advance odometer
        size_t k = tds.size();
        while (k > 0) {
            k--;
            if (++choice[k] < static_cast<int>(tds[k].bags.size())) break;
            choice[k] = 0;
            if (k == 0) return out;
        }
    }
}

// A rule with a disjunction of head atoms over a conjunctive body.
struct DisjunctiveRule {
    std::vector<std::pair<VarSet, std::string>> head_bags;  // bag and fresh output symbol
    std::vector<Atom> body;

    std::vector<VarSet> head_sets() const {
        std::vector<VarSet> out;
        for (const auto& [b, _] : head_bags) out.push_back(b);
        return out;
    }
};

inline DisjunctiveRule build_ddr(const ConjunctiveQuery& q, const VarTable& vt,
                                 const BagSelector& sel) {
    DisjunctiveRule ddr;
    for (VarSet b : sel.distinct_bags()) {
        std::string sym = "H_";
        for (const auto& v : vt.var_list(b)) sym += v;
        ddr.head_bags.push_back({b, sym});
    }
    ddr.body = q.atoms;
    return ddr;
}

}  // namespace panda
