#pragma once

//==========================================================================================
// Brute-force reference implementations used by tests and the verify command. These stay
// deliberately naive: the engine is checked against them, never the other way around.
//==========================================================================================

#include <map>
#include <set>
#include <vector>

#include "panda/hypergraph.hpp"
#include "panda/query.hpp"
#include "panda/relation.hpp"

namespace panda::oracle {

struct guard_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr size_t kJoinGuard = 1000000;

namespace detail {

// All assignments over the body atoms, visited in lexicographic atom/tuple order.
template <typename Fn>
void enumerate_body(const std::vector<Atom>& atoms, const Database& db, Fn&& visit) {
    std::map<Variable, Value> binding;
    size_t visited = 0;
    auto rec = [&](auto&& self, size_t i) -> void {
        if (i == atoms.size()) {
            if (++visited > kJoinGuard) throw guard_error("oracle: body join guard exceeded");
            visit(binding);
            return;
        }
        const Atom& a = atoms[i];
        const Relation& r = db.at(a.symbol);
        for (const Tuple& t : r.tuples()) {
            bool ok = true;
            std::vector<Variable> bound;
            for (size_t j = 0; j < a.vars.size() && ok; j++) {
                auto it = binding.find(a.vars[j]);
                if (it == binding.end()) {
                    binding.emplace(a.vars[j], t[j]);
                    bound.push_back(a.vars[j]);
                } else if (!(it->second == t[j])) {
                    ok = false;
                }
            }
            if (ok) self(self, i + 1);
            for (const auto& v : bound) binding.erase(v);
        }
    };
    rec(rec, 0);
}

}  // namespace detail

// Nested-loop evaluation of the query semantics, projected onto the free variables.
inline Relation brute_join(const ConjunctiveQuery& q, const Database& db) {
    std::set<Variable> free = q.free_set();
    std::vector<Variable> cols(free.begin(), free.end());
    Relation out{Schema(cols)};
    detail::enumerate_body(q.atoms, db, [&](const std::map<Variable, Value>& b) {
        Tuple t;
        for (const auto& v : cols) t.push_back(b.at(v));
        out.insert(std::move(t));
    });
    return out;
}

// Full body join over all variables, sorted variable order.
inline Relation brute_body_join(const std::vector<Atom>& atoms, const Database& db) {
    std::set<Variable> all;
    for (const auto& a : atoms) all.insert(a.vars.begin(), a.vars.end());
    std::vector<Variable> cols(all.begin(), all.end());
    Relation out{Schema(cols)};
    detail::enumerate_body(atoms, db, [&](const std::map<Variable, Value>& b) {
        Tuple t;
        for (const auto& v : cols) t.push_back(b.at(v));
        out.insert(std::move(t));
    });
    return out;
}

struct OracleReport {
    bool match = true;
    std::vector<Tuple> missing;  // reference tuples absent from the candidate
    std::vector<Tuple> extra;    // candidate tuples absent from the reference
};

inline OracleReport compare_relations(const Relation& reference, const Relation& candidate) {
    OracleReport rep;
    Relation cand = project_ordered(candidate, reference.schema().vars());
    for (const auto& t : reference.tuples())
        if (!cand.contains(t)) rep.missing.push_back(t);
    for (const auto& t : cand.tuples())
        if (!reference.contains(t)) rep.extra.push_back(t);
    rep.match = rep.missing.empty() && rep.extra.empty();
    return rep;
}

// A candidate is a model iff every body-join tuple lands, projected, in at least one
// head bag's relation.
inline OracleReport check_ddr_model(const DisjunctiveRule& ddr, const VarTable& vt,
                                    const Database& db,
                                    const std::map<VarSet, Relation>& candidate) {
    OracleReport rep;
    std::set<Variable> all;
    for (const auto& a : ddr.body) all.insert(a.vars.begin(), a.vars.end());
    std::vector<Variable> cols(all.begin(), all.end());
    detail::enumerate_body(ddr.body, db, [&](const std::map<Variable, Value>& b) {
        for (const auto& [bag, _] : ddr.head_bags) {
            auto it = candidate.find(bag);
            if (it == candidate.end()) continue;
            Tuple proj;
            for (const auto& v : it->second.schema().vars()) proj.push_back(b.at(v));
            if (it->second.contains(proj)) return;
        }
        Tuple t;
        for (const auto& v : cols) t.push_back(b.at(v));
        rep.missing.push_back(std::move(t));
    });
    rep.match = rep.missing.empty();
    return rep;
}

// Scan body-join tuples in lexicographic order; whenever no head covers the tuple yet,
// insert its projection into every head bag. Always a model, and all bags end up with
// the same size.
inline std::map<VarSet, Relation> greedy_ddr_model(const DisjunctiveRule& ddr, const VarTable& vt,
                                                   const Database& db) {
    std::map<VarSet, Relation> model;
    for (const auto& [bag, _] : ddr.head_bags) {
        auto vars = vt.var_list(bag);
        model.emplace(bag, Relation{Schema(vars)});
    }
    Relation body = brute_body_join(ddr.body, db);  // sorted tuple order
    for (const auto& t : body.tuples()) {
        bool covered = false;
        for (auto& [bag, rel] : model) {
            Tuple proj;
            for (const auto& v : rel.schema().vars())
                proj.push_back(t[body.schema().index_of(v)]);
            if (rel.contains(proj)) { covered = true; break; }
        }
        if (covered) continue;
        for (auto& [bag, rel] : model) {
            Tuple proj;
            for (const auto& v : rel.schema().vars())
                proj.push_back(t[body.schema().index_of(v)]);
            rel.insert(std::move(proj));
        }
    }
    return model;
}

}  // namespace panda::oracle
