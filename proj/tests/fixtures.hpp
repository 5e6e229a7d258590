#pragma once

// Shared fixtures: the 4-cycle example instance, query builders, and small random
// instance generators used across the suites.

#include <random>

#include "panda/panda.hpp"

namespace fixtures {

using namespace panda;

inline Value iv(std::int64_t x) { return Value(x); }
inline Value sv(const std::string& s) { return Value(s); }

inline Relation rel(std::vector<Variable> vars, std::vector<Tuple> rows) {
    Relation r{Schema(std::move(vars))};
    for (auto& t : rows) r.insert(std::move(t));
    return r;
}

// The running example instance: R(X,Y), S(Y,Z), T(Z,W), U(W,X), three tuples each.
inline Database example_db() {
    Database db;
    db.relations["R"] = rel({"X", "Y"}, {{iv(1), sv("p")}, {iv(1), sv("q")}, {iv(2), sv("p")}});
    db.relations["S"] = rel({"Y", "Z"}, {{sv("p"), iv(3)}, {sv("q"), iv(4)}, {sv("q"), iv(5)}});
    db.relations["T"] = rel({"Z", "W"}, {{iv(3), sv("i")}, {iv(5), sv("i")}, {iv(5), sv("j")}});
    db.relations["U"] = rel({"W", "X"}, {{sv("i"), iv(1)}, {sv("j"), iv(1)}, {sv("k"), iv(2)}});
    return db;
}

inline ConjunctiveQuery four_cycle() {
    return parse_query("Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).");
}
inline ConjunctiveQuery four_cycle_full() {
    return parse_query("Q(X,Y,Z,W) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).");
}

inline StatisticsSet square_stats(const ConjunctiveQuery& q) {
    return parse_stats(
        "mode symbolic\n"
        "card(R) <= N\ncard(S) <= N\ncard(T) <= N\ncard(U) <= N\n",
        q);
}

inline StatisticsSet square_stats_full(const ConjunctiveQuery& q) {
    return parse_stats(
        "mode symbolic\n"
        "card(R) <= N\ncard(S) <= N\ncard(T) <= N\ncard(U) <= N\n"
        "deg(U; X | W) <= 1\n"
        "deg(U; W | X) <= N^{1/2}\n",
        q);
}

// Random relation over a bounded domain; values are small integers.
inline Relation random_relation(std::mt19937& rng, std::vector<Variable> vars, size_t max_tuples,
                                int domain) {
    std::uniform_int_distribution<int> val(1, domain);
    std::uniform_int_distribution<size_t> cnt(0, max_tuples);
    Relation r{Schema(vars)};
    size_t n = cnt(rng);
    for (size_t i = 0; i < n; i++) {
        Tuple t;
        for (size_t j = 0; j < vars.size(); j++) t.push_back(iv(val(rng)));
        r.insert(std::move(t));
    }
    return r;
}

inline Database random_db(std::mt19937& rng, const ConjunctiveQuery& q, size_t max_tuples,
                          int domain) {
    Database db;
    for (const auto& a : q.atoms)
        if (!db.relations.count(a.symbol))
            db.relations[a.symbol] = random_relation(rng, a.vars, max_tuples, domain);
    return db;
}

// The worst-case 4-cycle family: every relation is ([N/2] x [1]) union ([1] x [N/2]).
inline Database hub_db(int n) {
    auto hub = [&](std::vector<Variable> vars) {
        Relation r{Schema(vars)};
        for (int i = 1; i <= n / 2; i++) {
            r.insert({iv(i), iv(1)});
            r.insert({iv(1), iv(i)});
        }
        return r;
    };
    Database db;
    db.relations["R"] = hub({"X", "Y"});
    db.relations["S"] = hub({"Y", "Z"});
    db.relations["T"] = hub({"Z", "W"});
    db.relations["U"] = hub({"W", "X"});
    return db;
}

}  // namespace fixtures
