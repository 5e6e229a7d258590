#pragma once

//==========================================================================================
// The polymatroid cone and statistic constraints as linear objects over subset
// coordinates: h maps each nonempty subset of the query variables to a rational, h({}) is
// fixed at 0. Inequalities are handled as formal sums so certificates can be checked
// exactly, coordinate by coordinate.
//==========================================================================================

#include <map>
#include <sstream>
#include <vector>

#include "panda/rational.hpp"
#include "panda/stats.hpp"
#include "panda/varset.hpp"

namespace panda {

struct certificate_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// h(ys | xs); unconditional iff xs is empty
struct Term {
    VarSet ys = 0;
    VarSet xs = 0;

    VarSet all() const { return ys | xs; }
    bool unconditional() const { return xs == 0; }

    friend bool operator==(const Term& a, const Term& b) { return a.ys == b.ys && a.xs == b.xs; }
    friend bool operator<(const Term& a, const Term& b) {
        if (a.ys != b.ys) return varset_less(a.ys, b.ys);
        return varset_less(a.xs, b.xs);
    }
};

inline std::string render_term(const Term& t, const VarTable& vt) {
    if (t.unconditional()) return "h(" + vt.render(t.ys) + ")";
    return "h(" + vt.render(t.ys) + "|" + vt.render(t.xs) + ")";
}

// A basic Shannon inequality, stored as the expression E(h) >= 0:
//   monotonicity(sup, sub):      E = h(sup) - h(sub),                      sub subset of sup
//   submodularity(a; b; c):      E = h(ab) + h(ac) - h(a) - h(abc),        a, b, c disjoint
struct BasicInequality {
    enum Kind { monotonicity, submodularity };
    Kind kind;
    VarSet a = 0, b = 0, c = 0;  // monotonicity: a = sup, b = sub, c unused

    static BasicInequality mono(VarSet sup, VarSet sub) {
        return {monotonicity, sup, sub, 0};
    }
    static BasicInequality submod(VarSet a, VarSet b, VarSet c) {
        if (varset_less(c, b)) std::swap(b, c);  // the expansion is symmetric in b and c
        return {submodularity, a, b, c};
    }

    friend bool operator==(const BasicInequality& x, const BasicInequality& y) {
        return x.kind == y.kind && x.a == y.a && x.b == y.b && x.c == y.c;
    }
    friend bool operator<(const BasicInequality& x, const BasicInequality& y) {
        if (x.kind != y.kind) return x.kind < y.kind;
        if (x.a != y.a) return varset_less(x.a, y.a);
        if (x.b != y.b) return varset_less(x.b, y.b);
        return varset_less(x.c, y.c);
    }
};

inline std::string render_basic(const BasicInequality& bi, const VarTable& vt) {
    if (bi.kind == BasicInequality::monotonicity)
        return "h(" + vt.render(bi.a) + ") >= h(" + vt.render(bi.b) + ")";
    auto r = [&](VarSet s) { return vt.render(s); };
    return "h(" + r(bi.a | bi.b) + ") + h(" + r(bi.a | bi.c) + ") >= h(" + r(bi.a) + ") + h(" +
           r(bi.a | bi.b | bi.c) + ")";
}

// Sparse linear form over the nonempty-subset coordinates; the empty set contributes 0.
class FormalSum {
public:
    void add(VarSet coord, const Rational& coeff) {
        if (coord == 0 || coeff == 0) return;
        auto it = coeffs_.find(coord);
        if (it == coeffs_.end()) {
            coeffs_.emplace(coord, coeff);
        } else {
            it->second += coeff;
            if (it->second == 0) coeffs_.erase(it);
        }
    }
    void add_term(const Term& t, const Rational& coeff) {
        add(t.all(), coeff);
        add(t.xs, -coeff);
    }
    void add_basic(const BasicInequality& bi, const Rational& coeff) {
        if (bi.kind == BasicInequality::monotonicity) {
            add(bi.a, coeff);
            add(bi.b, -coeff);
        } else {
            add(bi.a | bi.b, coeff);
            add(bi.a | bi.c, coeff);
            add(bi.a, -coeff);
            add(bi.a | bi.b | bi.c, -coeff);
        }
    }
    bool zero() const { return coeffs_.empty(); }
    const std::map<VarSet, Rational, VarSetLess>& coeffs() const { return coeffs_; }

    Rational evaluate(const std::map<VarSet, Rational, VarSetLess>& h) const {
        Rational v(0);
        for (const auto& [coord, coeff] : coeffs_) {
            auto it = h.find(coord);
            if (it != h.end()) v += coeff * it->second;
        }
        return v;
    }

private:
    std::map<VarSet, Rational, VarSetLess> coeffs_;
};

using EntropyVector = std::map<VarSet, Rational, VarSetLess>;

// The elemental generating family of the polymatroid cone over n variables:
// h(V) >= h(V \ {x}) for every x, and h(b|A) >= h(b|Ac) for all singletons b != c and
// every A avoiding both. Spans the same cone as the general monotonicity and
// submodularity inequalities.
inline std::vector<BasicInequality> polymatroid_constraints(size_t n) {
    if (n < 1 || n > kMaxVars) throw size_error("polymatroid_constraints: bad variable count");
    std::vector<BasicInequality> out;
    VarSet full = (VarSet(1) << n) - 1;
    for (size_t x = 0; x < n; x++)
        out.push_back(BasicInequality::mono(full, full & ~(VarSet(1) << x)));
    for (size_t b = 0; b < n; b++) {
        for (size_t c = 0; c < n; c++) {
            if (b == c) continue;
            VarSet bb = VarSet(1) << b, cb = VarSet(1) << c;
            VarSet rest = full & ~bb & ~cb;
            // all subsets A of rest
            VarSet a = 0;
            while (true) {
                out.push_back({BasicInequality::submodularity, a, bb, cb});
                if (a == rest) break;
                a = (a - rest) & rest;  // next subset
            }
        }
    }
    return out;
}

// One linear constraint on h per statistic instance.
struct StatConstraint {
    size_t instance;   // index into the instance list
    FormalSum lhs;     // <= rhs
    Rational rhs;      // log_N units
};

// Translate instantiated statistics into constraints on h. Symbolic bounds give exact
// rational right-hand sides; numeric bounds enter as ln(bound)/ln(N) rounded to 64
// fractional bits.
inline std::vector<StatConstraint> stat_constraints(const StatisticsSet& s,
                                                    const std::vector<ConstraintInstance>& instances,
                                                    const VarTable& vt,
                                                    const Integer& N) {
    std::vector<StatConstraint> out;
    for (size_t idx = 0; idx < instances.size(); idx++) {
        const auto& inst = instances[idx];
        const auto& c = s.constraints[inst.constraint_index];
        VarSet xs = vt.set_of(inst.xs);
        VarSet ys = vt.set_of(inst.ys);
        StatConstraint sc;
        sc.instance = idx;
        Rational log_bound;
        if (s.mode == StatsMode::symbolic) {
            log_bound = c.bound_exponent;
        } else {
            if (c.bound_numeric <= 0) throw semantic_error("non-positive numeric bound");
            if (N <= 1) throw argument_error("stat_constraints: need N > 1 in numeric mode");
            log_bound = (c.bound_numeric == 1) ? Rational(0) : log_ratio_fixed(c.bound_numeric, N);
        }
        if (c.lk == 0) {
            sc.lhs.add_term({ys, xs}, 1);
            sc.rhs = log_bound;
        } else {
            // (1/k) h(X) + h(Y|X) <= (1/k) log_N of the k-th power bound
            Rational inv_k(1, static_cast<long>(c.lk));
            sc.lhs.add(xs, inv_k);
            sc.lhs.add_term({ys, xs}, 1);
            sc.rhs = inv_k * log_bound;
        }
        out.push_back(std::move(sc));
    }
    return out;
}

// Exact feasibility checks used to validate LP witnesses independently of the solver.
inline bool is_polymatroid(const EntropyVector& h, size_t n) {
    for (const auto& bi : polymatroid_constraints(n)) {
        FormalSum e;
        e.add_basic(bi, 1);
        if (e.evaluate(h) < 0) return false;
    }
    return true;
}

inline bool satisfies_stats(const EntropyVector& h, const std::vector<StatConstraint>& rows) {
    for (const auto& sc : rows)
        if (sc.lhs.evaluate(h) > sc.rhs) return false;
    return true;
}

}  // namespace panda
