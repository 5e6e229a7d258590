#pragma once

//==========================================================================================
// Sub-probability measures over relations: the executor's working state. A weighted
// relation stores exact rational weights per tuple; a conditional measure is keyed on a
// determining subset of its condition variables, so extending the condition set is pure
// bookkeeping. Size bounds B = prod bound^w are carried in root form (B = P^{1/R} with P
// an exact integer) so threshold comparisons stay exact even when B itself is
// irrational.
//==========================================================================================

#include <map>
#include <set>
#include <vector>

#include "panda/bounds.hpp"
#include "panda/proof.hpp"
#include "panda/relation.hpp"

namespace panda {

// B = P^(1/R): the worst-case size bound of a disjunctive rule under an integral flow.
struct SizeBound {
    Integer P = 1;          // exact integer, B^R
    unsigned long R = 1;    // root degree
    Rational log_exponent;  // log_N B (exact in symbolic mode, reporting-only otherwise)
    Integer L = 1;          // integral scale of the certifying flow

    Integer ceil_value() const {
        // smallest k with k^R >= P
        Integer r = integer_root_floor(P, R);
        return integer_pow(r, R) == P ? r : r + 1;
    }
    // m >= 1/B, exactly: m^R * P >= 1
    bool at_least_inverse(const Rational& m) const {
        if (m <= 0) return false;
        return rational_pow(m, static_cast<long>(R)) * Rational(P) >= 1;
    }
    // product >= B^{-L}, exactly: product^R * P^L >= 1
    bool product_within_budget(const Rational& product) const {
        if (product <= 0) return false;
        return rational_pow(product, static_cast<long>(R)) *
                   Rational(integer_pow(P, L.convert_to<unsigned long>())) >= 1;
    }
};

// The concrete numeric value of one constraint instance's bound. Symbolic bounds must
// instantiate to an integer for execution (N^{p/q} with q-th root available); numeric
// bounds are already integers.
inline Integer concrete_bound(const DegreeConstraint& c, const StatisticsSet& s, const Integer& N) {
    if (s.mode == StatsMode::numeric) return c.bound_numeric;
    if (N <= 0) throw argument_error("concrete_bound: symbolic statistics need a concrete N");
    Rational e = c.bound_exponent;
    if (e < 0) throw argument_error("concrete_bound: negative symbolic exponent");
    Integer p = numerator(e);
    unsigned long q = denominator(e).convert_to<unsigned long>();
    Integer np = integer_pow(N, p.convert_to<unsigned long>());
    Integer root = integer_root_floor(np, q);
    if (integer_pow(root, q) != np)
        throw argument_error("concrete_bound: N^" + rational_str(e) +
                             " is not an integer for N=" + N.str() +
                             "; use numeric statistics for execution");
    return root;
}

// log_N B = sum w_c log_N(bound_c); the absolute bound B in root form uses the integral
// weights: B^L = prod bound_c^{w_c}.
inline SizeBound bound_from_flow(const ShannonFlowInequality& flow, const IntegralFlow& integral,
                                 const WidthContext& ctx) {
    SizeBound b;
    b.log_exponent = 0;
    for (size_t c = 0; c < flow.w.size(); c++)
        b.log_exponent += flow.w[c] * ctx.stat_rows[c].rhs;
    b.L = integral.scale;
    b.R = integral.scale.convert_to<unsigned long>();
    b.P = 1;
    for (size_t c = 0; c < integral.w.size(); c++) {
        if (integral.w[c] == 0) continue;
        const auto& dc = ctx.stats.constraints[ctx.instances[c].constraint_index];
        Integer m = concrete_bound(dc, ctx.stats, ctx.N);
        unsigned long wexp = integral.w[c].convert_to<unsigned long>();
        if (dc.lk > 0) {
            // the instance bound is the k-th power of the norm: contributes bound^{w/k}
            if (integral.w[c] % Integer(dc.lk) != 0)
                throw certificate_error("bound_from_flow: lk weight not divisible by k");
            wexp = (integral.w[c] / Integer(dc.lk)).convert_to<unsigned long>();
        }
        b.P *= integer_pow(m, wexp);
    }
    return b;
}

// A relation whose tuples carry exact rational weights in (0, 1]. For a conditional
// measure, guard_keys is the determining subset: rows are keyed on guard_keys + value
// columns, and the per-guard-binding mass law applies.
class WeightedRelation {
public:
    WeightedRelation() = default;
    WeightedRelation(Schema schema, std::vector<Variable> guard_keys)
        : schema_(std::move(schema)), keys_(std::move(guard_keys)) {
        for (const auto& k : keys_)
            if (!schema_.contains(k)) throw schema_error("guard key " + k + " not in schema");
    }

    const Schema& schema() const { return schema_; }
    const std::vector<Variable>& guard_keys() const { return keys_; }
    const std::map<Tuple, Rational>& rows() const { return rows_; }
    size_t size() const { return rows_.size(); }

    void set(const Tuple& t, const Rational& m) {
        if (t.size() != schema_.arity()) throw schema_error("weighted tuple arity mismatch");
        if (m <= 0 || m > 1) throw argument_error("measure value out of (0, 1]");
        rows_[t] = m;
    }
    void erase(const Tuple& t) { rows_.erase(t); }

    // measure evaluated at a wider tuple's projection; 0 when the projection is absent
    Rational at(const Schema& wide, const Tuple& t) const {
        Tuple proj;
        proj.reserve(schema_.arity());
        for (const auto& v : schema_.vars()) proj.push_back(t[wide.index_of(v)]);
        auto it = rows_.find(proj);
        return it == rows_.end() ? Rational(0) : it->second;
    }

    // total mass <= 1 (unconditional) and per-guard-binding mass <= 1 (conditional)
    bool mass_laws_hold() const {
        std::map<Tuple, Rational> per_key;
        auto key_idx = detail::positions(schema_, keys_);
        for (const auto& [t, m] : rows_) per_key[detail::extract(t, key_idx)] += m;
        if (keys_.empty()) {
            Rational total(0);
            for (const auto& [_, m] : per_key) total += m;
            return rows_.empty() || total <= 1;
        }
        for (const auto& [_, m] : per_key)
            if (m > 1) return false;
        return true;
    }

private:
    Schema schema_;
    std::vector<Variable> keys_;
    std::map<Tuple, Rational> rows_;
};

// The executor state for one source-term copy.
struct TermState {
    Term term;
    WeightedRelation payload;
    std::vector<Term> lineage;  // original unconditional source terms absorbed so far
};

// Initial measures, one per identity source copy:
//   cardinality h(Y) <= log M:    uniform 1/M over the guard's Y-projection
//   degree h(Y|X) <= log M:       1/deg(Y|X=x) per binding, keyed on X
//   lk-norm, conditional part:    1/deg(Y|X=x), keyed on X
//   lk-norm, unconditional part:  deg(Y|X=x)^k / M over the guard's X-projection
inline std::vector<TermState> init_measures(const Identity& id, const Database& db,
                                            const WidthContext& ctx) {
    std::vector<TermState> out;
    for (const auto& sc : id.sources) {
        if (sc.instance == SIZE_MAX)
            throw certificate_error("init_measures: source term has no statistic instance");
        const auto& inst = ctx.instances[sc.instance];
        const auto& dc = ctx.stats.constraints[inst.constraint_index];
        const Relation& guard = db.at(dc.guard);
        Integer M = concrete_bound(dc, ctx.stats, ctx.N);

        std::set<Variable> xs, ys;
        for (size_t p : dc.xs_pos) xs.insert(guard.schema().vars().at(p));
        for (size_t p : dc.ys_pos) ys.insert(guard.schema().vars().at(p));

        // The guard's columns are named by its first atom occurrence; the instance may
        // live at another occurrence of the same symbol. Recover the owning atom and
        // rename columns positionally into the instance's query variables.
        std::map<Variable, Variable> rename;  // guard column -> query variable
        {
            const Atom* atom = nullptr;
            for (const auto& a : ctx.query->atoms) {
                if (a.symbol != dc.guard) continue;
                if (detail::vars_at(a, dc.xs_pos) == inst.xs &&
                    detail::vars_at(a, dc.ys_pos) == inst.ys) { atom = &a; break; }
            }
            if (!atom) throw certificate_error("init_measures: no atom matches instance");
            for (size_t p = 0; p < atom->vars.size(); p++)
                rename[guard.schema().vars().at(p)] = atom->vars[p];
        }
        auto renamed = [&](const std::set<Variable>& cols) {
            // project the guard onto cols, then rename columns to query variables
            Relation proj = project(guard, cols);
            std::vector<Variable> newvars;
            for (const auto& v : proj.schema().vars()) newvars.push_back(rename.at(v));
            return Relation{Schema(newvars), proj.tuples()};
        };

        TermState st;
        st.term = sc.term;
        bool is_lk_uncond_part = dc.lk > 0 && sc.term.unconditional() &&
                                 sc.term.ys == ctx.vt.set_of(inst.xs) && !inst.xs.empty();
        if (dc.lk == 0 && dc.xs_pos.empty()) {
            // cardinality: uniform over the projection
            Relation proj = renamed(ys);
            WeightedRelation wr{proj.schema(), {}};
            Rational m = Rational(1) / Rational(M);
            for (const auto& t : proj.tuples()) wr.set(t, m);
            st.payload = std::move(wr);
            st.lineage = {st.term};
        } else if (is_lk_uncond_part) {
            // p_X(x) = deg(Y|X=x)^k / M over the X-projection
            auto degs = degree_map(guard, ys, xs);
            Relation proj = renamed(xs);
            WeightedRelation wr{proj.schema(), {}};
            // degree_map keys are over sorted guard xs; proj columns are renamed sorted
            for (const auto& [binding, d] : degs) {
                Tuple t = binding;
                wr.set(t, Rational(integer_pow(Integer(d), dc.lk)) / Rational(M));
            }
            st.payload = std::move(wr);
            st.lineage = {st.term};
        } else {
            // degree or lk-norm conditional part: 1/deg per binding, keyed on X
            std::set<Variable> cols = xs;
            cols.insert(ys.begin(), ys.end());
            Relation proj = project(guard, cols);
            auto degs = degree_map(guard, ys, xs);
            auto xi = detail::positions(proj.schema(), detail::sorted_vars(xs));
            std::vector<Variable> newvars, key_vars;
            for (const auto& v : proj.schema().vars()) newvars.push_back(rename.at(v));
            for (const auto& v : detail::sorted_vars(xs)) key_vars.push_back(rename.at(v));
            WeightedRelation wr{Schema(newvars), key_vars};
            for (const auto& t : proj.tuples()) {
                size_t d = degs.at(detail::extract(t, xi));
                wr.set(t, Rational(1) / Rational(static_cast<long>(d)));
            }
            st.payload = std::move(wr);
            if (sc.term.unconditional()) st.lineage = {st.term};
        }
        if (!st.payload.mass_laws_hold())
            throw certificate_error("init_measures: initial measure violates the mass law (data "
                                    "does not satisfy the statistics?)");
        out.push_back(std::move(st));
    }
    return out;
}

}  // namespace panda
