#pragma once

//==========================================================================================
// Information-theoretic cardinality bounds. The worst-case size bound of a disjunctive
// rule with head bags B and statistics S is
//
//     max { min_B h(B) : h polymatroid, h satisfies S }        (log_N units)
//
// solved here through its dual: find nonnegative weights (lambda over bags, w over
// statistics, multipliers over basic Shannon inequalities) with ||lambda||_1 = 1 such
// that   sum lambda_B h(B) <= sum w h(Y|X)   rearranges, witness included, into a formal
// identity over subset coordinates, minimizing sum w log_N(bound). Strong duality makes
// both optima equal, the optimal weights are the Shannon-flow certificate, and the row
// duals are the optimal polymatroid itself. Feasibility of both sides is re-checked
// exactly, so no value is ever trusted to the solver alone.
//
// fhtw and subw are the min-max and max-min aggregations of these per-bag / per-selector
// bounds over the free-connex tree decompositions of the query.
//==========================================================================================

#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "panda/entropy.hpp"
#include "panda/hypergraph.hpp"
#include "panda/simplex.hpp"

namespace panda {

// Shared setup for all bound computations on one query/statistics pair.
struct WidthContext {
    VarTable vt;
    const ConjunctiveQuery* query = nullptr;
    StatisticsSet stats;
    std::vector<ConstraintInstance> instances;
    std::vector<StatConstraint> stat_rows;
    std::vector<BasicInequality> basics;
    Integer N = 0;  // concrete N (numeric mode value, or base for symbolic execution)
};

inline WidthContext make_width_context(const ConjunctiveQuery& q, const StatisticsSet& s,
                                       std::optional<Integer> n_override = std::nullopt) {
    WidthContext ctx;
    ctx.vt = VarTable(q.all_vars());
    ctx.query = &q;
    ctx.stats = s;
    ctx.instances = instantiate_constraints(s, q);
    Integer N = 0;
    if (n_override) N = *n_override;
    else if (s.base_N) N = *s.base_N;
    ctx.N = N;
    ctx.stat_rows = stat_constraints(s, ctx.instances, ctx.vt, s.mode == StatsMode::numeric ? N : Integer(2));
    ctx.basics = polymatroid_constraints(ctx.vt.size());
    return ctx;
}

// The dual certificate of a bound: sum lambda_B h(B) <= sum w_c h(Y_c|X_c), valid for
// every polymatroid, witnessed by basic inequalities.
struct ShannonFlowInequality {
    std::vector<VarSet> bags;                      // distinct, canonical order
    std::vector<Rational> lambda;                  // per bag, ||lambda||_1 = 1
    std::vector<Rational> w;                       // per constraint instance in the context
    std::map<BasicInequality, Rational> witness;   // multiplier per basic inequality
};

// targets + witness expansions must rearrange exactly into the weighted sources
inline bool flow_identity_holds(const ShannonFlowInequality& f, const WidthContext& ctx) {
    FormalSum sum;
    for (size_t i = 0; i < f.bags.size(); i++) sum.add(f.bags[i], f.lambda[i]);
    for (const auto& [bi, mult] : f.witness) sum.add_basic(bi, mult);
    for (size_t c = 0; c < f.w.size(); c++) {
        if (f.w[c] == 0) continue;
        // subtract w_c times the constraint's left-hand side
        for (const auto& [coord, coeff] : ctx.stat_rows[c].lhs.coeffs())
            sum.add(coord, -f.w[c] * coeff);
    }
    return sum.zero();
}

enum class BoundStatus { bounded, unbounded };

struct BoundResult {
    BoundStatus status = BoundStatus::unbounded;
    Rational value;             // log_N units
    EntropyVector witness;      // optimal polymatroid (h coordinates)
    ShannonFlowInequality flow;
};

// Worst-case size bound of the disjunctive rule with the given head bags.
inline BoundResult ddr_bound(std::vector<VarSet> bags, const WidthContext& ctx) {
    BoundResult out;
    // duplicate heads collapse
    std::sort(bags.begin(), bags.end(), VarSetLess{});
    bags.erase(std::unique(bags.begin(), bags.end()), bags.end());
    if (bags.empty()) throw argument_error("ddr_bound: no head bags");

    size_t n = ctx.vt.size();
    size_t ncoords = (size_t(1) << n) - 1;

    // the (b, c) and (c, b) elemental submodularities expand identically; one column each
    std::vector<BasicInequality> basics;
    {
        std::set<BasicInequality> seen;
        for (const auto& bi : ctx.basics) {
            BasicInequality norm = bi.kind == BasicInequality::submodularity
                                       ? BasicInequality::submod(bi.a, bi.b, bi.c)
                                       : bi;
            if (seen.insert(norm).second) basics.push_back(norm);
        }
    }

    LinearProgram lp;
    // columns: w per stat row, lambda per bag, mu per basic inequality (all >= 0)
    std::vector<size_t> wcol, lcol, mcol;
    for (const auto& sc : ctx.stat_rows) wcol.push_back(lp.add_var(-sc.rhs));
    for (size_t i = 0; i < bags.size(); i++) lcol.push_back(lp.add_var(Rational(0)));
    for (size_t i = 0; i < basics.size(); i++) mcol.push_back(lp.add_var(Rational(0)));

    // one balance equation per nonempty coordinate:
    //   sum_c w_c lhs_c[X] - sum_B lambda_B [X == B] - sum_i mu_i E_i[X] = 0
    std::vector<size_t> coord_row(ncoords + 1, SIZE_MAX);
    for (VarSet x = 1; x <= ncoords; x++) coord_row[x] = lp.add_row(RowRel::eq, Rational(0));
    for (size_t c = 0; c < ctx.stat_rows.size(); c++)
        for (const auto& [coord, coeff] : ctx.stat_rows[c].lhs.coeffs())
            lp.add(coord_row[coord], wcol[c], coeff);
    for (size_t i = 0; i < bags.size(); i++) lp.add(coord_row[bags[i]], lcol[i], Rational(-1));
    for (size_t i = 0; i < basics.size(); i++) {
        FormalSum e;
        e.add_basic(basics[i], 1);
        for (const auto& [coord, coeff] : e.coeffs()) lp.add(coord_row[coord], mcol[i], -coeff);
    }
    // ||lambda||_1 = 1
    size_t lrow = lp.add_row(RowRel::eq, Rational(1));
    for (size_t i = 0; i < bags.size(); i++) lp.set(lrow, lcol[i], Rational(1));

    LpSolution sol = solve(lp);
    if (sol.status == LpStatus::infeasible) {
        out.status = BoundStatus::unbounded;  // no valid flow certificate exists
        return out;
    }
    if (sol.status != LpStatus::optimal)
        throw certificate_error("ddr_bound: unexpected solver status");

    out.status = BoundStatus::bounded;
    out.value = -sol.value;  // we maximized the negated objective

    out.flow.bags = bags;
    for (size_t i = 0; i < bags.size(); i++) out.flow.lambda.push_back(sol.primal[lcol[i]]);
    for (size_t c = 0; c < ctx.stat_rows.size(); c++) out.flow.w.push_back(sol.primal[wcol[c]]);
    for (size_t i = 0; i < basics.size(); i++) {
        Rational mu = sol.primal[mcol[i]];
        if (mu == 0) continue;
        out.flow.witness[basics[i]] += mu;
    }
    // the optimal polymatroid is the vector of coordinate-row duals
    for (VarSet x = 1; x <= ncoords; x++) {
        Rational h = -sol.dual[coord_row[x]];
        if (h != 0) out.witness[x] = h;
    }

    // Certify both sides independently of the solver: the flow identity (upper bound
    // valid for all polymatroids, at cost = value) and the witness feasibility (value
    // attained).
    if (!flow_identity_holds(out.flow, ctx))
        throw certificate_error("ddr_bound: extracted flow fails the identity check");
    Rational cost(0);
    for (size_t c = 0; c < out.flow.w.size(); c++) cost += out.flow.w[c] * ctx.stat_rows[c].rhs;
    if (cost != out.value)
        throw certificate_error("ddr_bound: flow cost does not match the optimum");
    if (!is_polymatroid(out.witness, n) || !satisfies_stats(out.witness, ctx.stat_rows))
        throw certificate_error("ddr_bound: optimal polymatroid witness infeasible");
    Rational attained;
    bool first = true;
    for (VarSet b : bags) {
        auto it = out.witness.find(b);
        Rational hb = it == out.witness.end() ? Rational(0) : it->second;
        if (first || hb < attained) { attained = hb; first = false; }
    }
    if (attained != out.value)
        throw certificate_error("ddr_bound: witness does not attain the optimum");
    return out;
}

// max h(target) over polymatroids satisfying the statistics
inline BoundResult polymatroid_bound(VarSet target, const WidthContext& ctx) {
    return ddr_bound({target}, ctx);
}

struct FhtwResult {
    BoundStatus status = BoundStatus::unbounded;
    Rational value;
    size_t best_td = 0;
    std::vector<TreeDecomposition> tds;
    std::vector<std::vector<Rational>> per_bag;  // per TD, per bag (meaningful when bounded)
    std::vector<bool> td_bounded;
};

inline FhtwResult fhtw(const ConjunctiveQuery& q, const WidthContext& ctx) {
    FhtwResult out;
    out.tds = enumerate_tds(q, ctx.vt);
    std::map<VarSet, BoundResult> bag_cache;
    bool any = false;
    for (size_t t = 0; t < out.tds.size(); t++) {
        const auto& td = out.tds[t];
        std::vector<Rational> costs;
        bool bounded = true;
        Rational worst(0);
        for (VarSet b : td.bags) {
            auto it = bag_cache.find(b);
            if (it == bag_cache.end()) it = bag_cache.emplace(b, polymatroid_bound(b, ctx)).first;
            if (it->second.status == BoundStatus::unbounded) { bounded = false; break; }
            costs.push_back(it->second.value);
            if (it->second.value > worst) worst = it->second.value;
        }
        out.per_bag.push_back(costs);
        out.td_bounded.push_back(bounded);
        if (!bounded) continue;
        if (!any || worst < out.value) {
            any = true;
            out.value = worst;
            out.best_td = t;
        }
    }
    out.status = any ? BoundStatus::bounded : BoundStatus::unbounded;
    return out;
}

struct SubwResult {
    BoundStatus status = BoundStatus::unbounded;
    Rational value;
    std::vector<TreeDecomposition> tds;
    std::vector<BagSelector> selectors;
    std::vector<BoundResult> per_selector;
};

// max over bag selectors of the per-selector DDR bound; LP results are shared between
// selectors that pick the same distinct bag set.
inline SubwResult subw_over(const std::vector<TreeDecomposition>& tds, const WidthContext& ctx) {
    SubwResult out;
    out.tds = tds;
    out.selectors = bag_selectors(tds);
    std::map<std::vector<VarSet>, BoundResult> cache;
    bool any = false;
    for (const auto& sel : out.selectors) {
        auto key = sel.distinct_bags();
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, ddr_bound(key, ctx)).first;
        out.per_selector.push_back(it->second);
        const auto& r = it->second;
        if (r.status == BoundStatus::unbounded) {
            out.status = BoundStatus::unbounded;  // one unbounded selector makes subw unbounded
            return out;
        }
        if (!any || r.value > out.value) {
            any = true;
            out.value = r.value;
        }
    }
    out.status = any ? BoundStatus::bounded : BoundStatus::unbounded;
    return out;
}

inline SubwResult subw(const ConjunctiveQuery& q, const WidthContext& ctx) {
    return subw_over(enumerate_tds(q, ctx.vt), ctx);
}

// The tree decompositions adaptive evaluation plans over: the nontrivial ones when at
// least two exist, everything enumerated otherwise.
inline std::vector<TreeDecomposition> plan_tds(const ConjunctiveQuery& q, const VarTable& vt) {
    auto tds = enumerate_tds(q, vt);
    std::vector<TreeDecomposition> nontrivial;
    for (const auto& td : tds)
        if (!td.trivial() || tds.size() == 1) nontrivial.push_back(td);
    if (nontrivial.size() >= 2) return nontrivial;
    return tds;
}

inline std::string render_flow(const ShannonFlowInequality& f, const WidthContext& ctx) {
    std::ostringstream os;
    bool first = true;
    for (size_t i = 0; i < f.bags.size(); i++) {
        if (f.lambda[i] == 0) continue;
        if (!first) os << " + ";
        first = false;
        if (f.lambda[i] != 1) os << rational_str(f.lambda[i]) << "*";
        os << "h(" << ctx.vt.render(f.bags[i]) << ")";
    }
    if (first) os << "0";
    os << " <= ";
    first = true;
    for (size_t c = 0; c < f.w.size(); c++) {
        if (f.w[c] == 0) continue;
        if (!first) os << " + ";
        first = false;
        if (f.w[c] != 1) os << rational_str(f.w[c]) << "*";
        const auto& inst = ctx.instances[c];
        Term t{ctx.vt.set_of(inst.ys), ctx.vt.set_of(inst.xs)};
        os << render_term(t, ctx.vt);
    }
    if (first) os << "0";
    return os.str();
}

}  // namespace panda
