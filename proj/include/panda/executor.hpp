#pragma once

//==========================================================================================
// Disjunctive-rule execution by proof-sequence interpretation over sub-probability
// measures, and the static / adaptive conjunctive-query evaluators on top of it.
//
// A branch interprets one proof sequence over one database. Steps transform term states:
// decomposition splits a joint measure into marginal and conditional, submodularity
// re-keys a conditional (pure bookkeeping), monotonicity marginalizes, composition joins
// and multiplies. Composition is the only step that can push a weight below the 1/B
// threshold. Sub-threshold tuples at a composition whose result is consumed downstream
// spawn an overflow branch: the branch's identity is reset on the original unconditional
// sources absorbed into the composed term, the remaining source guards are semijoined
// with the overflow projections, and the residual runs from scratch on that restricted
// data. Sub-threshold tuples at a finished target copy are dropped outright: the
// certifying flow guarantees some other target copy keeps them. Results that feed
// nothing are left untruncated.
//==========================================================================================

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "panda/csv.hpp"
#include "panda/measures.hpp"
#include "panda/oracle.hpp"
#include "panda/proof.hpp"
#include "panda/yannakakis.hpp"

namespace panda {

struct unbounded_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExecutionReport {
    SizeBound bound;
    std::map<VarSet, size_t> output_sizes;
    size_t max_intermediate = 0;
    size_t steps_executed = 0;
    size_t branches_spawned = 0;
    size_t overflow_tuples = 0;   // tuples routed to overflow branches
    size_t certified_drops = 0;   // tuples dropped at finished target copies
    std::vector<std::string> log;
};

// step primitives ------------------------------------------------------------------------

inline std::pair<TermState, TermState> apply_decomposition(const TermState& s, VarSet x, VarSet y,
                                                           const VarTable& vt) {
    if (!(s.term == Term{x | y, 0})) throw plan_error("decomposition: operand mismatch");
    auto xcols = detail::sorted_vars(vt.vars_of(x));
    auto xidx = detail::positions(s.payload.schema(), xcols);
    std::map<Tuple, Rational> sums;
    for (const auto& [t, m] : s.payload.rows()) sums[detail::extract(t, xidx)] += m;

    TermState marginal;
    marginal.term = {x, 0};
    marginal.lineage = s.lineage;
    WeightedRelation mrel{Schema(xcols), {}};
    for (const auto& [t, m] : sums) mrel.set(t, m > 1 ? Rational(1) : m);
    marginal.payload = std::move(mrel);

    TermState conditional;
    conditional.term = {y, x};
    WeightedRelation crel{s.payload.schema(), xcols};
    for (const auto& [t, m] : s.payload.rows()) crel.set(t, m / sums.at(detail::extract(t, xidx)));
    conditional.payload = std::move(crel);

    return {std::move(marginal), std::move(conditional)};
}

inline void apply_submodularity(TermState& s, VarSet x, VarSet y, VarSet z) {
    if (!(s.term == Term{y, x})) throw plan_error("submodularity: operand mismatch");
    s.term = {y, x | z};  // the payload and its determining keys stay as they are
}

inline TermState apply_monotonicity(const TermState& s, VarSet x, VarSet y, const VarTable& vt) {
    if (!(s.term == Term{x | y, 0})) throw plan_error("monotonicity: operand mismatch");
    TermState out;
    out.term = {x, 0};
    out.lineage = s.lineage;
    auto xcols = detail::sorted_vars(vt.vars_of(x));
    auto xidx = detail::positions(s.payload.schema(), xcols);
    std::map<Tuple, Rational> sums;
    for (const auto& [t, m] : s.payload.rows()) sums[detail::extract(t, xidx)] += m;
    WeightedRelation rel{Schema(xcols), {}};
    for (const auto& [t, m] : sums) rel.set(t, m > 1 ? Rational(1) : m);
    out.payload = std::move(rel);
    return out;
}

struct CompositionResult {
    TermState state;      // tuples kept in the branch
    Relation overflow;    // sub-threshold tuples (empty schema-only when none)
    size_t overflow_count = 0;
};

// truncate: 0 = keep everything, 1 = spill sub-threshold tuples into `overflow`
inline CompositionResult apply_composition(const TermState& a, const TermState& c, VarSet x,
                                           VarSet y, const VarTable& vt, const SizeBound& bound,
                                           bool truncate) {
    if (!(a.term == Term{x, 0})) throw plan_error("composition: unconditional operand mismatch");
    if (!(c.term == Term{y, x})) throw plan_error("composition: conditional operand mismatch");
    auto outcols = detail::sorted_vars(vt.vars_of(x | y));
    CompositionResult res;
    res.state.term = {x | y, 0};
    // the reset chain follows the unconditional operand's ancestry only; the conditional
    // side keeps its own sources alive in the residual (the heavy side re-derives them)
    res.state.lineage = a.lineage;
    WeightedRelation rel{Schema(outcols), {}};
    res.overflow = Relation{Schema(outcols)};

    // index conditional rows by their determining keys
    const auto& keys = c.payload.guard_keys();
    auto ckey = detail::positions(c.payload.schema(), keys);
    std::map<Tuple, std::vector<const std::pair<const Tuple, Rational>*>> index;
    for (const auto& row : c.payload.rows()) index[detail::extract(row.first, ckey)].push_back(&row);

    auto akey = detail::positions(a.payload.schema(), keys);
    for (const auto& [at, am] : a.payload.rows()) {
        auto it = index.find(detail::extract(at, akey));
        if (it == index.end()) continue;
        for (const auto* row : it->second) {
            Tuple t;
            t.reserve(outcols.size());
            for (const auto& v : outcols) {
                if (a.payload.schema().contains(v))
                    t.push_back(at[a.payload.schema().index_of(v)]);
                else
                    t.push_back(row->first[c.payload.schema().index_of(v)]);
            }
            Rational m = am * row->second;
            if (truncate && !bound.at_least_inverse(m)) {
                res.overflow.insert(std::move(t));
                res.overflow_count++;
            } else {
                rel.set(t, m > 1 ? Rational(1) : m);
            }
        }
    }
    res.state.payload = std::move(rel);
    return res;
}

// sequence plan --------------------------------------------------------------------------

// Deterministic binding of proof steps to state slots, plus what happens at each
// composition and which final states emit which target bags.
struct SequencePlan {
    enum class Action { none, spawn, certify_drop, inert };
    struct Step {
        size_t op1 = SIZE_MAX, op2 = SIZE_MAX;  // operand slots
        size_t out1 = SIZE_MAX, out2 = SIZE_MAX;  // produced slots
        Action action = Action::none;             // compositions only
    };
    std::vector<Step> steps;
    std::vector<std::pair<size_t, VarSet>> emitters;  // (slot, bag)
};

inline SequencePlan analyze_sequence(const Identity& id, const ProofSequence& seq) {
    SequencePlan plan;
    std::vector<Term> term;    // per slot
    std::vector<bool> alive;
    std::vector<size_t> consumed_at;  // step index or SIZE_MAX
    for (const auto& sc : id.sources) {
        term.push_back(sc.term);
        alive.push_back(true);
        consumed_at.push_back(SIZE_MAX);
    }
    auto find = [&](const Term& t) {
        for (size_t i = 0; i < term.size(); i++)
            if (alive[i] && term[i] == t) return i;
        throw plan_error("analyze_sequence: operand not found");
    };
    auto spawn_slot = [&](const Term& t) {
        term.push_back(t);
        alive.push_back(true);
        consumed_at.push_back(SIZE_MAX);
        return term.size() - 1;
    };
    for (size_t i = 0; i < seq.size(); i++) {
        const auto& s = seq[i];
        SequencePlan::Step ps;
        switch (s.kind) {
            case ProofStep::decomposition: {
                ps.op1 = find({s.x | s.y, 0});
                alive[ps.op1] = false;
                consumed_at[ps.op1] = i;
                ps.out1 = spawn_slot({s.x, 0});
                ps.out2 = spawn_slot({s.y, s.x});
                break;
            }
            case ProofStep::composition: {
                ps.op1 = find({s.x, 0});
                alive[ps.op1] = false;
                consumed_at[ps.op1] = i;
                ps.op2 = find({s.y, s.x});
                alive[ps.op2] = false;
                consumed_at[ps.op2] = i;
                ps.out1 = spawn_slot({s.x | s.y, 0});
                break;
            }
            case ProofStep::monotonicity: {
                ps.op1 = find({s.x | s.y, 0});
                alive[ps.op1] = false;
                consumed_at[ps.op1] = i;
                if (s.x != 0) ps.out1 = spawn_slot({s.x, 0});
                break;
            }
            case ProofStep::submodularity: {
                ps.op1 = find({s.y, s.x});
                term[ps.op1] = {s.y, s.x | s.z};  // in place
                break;
            }
        }
        plan.steps.push_back(ps);
    }
    // match target copies to remaining slots
    std::vector<bool> taken(term.size(), false);
    for (VarSet b : id.targets) {
        size_t hit = SIZE_MAX;
        for (size_t i = 0; i < term.size(); i++) {
            if (alive[i] && !taken[i] && term[i] == Term{b, 0}) { hit = i; break; }
        }
        if (hit == SIZE_MAX)
            throw certificate_error("analyze_sequence: target copy not produced by the sequence");
        taken[hit] = true;
        plan.emitters.push_back({hit, b});
    }
    // classify compositions
    for (size_t i = 0; i < seq.size(); i++) {
        if (seq[i].kind != ProofStep::composition) continue;
        size_t out = plan.steps[i].out1;
        if (consumed_at[out] != SIZE_MAX)
            plan.steps[i].action = SequencePlan::Action::spawn;
        else if (taken[out])
            plan.steps[i].action = SequencePlan::Action::certify_drop;
        else
            plan.steps[i].action = SequencePlan::Action::inert;
    }
    return plan;
}

// branch execution -----------------------------------------------------------------------

struct ExecHooks {
    // called after measure initialization and after every step of every branch
    std::function<void(const Database& branch_db, const Identity& branch_id,
                       const std::vector<std::optional<TermState>>& states)>
        after_step;
};

namespace detail {

struct BranchTask {
    Database db;
    Identity identity;
    size_t depth;
};

// Restrict the guards of the residual identity's sources to tuples compatible with the
// overflow set, projecting through every atom occurrence of the guard symbol.
inline Database restrict_guards(const Database& db, const Identity& residual,
                                const WidthContext& ctx, const Relation& overflow) {
    std::set<std::string> guards;
    for (const auto& sc : residual.sources) {
        if (sc.instance == SIZE_MAX) continue;
        guards.insert(ctx.stats.constraints[ctx.instances[sc.instance].constraint_index].guard);
    }
    Database out = db;
    for (const auto& g : guards) {
        const Relation& rel = db.at(g);
        Relation restricted{rel.schema()};
        for (const auto& atom : ctx.query->atoms) {
            if (atom.symbol != g) continue;
            // overflow columns shared with this occurrence, renamed to guard columns
            std::vector<Variable> ov, gv;
            for (size_t p = 0; p < atom.vars.size(); p++) {
                if (overflow.schema().contains(atom.vars[p])) {
                    ov.push_back(atom.vars[p]);
                    gv.push_back(rel.schema().vars().at(p));
                }
            }
            if (ov.empty()) {  // no shared columns: the whole guard stays
                restricted = rel;
                break;
            }
            Relation proj = project_ordered(overflow, ov);
            Relation keys{Schema(gv), proj.tuples()};
            for (const auto& t : semijoin(rel, keys).tuples()) restricted.insert(t);
        }
        out.relations[g] = std::move(restricted);
    }
    return out;
}

}  // namespace detail

struct DdrEvalResult {
    std::map<VarSet, Relation> outputs;
    ExecutionReport report;
};

// Evaluate a disjunctive rule with a verified integral certificate.
inline DdrEvalResult evaluate_ddr(const DisjunctiveRule& ddr, const WidthContext& ctx,
                                  const Database& db, const ShannonFlowInequality& flow,
                                  const IntegralFlow& integral, const Identity& identity,
                                  const ProofSequence& seq, const ExecHooks* hooks = nullptr) {
    DdrEvalResult res;
    res.report.bound = bound_from_flow(flow, integral, ctx);
    const SizeBound& bound = res.report.bound;
    for (const auto& [bag, _] : ddr.head_bags)
        res.outputs.emplace(bag, Relation{Schema(detail::sorted_vars(ctx.vt.vars_of(bag)))});

    size_t depth_cap = identity.sources.size() + identity.witnesses.size() + 1;

    std::vector<detail::BranchTask> tasks;
    tasks.push_back({db, identity, 0});
    bool first = true;
    while (!tasks.empty()) {
        detail::BranchTask task = std::move(tasks.back());
        tasks.pop_back();
        if (task.depth >= depth_cap)
            throw certificate_error("evaluate_ddr: reset recursion exceeds identity size");

        ProofSequence bseq = first ? seq : construct_proof_sequence(task.identity);
        first = false;
        SequencePlan plan = analyze_sequence(task.identity, bseq);

        std::vector<std::optional<TermState>> states;
        for (auto& st : init_measures(task.identity, task.db, ctx)) {
            res.report.max_intermediate = std::max(res.report.max_intermediate, st.payload.size());
            states.push_back(std::move(st));
        }
        if (hooks && hooks->after_step) hooks->after_step(task.db, task.identity, states);

        for (size_t i = 0; i < bseq.size(); i++) {
            const auto& s = bseq[i];
            const auto& ps = plan.steps[i];
            switch (s.kind) {
                case ProofStep::decomposition: {
                    auto [m, c] = apply_decomposition(*states[ps.op1], s.x, s.y, ctx.vt);
                    states[ps.op1].reset();
                    states.push_back(std::move(m));
                    states.push_back(std::move(c));
                    break;
                }
                case ProofStep::submodularity:
                    apply_submodularity(*states[ps.op1], s.x, s.y, s.z);
                    break;
                case ProofStep::monotonicity: {
                    TermState out = apply_monotonicity(*states[ps.op1], s.x, s.y, ctx.vt);
                    states[ps.op1].reset();
                    if (ps.out1 != SIZE_MAX) states.push_back(std::move(out));
                    break;
                }
                case ProofStep::composition: {
                    bool truncate = ps.action != SequencePlan::Action::inert;
                    auto comp = apply_composition(*states[ps.op1], *states[ps.op2], s.x, s.y,
                                                  ctx.vt, bound, truncate);
                    if (comp.overflow_count > 0) {
                        if (ps.action == SequencePlan::Action::spawn) {
                            res.report.overflow_tuples += comp.overflow_count;
                            // reset the branch identity on the absorbed unconditional sources
                            Identity rid = task.identity;
                            for (const Term& d : comp.state.lineage) {
                                bool present = false;
                                for (const auto& sc : rid.sources)
                                    if (sc.term == d) { present = true; break; }
                                if (present) rid = reset(rid, d).residual;
                            }
                            if (rid.targets.empty()) {
                                res.report.log.push_back(
                                    "overflow branch abandoned: reset chain consumed all targets");
                            } else {
                                Database db2 = detail::restrict_guards(task.db, rid, ctx, comp.overflow);
                                tasks.push_back({std::move(db2), std::move(rid), task.depth + 1});
                                res.report.branches_spawned++;
                            }
                        } else {  // certify_drop: another target copy keeps these tuples
                            res.report.certified_drops += comp.overflow_count;
                        }
                    }
                    states[ps.op1].reset();
                    states[ps.op2].reset();
                    states.push_back(std::move(comp.state));
                    break;
                }
            }
            res.report.steps_executed++;
            for (const auto& st : states)
                if (st) res.report.max_intermediate =
                            std::max(res.report.max_intermediate, st->payload.size());
            if (hooks && hooks->after_step) hooks->after_step(task.db, task.identity, states);
        }

        for (const auto& [slot, bag] : plan.emitters) {
            Relation& out = res.outputs.at(bag);
            for (const auto& [t, _] : states[slot]->payload.rows()) out.insert(t);
        }
    }

    for (const auto& [bag, rel] : res.outputs) res.report.output_sizes[bag] = rel.size();
    return res;
}

// Certificate pipeline for one rule: bound -> integral flow -> identity -> sequence.
struct DdrCertificate {
    ShannonFlowInequality flow;
    IntegralFlow integral;
    Identity identity;
    ProofSequence seq;
};

inline DdrCertificate certify_ddr(const std::vector<VarSet>& bags, const WidthContext& ctx) {
    BoundResult b = ddr_bound(bags, ctx);
    if (b.status != BoundStatus::bounded)
        throw unbounded_error("size bound is unbounded: statistics are insufficient");
    DdrCertificate cert;
    cert.flow = b.flow;
    cert.integral = to_integral(b.flow, ctx);
    cert.identity = identity_form(cert.integral, ctx);
    cert.seq = construct_proof_sequence(cert.identity);
    std::string why;
    if (!verify_proof_sequence(cert.identity, cert.seq, &why))
        throw certificate_error("constructed proof sequence failed verification: " + why);
    return cert;
}

inline DdrEvalResult evaluate_ddr(const DisjunctiveRule& ddr, const WidthContext& ctx,
                                  const Database& db, const ExecHooks* hooks = nullptr) {
    DdrCertificate cert = certify_ddr(ddr.head_sets(), ctx);
    return evaluate_ddr(ddr, ctx, db, cert.flow, cert.integral, cert.identity, cert.seq, hooks);
}

// static and adaptive CQ evaluation ------------------------------------------------------

// Atom filtering assignment: each atom goes to its first covering bag in canonical order.
inline std::map<size_t, std::vector<const Atom*>> assign_atoms(const ConjunctiveQuery& q,
                                                               const VarTable& vt,
                                                               const TreeDecomposition& td) {
    std::map<size_t, std::vector<const Atom*>> out;
    for (const auto& a : q.atoms) {
        VarSet av = vt.set_of(a.vars);
        bool placed = false;
        for (size_t i = 0; i < td.bags.size() && !placed; i++) {
            if (subset(av, td.bags[i])) {
                out[i].push_back(&a);
                placed = true;
            }
        }
        if (!placed) throw plan_error("atom " + a.symbol + " not covered by any bag");
    }
    return out;
}

// Rename a guard relation's columns into an atom occurrence's variables.
inline Relation atom_view(const Relation& guard, const Atom& atom) {
    Relation r{Schema(atom.vars), guard.tuples()};
    return r;
}

struct CqEvalResult {
    Relation answer;  // schema = sorted free variables
    ExecutionReport report;
    YannakakisStats yann;
};

inline CqEvalResult evaluate_cq_static(const ConjunctiveQuery& q, const WidthContext& ctx,
                                       const Database& db, const TreeDecomposition& td,
                                       const ExecHooks* hooks = nullptr) {
    if (!td_is_free_connex(td.bags, ctx.vt.set_of(q.free_set())))
        throw plan_error("static plan: tree decomposition is not free-connex for the head");
    CqEvalResult out;
    auto assignment = assign_atoms(q, ctx.vt, td);
    std::vector<BagNode> nodes;
    for (size_t i = 0; i < td.bags.size(); i++) {
        DisjunctiveRule one;
        one.head_bags = {{td.bags[i], "B"}};
        one.body = q.atoms;
        DdrEvalResult ev = evaluate_ddr(one, ctx, db, hooks);
        Relation bagrel = ev.outputs.at(td.bags[i]);
        auto it = assignment.find(i);
        if (it != assignment.end())
            for (const Atom* a : it->second) bagrel = semijoin(bagrel, atom_view(db.at(a->symbol), *a));
        nodes.push_back({ctx.vt.vars_of(td.bags[i]), std::move(bagrel)});
        // roll the reports up
        out.report.steps_executed += ev.report.steps_executed;
        out.report.branches_spawned += ev.report.branches_spawned;
        out.report.overflow_tuples += ev.report.overflow_tuples;
        out.report.certified_drops += ev.report.certified_drops;
        out.report.max_intermediate = std::max(out.report.max_intermediate, ev.report.max_intermediate);
    }
    out.answer = yannakakis(nodes, td.tree.edge_list(), q.free_set(), &out.yann);
    out.report.max_intermediate = std::max(out.report.max_intermediate, out.yann.max_intermediate);
    return out;
}

inline CqEvalResult evaluate_cq_adaptive(const ConjunctiveQuery& q, const WidthContext& ctx,
                                         const Database& db, const ExecHooks* hooks = nullptr) {
    auto tds = plan_tds(q, ctx.vt);
    size_t nontrivial = 0;
    for (const auto& td : tds) nontrivial += !td.trivial();
    if (nontrivial < 2) {
        // a single useful decomposition: fall back to the best static plan
        FhtwResult f = fhtw(q, ctx);
        if (f.status != BoundStatus::bounded)
            throw unbounded_error("adaptive evaluation: all plans unbounded");
        return evaluate_cq_static(q, ctx, db, f.tds[f.best_td], hooks);
    }

    CqEvalResult out;
    auto selectors = bag_selectors(tds);
    std::map<std::vector<VarSet>, DdrCertificate> certs;
    std::map<VarSet, Relation> bag_outputs;
    for (const auto& sel : selectors) {
        auto key = sel.distinct_bags();
        auto it = certs.find(key);
        if (it == certs.end()) it = certs.emplace(key, certify_ddr(key, ctx)).first;
        DisjunctiveRule ddr = build_ddr(q, ctx.vt, sel);
        DdrEvalResult ev = evaluate_ddr(ddr, ctx, db, it->second.flow, it->second.integral,
                                        it->second.identity, it->second.seq, hooks);
        for (auto& [bag, rel] : ev.outputs) {
            auto [bit, fresh] = bag_outputs.emplace(bag, rel);
            if (!fresh)
                for (const auto& t : rel.tuples()) bit->second.insert(t);
        }
        out.report.steps_executed += ev.report.steps_executed;
        out.report.branches_spawned += ev.report.branches_spawned;
        out.report.overflow_tuples += ev.report.overflow_tuples;
        out.report.certified_drops += ev.report.certified_drops;
        out.report.max_intermediate = std::max(out.report.max_intermediate, ev.report.max_intermediate);
        if (ev.report.bound.log_exponent > out.report.bound.log_exponent)
            out.report.bound = ev.report.bound;
    }

    // recombine: per tree decomposition, filter its bags and run Yannakakis; union up
    std::set<Variable> free = q.free_set();
    Relation answer{Schema({free.begin(), free.end()})};
    for (const auto& td : tds) {
        auto assignment = assign_atoms(q, ctx.vt, td);
        std::vector<BagNode> nodes;
        for (size_t i = 0; i < td.bags.size(); i++) {
            Relation bagrel = bag_outputs.at(td.bags[i]);
            auto it = assignment.find(i);
            if (it != assignment.end())
                for (const Atom* a : it->second)
                    bagrel = semijoin(bagrel, atom_view(db.at(a->symbol), *a));
            nodes.push_back({ctx.vt.vars_of(td.bags[i]), std::move(bagrel)});
        }
        YannakakisStats ys;
        Relation part = yannakakis(nodes, td.tree.edge_list(), free, &ys);
        out.yann.tuples_produced += ys.tuples_produced;
        out.yann.max_intermediate = std::max(out.yann.max_intermediate, ys.max_intermediate);
        for (const auto& t : part.tuples()) answer.insert(t);
    }
    out.answer = std::move(answer);
    out.report.max_intermediate = std::max(out.report.max_intermediate, out.yann.max_intermediate);
    for (const auto& [bag, rel] : bag_outputs) out.report.output_sizes[bag] = rel.size();
    return out;
}

}  // namespace panda
