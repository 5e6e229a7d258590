#pragma once

//==========================================================================================
// Integral Shannon-flow inequalities and their constructive proofs.
//
// An integral flow is rewritten in identity form: a multiset of unconditional target
// terms equals a multiset of source terms minus a multiset of basic-inequality
// expansions, exactly, as formal sums over subset coordinates. The proof-sequence
// construction repeatedly picks an unconditional source and resolves how its +h(W)
// occurrence cancels, emitting decomposition / composition / monotonicity /
// submodularity steps until no target is left. The reset operation drops one
// unconditional source from an identity and follows the same cancellation chain,
// losing at most one target.
//==========================================================================================

#include <algorithm>
#include <cassert>
#include <optional>
#include <sstream>
#include <vector>

#include "panda/bounds.hpp"

namespace panda {

struct IntegralFlow {
    std::vector<VarSet> bags;
    std::vector<Integer> lambda;                  // per bag
    std::vector<Integer> w;                       // per constraint instance
    std::map<BasicInequality, Integer> witness;
    Integer scale;                                // L = scaled ||lambda||_1
};

// Scale a rational flow by the least common denominator of all its coefficients. For an
// lk-norm source the unconditional part enters with weight w/k, so k joins the
// denominator set and the scaled w stays divisible by k.
inline IntegralFlow to_integral(const ShannonFlowInequality& f, const WidthContext& ctx) {
    Integer lcm(1);
    auto fold = [&](const Rational& r) {
        Integer d = denominator(r);
        lcm = boost::multiprecision::lcm(lcm, d);
    };
    for (const auto& l : f.lambda) fold(l);
    for (size_t c = 0; c < f.w.size(); c++) {
        fold(f.w[c]);
        const auto& dc = ctx.stats.constraints[ctx.instances[c].constraint_index];
        if (dc.lk > 0) fold(f.w[c] / Integer(dc.lk));
    }
    for (const auto& [bi, m] : f.witness) fold(m);

    IntegralFlow out;
    out.bags = f.bags;
    for (const auto& l : f.lambda) out.lambda.push_back(numerator(l * lcm));
    for (const auto& w : f.w) out.w.push_back(numerator(w * lcm));
    for (const auto& [bi, m] : f.witness) {
        Integer im = numerator(m * lcm);
        if (im != 0) out.witness[bi] = im;
    }
    out.scale = 0;
    for (const auto& l : out.lambda) out.scale += l;
    return out;
}

// One unit source term, remembering which statistic instance it came from
// (SIZE_MAX marks terms introduced by reset chains).
struct SourceCopy {
    Term term;
    size_t instance = SIZE_MAX;

    friend bool operator<(const SourceCopy& a, const SourceCopy& b) {
        if (!(a.term == b.term)) return a.term < b.term;
        return a.instance < b.instance;
    }
    friend bool operator==(const SourceCopy& a, const SourceCopy& b) {
        return a.term == b.term && a.instance == b.instance;
    }
};

struct Identity {
    std::vector<VarSet> targets;           // unit multiset, kept sorted
    std::vector<SourceCopy> sources;       // unit multiset, kept sorted
    std::vector<BasicInequality> witnesses;  // unit multiset, kept sorted

    void normalize() {
        std::sort(targets.begin(), targets.end(), VarSetLess{});
        std::sort(sources.begin(), sources.end());
        std::sort(witnesses.begin(), witnesses.end());
    }

    // targets = sources - sum of witness expansions, coordinatewise
    bool valid() const {
        FormalSum s;
        for (VarSet t : targets) s.add(t, 1);
        for (const auto& sc : sources) s.add_term(sc.term, -1);
        for (const auto& bi : witnesses) s.add_basic(bi, 1);
        return s.zero();
    }
};

// Unit-expand an integral flow: coefficient k becomes k copies. An lk-norm instance with
// weight w contributes w copies of h(Y|X) and w/k copies of h(X).
inline Identity identity_form(const IntegralFlow& f, const WidthContext& ctx) {
    Identity id;
    auto copies = [](const Integer& n) { return n.convert_to<long>(); };
    for (size_t i = 0; i < f.bags.size(); i++)
        for (long k = 0; k < copies(f.lambda[i]); k++) id.targets.push_back(f.bags[i]);
    for (size_t c = 0; c < f.w.size(); c++) {
        if (f.w[c] == 0) continue;
        const auto& inst = ctx.instances[c];
        const auto& dc = ctx.stats.constraints[inst.constraint_index];
        VarSet xs = ctx.vt.set_of(inst.xs), ys = ctx.vt.set_of(inst.ys);
        for (long k = 0; k < copies(f.w[c]); k++) id.sources.push_back({{ys, xs}, c});
        if (dc.lk > 0 && xs != 0) {
            if (f.w[c] % Integer(dc.lk) != 0)
                throw certificate_error("identity_form: lk weight not divisible by k");
            for (long k = 0; k < copies(f.w[c] / Integer(dc.lk)); k++)
                id.sources.push_back({{xs, 0}, c});
        }
    }
    for (const auto& [bi, m] : f.witness)
        for (long k = 0; k < copies(m); k++) id.witnesses.push_back(bi);
    id.normalize();
    if (!id.valid())
        throw certificate_error("identity_form: formal-sum identity check failed");
    return id;
}

// Proof steps, per kind:
//   decomposition:  h(x|y together) -> h(x) + h(y|x)        fields x, y
//   composition:    h(x) + h(y|x) -> h(xy)                  fields x, y
//   monotonicity:   h(xy) -> h(x)                           fields x, y (y dropped)
//   submodularity:  h(y|x) -> h(y|xz)                       fields x, y, z
struct ProofStep {
    enum Kind { decomposition, composition, monotonicity, submodularity };
    Kind kind;
    VarSet x = 0, y = 0, z = 0;
};

using ProofSequence = std::vector<ProofStep>;

inline std::string render_step(const ProofStep& s, const VarTable& vt) {
    auto h = [&](VarSet a, VarSet b = 0) {
        return b ? "h(" + vt.render(a) + "|" + vt.render(b) + ")" : "h(" + vt.render(a) + ")";
    };
    switch (s.kind) {
        case ProofStep::decomposition: return h(s.x | s.y) + " -> " + h(s.x) + " + " + h(s.y, s.x);
        case ProofStep::composition: return h(s.x) + " + " + h(s.y, s.x) + " -> " + h(s.x | s.y);
        case ProofStep::monotonicity: return h(s.x | s.y) + " -> " + h(s.x);
        case ProofStep::submodularity: return h(s.y, s.x) + " -> " + h(s.y, s.x | s.z);
    }
    return "";
}

namespace detail {

// multiset helpers over sorted vectors
template <typename T, typename Less>
bool multiset_remove(std::vector<T>& v, const T& x, Less less) {
    auto it = std::lower_bound(v.begin(), v.end(), x, less);
    if (it == v.end() || less(x, *it)) return false;
    v.erase(it);
    return true;
}
template <typename T, typename Less>
void multiset_insert(std::vector<T>& v, const T& x, Less less) {
    v.insert(std::upper_bound(v.begin(), v.end(), x, less), x);
}

inline bool term_less(const Term& a, const Term& b) { return a < b; }

}  // namespace detail

// Construct a proof sequence for a valid identity. Cancellation priority: target copy,
// then composition against a conditional source, then a submodularity witness, then a
// monotonicity witness; ties within a rule by canonical term order.
inline ProofSequence construct_proof_sequence(Identity id) {
    if (!id.valid()) throw certificate_error("construct_proof_sequence: invalid identity");
    ProofSequence seq;
    auto term_l = detail::term_less;
    auto vs_l = VarSetLess{};

    auto remove_source_term = [&](const Term& t) {
        for (auto it = id.sources.begin(); it != id.sources.end(); ++it) {
            if (it->term == t) { id.sources.erase(it); return; }
        }
        throw certificate_error("construct_proof_sequence: missing source term");
    };
    auto add_source = [&](const Term& t) {
        if (t.ys == 0) return;  // h({}) contributes nothing
        detail::multiset_insert(id.sources, SourceCopy{t, SIZE_MAX},
                                [](const SourceCopy& a, const SourceCopy& b) { return a < b; });
    };

    size_t guard = 4 * (id.sources.size() + id.targets.size()) + 8 * id.witnesses.size() + 16;
    while (!id.targets.empty()) {
        if (guard-- == 0)
            throw certificate_error("construct_proof_sequence: no progress (corrupted identity)");

        // unconditional sources in canonical order
        std::vector<Term> uncond;
        for (const auto& sc : id.sources)
            if (sc.term.unconditional()) uncond.push_back(sc.term);
        if (uncond.empty())
            throw certificate_error("construct_proof_sequence: no unconditional source left");

        bool done = false;

        // (a) a source that is itself a target: cancel both, no step
        for (const auto& w : uncond) {
            if (detail::multiset_remove(id.targets, w.ys, vs_l)) {
                remove_source_term(w);
                done = true;
                break;
            }
        }
        if (done) continue;

        // (c) a conditional source h(B|W): compose
        for (const auto& w : uncond) {
            const SourceCopy* cond = nullptr;
            for (const auto& sc : id.sources)
                if (sc.term.xs == w.ys && !(sc.term == w)) { cond = &sc; break; }
            if (!cond) continue;
            Term ct = cond->term;
            seq.push_back({ProofStep::composition, w.ys, ct.ys, 0});
            remove_source_term(ct);
            remove_source_term(w);
            add_source({w.ys | ct.ys, 0});
            done = true;
            break;
        }
        if (done) continue;

        // (b) a submodularity witness whose -h(AB) or -h(AC) cancels W:
        //     decompose h(W) -> h(A) + h(leg|A), then condition h(leg|A) -> h(leg|A other)
        for (const auto& w : uncond) {
            const BasicInequality* hit = nullptr;
            VarSet leg = 0, other = 0;
            for (const auto& bi : id.witnesses) {
                if (bi.kind != BasicInequality::submodularity) continue;
                if ((bi.a | bi.b) == w.ys) { hit = &bi; leg = bi.b; other = bi.c; break; }
                if ((bi.a | bi.c) == w.ys) { hit = &bi; leg = bi.c; other = bi.b; break; }
            }
            if (!hit) continue;
            BasicInequality bi = *hit;
            if (bi.a != 0) seq.push_back({ProofStep::decomposition, bi.a, leg, 0});
            seq.push_back({ProofStep::submodularity, bi.a, leg, other});
            detail::multiset_remove(id.witnesses, bi,
                                    [](const BasicInequality& x, const BasicInequality& y) { return x < y; });
            remove_source_term(w);
            add_source({bi.a, 0});
            add_source({leg, bi.a | other});
            done = true;
            break;
        }
        if (done) continue;

        // (d) a monotonicity witness h(W) >= h(X)
        for (const auto& w : uncond) {
            const BasicInequality* hit = nullptr;
            for (const auto& bi : id.witnesses)
                if (bi.kind == BasicInequality::monotonicity && bi.a == w.ys) { hit = &bi; break; }
            if (!hit) continue;
            BasicInequality bi = *hit;
            seq.push_back({ProofStep::monotonicity, bi.b, bi.a & ~bi.b, 0});
            detail::multiset_remove(id.witnesses, bi,
                                    [](const BasicInequality& x, const BasicInequality& y) { return x < y; });
            remove_source_term(w);
            add_source({bi.b, 0});
            done = true;
            break;
        }
        if (!done)
            throw certificate_error("construct_proof_sequence: no cancellation found");
    }
    return seq;
}

// Replay a sequence against the identity's sources. True iff every step is well formed,
// its operands are present, and the target multiset is contained in the final multiset
// (unconsumed source residue may remain). A diagnostic lands in *why on failure.
inline bool verify_proof_sequence(const Identity& id, const ProofSequence& seq,
                                  std::string* why = nullptr) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    std::vector<Term> state;
    for (const auto& sc : id.sources) state.push_back(sc.term);
    std::sort(state.begin(), state.end());
    auto take = [&](const Term& t) {
        auto it = std::lower_bound(state.begin(), state.end(), t);
        if (it == state.end() || !(*it == t)) return false;
        state.erase(it);
        return true;
    };
    auto put = [&](const Term& t) {
        if (t.ys == 0) return;
        state.insert(std::upper_bound(state.begin(), state.end(), t), t);
    };
    for (size_t i = 0; i < seq.size(); i++) {
        const auto& s = seq[i];
        std::string where = "step " + std::to_string(i + 1);
        switch (s.kind) {
            case ProofStep::decomposition:
                if (s.x == 0 || (s.x & s.y)) return fail(where + ": malformed decomposition");
                if (!take({s.x | s.y, 0})) return fail(where + ": operand missing");
                put({s.x, 0});
                put({s.y, s.x});
                break;
            case ProofStep::composition:
                if (s.x & s.y) return fail(where + ": malformed composition");
                if (!take({s.x, 0})) return fail(where + ": unconditional operand missing");
                if (!take({s.y, s.x})) return fail(where + ": conditional operand missing");
                put({s.x | s.y, 0});
                break;
            case ProofStep::monotonicity:
                if (s.x & s.y) return fail(where + ": malformed monotonicity");
                if (!take({s.x | s.y, 0})) return fail(where + ": operand missing");
                put({s.x, 0});
                break;
            case ProofStep::submodularity:
                if ((s.x & s.y) || (s.z & s.y)) return fail(where + ": malformed submodularity");
                if (!take({s.y, s.x})) return fail(where + ": operand missing");
                put({s.y, s.x | s.z});
                break;
        }
    }
    // every target copy must be present in the final multiset
    std::vector<Term> want;
    for (VarSet t : id.targets) want.push_back({t, 0});
    std::sort(want.begin(), want.end());
    auto rest = state;
    for (const auto& t : want) {
        auto it = std::lower_bound(rest.begin(), rest.end(), t);
        if (it == rest.end() || !(*it == t))
            return fail("final multiset is missing a target copy");
        rest.erase(it);
    }
    return true;
}

struct ResetResult {
    Identity residual;
    std::optional<VarSet> lost_target;
};

// Drop one copy of an unconditional source term and repair the identity, losing at most
// one target. The cancellation chain mirrors the proof-sequence cases: a target copy is
// removed outright; a submodularity leg promotes the drop to h(ABC) and leaves a
// monotonicity on the other leg; a conditional source h(B|drop) merges into dropping
// h(drop B); a monotonicity witness forwards the drop to its smaller side.
inline ResetResult reset(const Identity& id, const Term& drop) {
    if (!drop.unconditional()) throw argument_error("reset: drop term must be unconditional");
    ResetResult out;
    out.residual = id;
    Identity& r = out.residual;

    bool found = false;
    for (auto it = r.sources.begin(); it != r.sources.end(); ++it)
        if (it->term == drop) { r.sources.erase(it); found = true; break; }
    if (!found) throw argument_error("reset: term is not an unconditional source of the identity");

    VarSet d = drop.ys;
    auto bi_less = [](const BasicInequality& x, const BasicInequality& y) { return x < y; };
    size_t guard = 2 * (r.sources.size() + r.witnesses.size()) + 4;
    while (d != 0) {
        if (guard-- == 0) throw certificate_error("reset: cancellation chain does not terminate");
        // (i) d is a target
        if (detail::multiset_remove(r.targets, d, VarSetLess{})) {
            out.lost_target = d;
            break;
        }
        // (ii) a submodularity witness with AB == d or AC == d
        const BasicInequality* sub_hit = nullptr;
        VarSet other = 0;
        for (const auto& bi : r.witnesses) {
            if (bi.kind != BasicInequality::submodularity) continue;
            if ((bi.a | bi.b) == d) { sub_hit = &bi; other = bi.c; break; }
            if ((bi.a | bi.c) == d) { sub_hit = &bi; other = bi.b; break; }
        }
        if (sub_hit) {
            BasicInequality bi = *sub_hit;
            detail::multiset_remove(r.witnesses, bi, bi_less);
            // keep the other leg as a monotonicity h(A other) >= h(A)
            detail::multiset_insert(r.witnesses, BasicInequality::mono(bi.a | other, bi.a), bi_less);
            d = bi.a | bi.b | bi.c;  // continue dropping h(ABC)
            continue;
        }
        // (iii) a conditional source h(B|d)
        const SourceCopy* cond_hit = nullptr;
        for (const auto& sc : r.sources)
            if (sc.term.xs == d) { cond_hit = &sc; break; }
        if (cond_hit) {
            VarSet next = d | cond_hit->term.ys;
            for (auto it = r.sources.begin(); it != r.sources.end(); ++it)
                if (&*it == cond_hit) { r.sources.erase(it); break; }
            d = next;
            continue;
        }
        // (iv) a monotonicity witness h(d) >= h(X)
        const BasicInequality* mono_hit = nullptr;
        for (const auto& bi : r.witnesses)
            if (bi.kind == BasicInequality::monotonicity && bi.a == d) { mono_hit = &bi; break; }
        if (mono_hit) {
            BasicInequality bi = *mono_hit;
            detail::multiset_remove(r.witnesses, bi, bi_less);
            d = bi.b;
            continue;
        }
        throw certificate_error("reset: no cancellation found for " + std::to_string(d));
    }
    r.normalize();
    if (!r.valid()) throw certificate_error("reset: residual identity check failed");
    return out;
}

// Human-readable integral inequality, zero-coefficient entries omitted.
inline std::string render_integral(const IntegralFlow& f, const WidthContext& ctx) {
    std::ostringstream os;
    auto coeff = [&](std::ostringstream& o, const Integer& k, bool& first) {
        if (!first) o << " + ";
        first = false;
        if (k != 1) o << k.str() << "*";
    };
    bool first = true;
    for (size_t i = 0; i < f.bags.size(); i++) {
        if (f.lambda[i] == 0) continue;
        coeff(os, f.lambda[i], first);
        os << "h(" << ctx.vt.render(f.bags[i]) << ")";
    }
    if (first) os << "0";
    os << " <= ";
    first = true;
    for (size_t c = 0; c < f.w.size(); c++) {
        if (f.w[c] == 0) continue;
        const auto& inst = ctx.instances[c];
        const auto& dc = ctx.stats.constraints[inst.constraint_index];
        VarSet xs = ctx.vt.set_of(inst.xs), ys = ctx.vt.set_of(inst.ys);
        coeff(os, f.w[c], first);
        os << render_term({ys, xs}, ctx.vt);
        if (dc.lk > 0 && xs != 0) {
            Integer part = f.w[c] / Integer(dc.lk);
            if (part != 0) {
                coeff(os, part, first);
                os << render_term({xs, 0}, ctx.vt);
            }
        }
    }
    if (first) os << "0";
    return os.str();
}

}  // namespace panda
