#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"

using namespace panda;
using namespace fixtures;

namespace {

VarSet vs(const VarTable& vt, const std::string& chars) {
    std::set<Variable> s;
    for (char c : chars) s.insert(std::string(1, c));
    return vt.set_of(s);
}

// The worked 4-cycle certificate: h(XYZ) + h(YZW) <= h(XY) + h(YZ) + h(ZW), witnessed by
// the two submodularities h(XY) + h(YZ) >= h(Y) + h(XYZ) and h(Y) + h(ZW) >= h(YZW).
Identity square_identity(const WidthContext& ctx) {
    const VarTable& vt = ctx.vt;
    Identity id;
    id.targets = {vs(vt, "XYZ"), vs(vt, "YZW")};
    auto cid = [&](const std::string& ys) {
        for (size_t c = 0; c < ctx.instances.size(); c++) {
            std::set<Variable> got;
            for (char ch : ys) got.insert(std::string(1, ch));
            if (ctx.instances[c].ys == got) return c;
        }
        throw std::logic_error("no instance " + ys);
    };
    id.sources = {{{vs(vt, "XY"), 0}, cid("XY")},
                  {{vs(vt, "YZ"), 0}, cid("YZ")},
                  {{vs(vt, "ZW"), 0}, cid("ZW")}};
    id.witnesses = {BasicInequality::submod(vs(vt, "Y"), vs(vt, "X"), vs(vt, "Z")),
                    BasicInequality::submod(0, vs(vt, "Y"), vs(vt, "ZW"))};
    id.normalize();
    return id;
}

size_t unit_count(const Identity& id) {
    return id.targets.size() + id.sources.size();
}

}  // namespace

TEST_CASE("to_integral scales by the least common denominator", "[proofmachine]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    BoundResult r = ddr_bound({vs(ctx.vt, "XYZ"), vs(ctx.vt, "YZW")}, ctx);
    REQUIRE(r.status == BoundStatus::bounded);
    IntegralFlow f = to_integral(r.flow, ctx);
    CHECK(f.scale == 2);
    std::map<VarSet, Integer> wmap;
    for (size_t c = 0; c < f.w.size(); c++) wmap[ctx.vt.set_of(ctx.instances[c].ys)] += f.w[c];
    CHECK(wmap[vs(ctx.vt, "XY")] == 1);
    CHECK(wmap[vs(ctx.vt, "YZ")] == 1);
    CHECK(wmap[vs(ctx.vt, "ZW")] == 1);
    CHECK(wmap[vs(ctx.vt, "WX")] == 0);
    for (const auto& l : f.lambda) CHECK(l == 1);

    // an already integral flow is unchanged
    ShannonFlowInequality plain;
    plain.bags = {vs(ctx.vt, "XY")};
    plain.lambda = {Rational(1)};
    plain.w.assign(ctx.instances.size(), Rational(0));
    plain.w[0] = 1;
    IntegralFlow pf = to_integral(plain, ctx);
    CHECK(pf.scale == 1);
    CHECK(pf.w[0] == 1);

    // lambda = (1/3, 2/3), w = (1/3, 1) scales by 3
    ShannonFlowInequality thirds;
    thirds.bags = {vs(ctx.vt, "XYZ"), vs(ctx.vt, "YZW")};
    thirds.lambda = {Rational(1, 3), Rational(2, 3)};
    thirds.w.assign(ctx.instances.size(), Rational(0));
    thirds.w[0] = Rational(1, 3);
    thirds.w[1] = Rational(1);
    IntegralFlow tf = to_integral(thirds, ctx);
    CHECK(tf.scale == 3);
    CHECK(tf.lambda[0] == 1);
    CHECK(tf.lambda[1] == 2);
    CHECK(tf.w[0] == 1);
    CHECK(tf.w[1] == 3);
}

TEST_CASE("lk-norm weights stay divisible by k after scaling", "[proofmachine]") {
    ConjunctiveQuery q = parse_query("Q(X,Y) :- R(X,Y).");
    StatisticsSet s = parse_stats("mode numeric N=100\nnorm(R; 2; Y | X)^2 <= 64\n", q);
    WidthContext ctx = make_width_context(q, s);
    BoundResult r = polymatroid_bound(ctx.vt.full(), ctx);
    REQUIRE(r.status == BoundStatus::bounded);
    CHECK(r.value == 2 * ctx.stat_rows[0].rhs);  // h(XY) <= 2 (log M)/2
    IntegralFlow integral = to_integral(r.flow, ctx);
    REQUIRE(integral.w[0] % Integer(2) == 0);
    Identity id = identity_form(integral, ctx);
    CHECK(id.valid());
    // per scale unit: 2 copies of h(Y|X) and 1 copy of h(X)
    size_t cond = 0, uncond = 0;
    for (const auto& sc : id.sources) (sc.term.unconditional() ? uncond : cond)++;
    CHECK(cond == 2 * uncond);
    ProofSequence seq = construct_proof_sequence(id);
    CHECK(verify_proof_sequence(id, seq));
}

TEST_CASE("identity_form validates and unit-expands", "[proofmachine]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    Identity id = square_identity(ctx);
    CHECK(id.valid());

    // the same content coming out of the LP also checks out
    BoundResult r = ddr_bound({vs(ctx.vt, "XYZ"), vs(ctx.vt, "YZW")}, ctx);
    Identity lid = identity_form(to_integral(r.flow, ctx), ctx);
    CHECK(lid.valid());
    CHECK(lid.targets == id.targets);
    std::multiset<Term> lsrc, want;
    for (const auto& sc : lid.sources) lsrc.insert(sc.term);
    for (const auto& sc : id.sources) want.insert(sc.term);
    CHECK(lsrc == want);

    // a broken witness multiplier must be rejected
    IntegralFlow bad = to_integral(r.flow, ctx);
    REQUIRE(!bad.witness.empty());
    bad.witness.begin()->second += 1;
    CHECK_THROWS_AS(identity_form(bad, ctx), certificate_error);
}

TEST_CASE("the hand-written worked proof sequence verifies", "[proofmachine]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    const VarTable& vt = ctx.vt;
    Identity id = square_identity(ctx);
    ProofSequence table = {
        {ProofStep::decomposition, vs(vt, "Y"), vs(vt, "Z"), 0},   // h(YZ) -> h(Y) + h(Z|Y)
        {ProofStep::submodularity, vs(vt, "Y"), vs(vt, "Z"), vs(vt, "X")},  // h(Z|Y) -> h(Z|XY)
        {ProofStep::composition, vs(vt, "XY"), vs(vt, "Z"), 0},    // h(XY) + h(Z|XY) -> h(XYZ)
        {ProofStep::submodularity, 0, vs(vt, "Y"), vs(vt, "ZW")},  // h(Y) -> h(Y|ZW)
        {ProofStep::composition, vs(vt, "ZW"), vs(vt, "Y"), 0},    // h(ZW) + h(Y|ZW) -> h(YZW)
    };
    std::string why;
    CHECK(verify_proof_sequence(id, table, &why));

    // deleting any step breaks the replay
    for (size_t skip = 0; skip < table.size(); skip++) {
        ProofSequence broken;
        for (size_t i = 0; i < table.size(); i++)
            if (i != skip) broken.push_back(table[i]);
        CHECK(!verify_proof_sequence(id, broken));
    }

    // a no-op submodularity instance is fine
    ProofSequence with_noop = table;
    with_noop.insert(with_noop.begin() + 1, {ProofStep::submodularity, vs(vt, "Y"), vs(vt, "Z"), 0});
    CHECK(verify_proof_sequence(id, with_noop, &why));
}

TEST_CASE("construct_proof_sequence resolves the worked identity", "[proofmachine]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    Identity id = square_identity(ctx);
    ProofSequence seq = construct_proof_sequence(id);
    CHECK(seq.size() == 5);
    std::string why;
    CHECK(verify_proof_sequence(id, seq, &why));
    CHECK(seq.size() <= 4 * (unit_count(id) + id.witnesses.size()));

    // trivial identity: nothing to do
    Identity t;
    t.targets = {vs(ctx.vt, "X")};
    t.sources = {{{vs(ctx.vt, "X"), 0}, 0}};
    CHECK(construct_proof_sequence(t).empty());
}

TEST_CASE("triangle certificate replays to two target copies", "[proofmachine]") {
    ConjunctiveQuery tri = parse_query("Q(X,Y,Z) :- R(X,Y), S(Y,Z), T(Z,X).");
    WidthContext ctx = make_width_context(
        tri, parse_stats("mode symbolic\ncard(R) <= N\ncard(S) <= N\ncard(T) <= N\n", tri));
    BoundResult r = polymatroid_bound(ctx.vt.full(), ctx);
    REQUIRE(r.value == Rational(3, 2));
    IntegralFlow f = to_integral(r.flow, ctx);
    CHECK(f.scale == 2);
    Identity id = identity_form(f, ctx);
    CHECK(id.targets == std::vector<VarSet>{ctx.vt.full(), ctx.vt.full()});
    ProofSequence seq = construct_proof_sequence(id);
    std::string why;
    CHECK(verify_proof_sequence(id, seq, &why));
}

TEST_CASE("reset on the worked identity drops h(XY) into the chain certificate",
          "[proofmachine]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    const VarTable& vt = ctx.vt;
    Identity id = square_identity(ctx);

    ResetResult r = reset(id, {vs(vt, "XY"), 0});
    REQUIRE(r.lost_target.has_value());
    CHECK(*r.lost_target == vs(vt, "XYZ"));
    CHECK(r.residual.targets == std::vector<VarSet>{vs(vt, "YZW")});
    std::multiset<VarSet> srcs;
    for (const auto& sc : r.residual.sources) srcs.insert(sc.term.ys);
    CHECK(srcs == std::multiset<VarSet>{vs(vt, "YZ"), vs(vt, "ZW")});
    CHECK(r.residual.valid());
    // and the residual still proves itself
    ProofSequence seq = construct_proof_sequence(r.residual);
    CHECK(verify_proof_sequence(r.residual, seq));

    // dropping h(YZ) keeps at least one target and stays valid
    ResetResult r2 = reset(id, {vs(vt, "YZ"), 0});
    CHECK(r2.residual.targets.size() >= 1);
    CHECK(r2.residual.valid());
    for (const auto& sc : r2.residual.sources) CHECK(!(sc.term == Term{vs(vt, "YZ"), 0}));

    // dropping a source that is also a target empties the identity
    Identity both;
    both.targets = {vs(vt, "X")};
    both.sources = {{{vs(vt, "X"), 0}, 0}};
    ResetResult r3 = reset(both, {vs(vt, "X"), 0});
    CHECK(r3.residual.targets.empty());
    CHECK(r3.residual.sources.empty());
    CHECK(*r3.lost_target == vs(vt, "X"));

    CHECK_THROWS_AS(reset(id, Term{vs(vt, "XYZW"), 0}), argument_error);
    CHECK_THROWS_AS(reset(id, Term{vs(vt, "X"), vs(vt, "Y")}), argument_error);
}

TEST_CASE("constructed sequences verify across an LP-produced corpus",
          "[proofmachine][property]") {
    std::mt19937 rng(113);
    std::vector<std::string> queries = {
        "Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).",
        "Q(X,Y,Z) :- R(X,Y), S(Y,Z), T(Z,X).",
        "Q(A,E) :- R(A,B), S(B,C), T(C,D), U(D,E).",
        "Q(A,B,C) :- R(A,B), S(B,C), T(C,A), U(A,D).",
        "Q(X,Z) :- E(X,Y), E(Y,Z).",
    };
    size_t verified = 0;
    for (int round = 0; round < 12 && verified < 60; round++) {
        for (const auto& text : queries) {
            ConjunctiveQuery q = parse_query(text);
            std::ostringstream st;
            st << "mode numeric N=10000\n";
            std::set<std::string> seen;
            for (const auto& a : q.atoms) {
                if (!seen.insert(a.symbol).second) continue;
                st << "card(" << a.symbol << ") <= " << (2 + rng() % 9999) << "\n";
                if (rng() % 3 == 0)
                    st << "deg(" << a.symbol << "; " << a.vars.back() << " | " << a.vars.front()
                       << ") <= " << (1 + rng() % 50) << "\n";
            }
            WidthContext ctx = make_width_context(q, parse_stats(st.str(), q));
            SubwResult w = subw(q, ctx);
            if (w.status != BoundStatus::bounded) continue;
            std::set<std::vector<VarSet>> done;
            for (const auto& r : w.per_selector) {
                if (!done.insert(r.flow.bags).second) continue;
                IntegralFlow f = to_integral(r.flow, ctx);
                Identity id = identity_form(f, ctx);
                ProofSequence seq = construct_proof_sequence(id);
                std::string why;
                bool ok = verify_proof_sequence(id, seq, &why);
                INFO(why);
                REQUIRE(ok);
                CHECK(seq.size() <= 4 * (unit_count(id) + id.witnesses.size()));
                verified++;
            }
        }
    }
    CHECK(verified >= 60);
}

TEST_CASE("reset preserves validity wherever it applies", "[proofmachine][property]") {
    std::mt19937 rng(127);
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q));
    SubwResult w = subw(q, ctx);
    for (const auto& r : w.per_selector) {
        Identity id = identity_form(to_integral(r.flow, ctx), ctx);
        std::set<Term> uncond;
        for (const auto& sc : id.sources)
            if (sc.term.unconditional()) uncond.insert(sc.term);
        for (const auto& d : uncond) {
            ResetResult rr = reset(id, d);
            CHECK(rr.residual.valid());
            CHECK(rr.residual.targets.size() + 1 >= id.targets.size());
            for (const auto& sc : rr.residual.sources) CHECK(!(sc.term == d));
            if (!rr.residual.targets.empty()) {
                ProofSequence seq = construct_proof_sequence(rr.residual);
                CHECK(verify_proof_sequence(rr.residual, seq));
            }
        }
    }
}
