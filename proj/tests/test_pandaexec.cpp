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

size_t instance_of(const WidthContext& ctx, const std::string& ys) {
    std::set<Variable> want;
    for (char c : ys) want.insert(std::string(1, c));
    for (size_t c = 0; c < ctx.instances.size(); c++)
        if (ctx.instances[c].ys == want && ctx.instances[c].xs.empty()) return c;
    throw std::logic_error("no instance " + ys);
}

DisjunctiveRule square_ddr(const ConjunctiveQuery& q, const VarTable& vt) {
    DisjunctiveRule ddr;
    ddr.body = q.atoms;
    ddr.head_bags = {{vs(vt, "XYZ"), "A11"}, {vs(vt, "YZW"), "A21"}};
    return ddr;
}

// Audit hook: mass laws after every step, and the branch measure invariant
// (product over states >= B^-L) for every fully present tuple of the branch body join.
struct Audit {
    const ConjunctiveQuery* q;
    const SizeBound* bound;
    size_t checked = 0;

    ExecHooks hooks() {
        ExecHooks h;
        h.after_step = [this](const Database& db, const Identity& id,
                              const std::vector<std::optional<TermState>>& states) {
            for (const auto& st : states)
                if (st) REQUIRE(st->payload.mass_laws_hold());
            Relation body = oracle::brute_body_join(q->atoms, db);
            if (body.size() > 500) return;
            for (const auto& t : body.tuples()) {
                Rational product(1);
                bool all_present = true;
                for (const auto& st : states) {
                    if (!st) continue;
                    Rational m = st->payload.at(body.schema(), t);
                    if (m == 0) { all_present = false; break; }
                    product *= m;
                }
                if (all_present) {
                    REQUIRE(bound->product_within_budget(product));
                    checked++;
                }
            }
        };
        return h;
    }
};

}  // namespace

TEST_CASE("bound_from_flow turns the square certificate into N^{3/2}", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(16));
    BoundResult r = ddr_bound({vs(ctx.vt, "XYZ"), vs(ctx.vt, "YZW")}, ctx);
    IntegralFlow f = to_integral(r.flow, ctx);
    SizeBound b = bound_from_flow(r.flow, f, ctx);
    CHECK(b.log_exponent == Rational(3, 2));
    CHECK(b.ceil_value() == 64);  // 16^{3/2}
    CHECK(b.at_least_inverse(Rational(1, 64)));
    CHECK(!b.at_least_inverse(Rational(1, 65)));

    // single-source flow w = 1 on card(R) <= N: B = N
    ShannonFlowInequality single;
    single.bags = {vs(ctx.vt, "XY")};
    single.lambda = {Rational(1)};
    single.w.assign(ctx.instances.size(), Rational(0));
    single.w[instance_of(ctx, "XY")] = 1;
    IntegralFlow fs = to_integral(single, ctx);
    SizeBound bs = bound_from_flow(single, fs, ctx);
    CHECK(bs.log_exponent == 1);
    CHECK(bs.ceil_value() == 16);

    // w = 0 everywhere: B = 1
    ShannonFlowInequality zero;
    zero.bags = {vs(ctx.vt, "XY")};
    zero.lambda = {Rational(1)};
    zero.w.assign(ctx.instances.size(), Rational(0));
    IntegralFlow fz = to_integral(zero, ctx);
    SizeBound bz = bound_from_flow(zero, fz, ctx);
    CHECK(bz.ceil_value() == 1);
}

TEST_CASE("init_measures builds the uniform, FD, and lk-norm measures", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db = hub_db(16);
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(16));
    BoundResult r = ddr_bound({vs(ctx.vt, "XYZ"), vs(ctx.vt, "YZW")}, ctx);
    Identity id = identity_form(to_integral(r.flow, ctx), ctx);
    auto states = init_measures(id, db, ctx);
    REQUIRE(states.size() == 3);
    for (const auto& st : states) {
        REQUIRE(st.term.unconditional());
        const Relation* guard = nullptr;
        if (st.term.ys == vs(ctx.vt, "XY")) guard = &db.at("R");
        if (st.term.ys == vs(ctx.vt, "YZ")) guard = &db.at("S");
        if (st.term.ys == vs(ctx.vt, "ZW")) guard = &db.at("T");
        REQUIRE(guard != nullptr);
        CHECK(st.payload.size() == guard->size());
        for (const auto& [t, m] : st.payload.rows()) CHECK(m == Rational(1, 16));
        CHECK(st.payload.mass_laws_hold());
    }

    // FD source: conditional measure identically 1
    ConjunctiveQuery qf = four_cycle_full();
    StatisticsSet fd = parse_stats("mode symbolic\ndeg(U; X | W) <= 1\n", qf);
    WidthContext fctx = make_width_context(qf, fd, Integer(16));
    Identity fid;
    fid.targets = {};
    fid.sources = {{{vs(fctx.vt, "X"), vs(fctx.vt, "W")}, 0}};
    auto fstates = init_measures(fid, example_db(), fctx);
    REQUIRE(fstates.size() == 1);
    for (const auto& [t, m] : fstates[0].payload.rows()) CHECK(m == 1);
    CHECK(fstates[0].payload.guard_keys() == std::vector<Variable>{"W"});

    // l2 source: p_X(x) * p_{Y|X}(y|x)^2 == 1/M for every tuple of the guard
    ConjunctiveQuery q1 = parse_query("Q(X,Y) :- R(X,Y).");
    Database db1;
    db1.relations["R"] = rel({"X", "Y"}, {{iv(1), iv(1)}, {iv(1), iv(2)}, {iv(2), iv(1)}});
    Integer m_pow = lknorm_pow(db1.at("R"), {"Y"}, {"X"}, 2);  // 2^2 + 1 = 5
    REQUIRE(m_pow == 5);
    StatisticsSet lk = parse_stats("mode numeric N=5\nnorm(R; 2; Y | X)^2 <= 5\n", q1);
    WidthContext lctx = make_width_context(q1, lk);
    Identity lid;
    lid.sources = {{{vs(lctx.vt, "X"), 0}, 0}, {{vs(lctx.vt, "Y"), vs(lctx.vt, "X")}, 0}};
    auto lstates = init_measures(lid, db1, lctx);
    REQUIRE(lstates.size() == 2);
    const auto& px = lstates[0].term.unconditional() ? lstates[0] : lstates[1];
    const auto& pyx = lstates[0].term.unconditional() ? lstates[1] : lstates[0];
    for (const auto& t : db1.at("R").tuples()) {
        Rational v = px.payload.at(db1.at("R").schema(), t) *
                     rational_pow(pyx.payload.at(db1.at("R").schema(), t), 2);
        CHECK(v == Rational(1, 5));
    }
}

TEST_CASE("decomposition, conditioning, and composition follow the measure rules",
          "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db = hub_db(16);
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(16));
    const VarTable& vt = ctx.vt;
    BoundResult r = ddr_bound({vs(vt, "XYZ"), vs(vt, "YZW")}, ctx);
    IntegralFlow f = to_integral(r.flow, ctx);
    SizeBound bound = bound_from_flow(r.flow, f, ctx);
    Identity id = identity_form(f, ctx);
    auto states = init_measures(id, db, ctx);
    TermState *pxy = nullptr, *pyz = nullptr;
    for (auto& st : states) {
        if (st.term.ys == vs(vt, "XY")) pxy = &st;
        if (st.term.ys == vs(vt, "YZ")) pyz = &st;
    }
    REQUIRE(pxy);
    REQUIRE(pyz);

    // h(YZ) -> h(Y) + h(Z|Y): marginal is deg/N, conditional is 1/deg
    auto [py, pzy] = apply_decomposition(*pyz, vs(vt, "Y"), vs(vt, "Z"), vt);
    CHECK(py.payload.mass_laws_hold());
    CHECK(pzy.payload.mass_laws_hold());
    auto degs = degree_map(db.at("S"), {"Z"}, {"Y"});
    for (const auto& [t, m] : py.payload.rows())
        CHECK(m == Rational(degs.at(t), 16));
    for (const auto& [t, m] : pzy.payload.rows()) {
        Tuple ykey = {t[0]};  // schema (Y,Z), key Y
        CHECK(m == Rational(1, Integer(degs.at(ykey))));
    }

    // h(Z|Y) -> h(Z|XY) is bookkeeping only
    TermState moved = pzy;
    apply_submodularity(moved, vs(vt, "Y"), vs(vt, "Z"), vs(vt, "X"));
    CHECK(moved.term.xs == vs(vt, "XY"));
    CHECK(moved.payload.rows() == pzy.payload.rows());

    // h(XY) + h(Z|XY) -> h(XYZ): kept tuples are exactly the light ones
    auto comp = apply_composition(*pxy, moved, vs(vt, "XY"), vs(vt, "Z"), vt, bound, true);
    CHECK(comp.state.payload.mass_laws_hold());
    Relation rs = join(db.at("R"), db.at("S"));
    size_t light = 0, heavy = 0;
    for (const auto& t : rs.tuples()) {
        Tuple ykey = {t[rs.schema().index_of("Y")]};
        (degs.at(ykey) <= 4 ? light : heavy)++;  // sqrt(16) = 4
    }
    CHECK(comp.state.payload.size() == light);
    CHECK(comp.overflow_count == heavy);
    for (const auto& [t, m] : comp.state.payload.rows()) {
        Tuple ykey = {t[comp.state.payload.schema().index_of("Y")]};
        CHECK(m == Rational(1, Integer(16) * degs.at(ykey)));
        CHECK(degs.at(ykey) <= 4);
    }
    for (const auto& t : comp.overflow.tuples()) {
        Tuple ykey = {t[comp.overflow.schema().index_of("Y")]};
        CHECK(degs.at(ykey) > 4);
    }

    // monotonicity on a single-tuple payload keeps measure 1 after capping
    TermState one;
    one.term = {vs(vt, "XY"), 0};
    WeightedRelation w1{Schema({"X", "Y"}), {}};
    w1.set({iv(1), iv(2)}, Rational(1));
    one.payload = w1;
    TermState projd = apply_monotonicity(one, vs(vt, "X"), vs(vt, "Y"), vt);
    REQUIRE(projd.payload.size() == 1);
    CHECK(projd.payload.rows().begin()->second == 1);
}

TEST_CASE("evaluate_ddr covers the example instance", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db = example_db();
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(12));
    DisjunctiveRule ddr = square_ddr(q, ctx.vt);
    DdrEvalResult ev = evaluate_ddr(ddr, ctx, db);
    CHECK(oracle::check_ddr_model(ddr, ctx.vt, db, ev.outputs).match);
    Integer cap = ev.report.bound.ceil_value();
    for (const auto& [bag, rel] : ev.outputs) CHECK(Integer(rel.size()) <= cap);
}

TEST_CASE("evaluate_ddr on the worst-case family stays within the bound", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    for (int n : {8, 16, 32}) {
        Database db = hub_db(n);
        WidthContext ctx = make_width_context(q, square_stats(q), Integer(n));
        REQUIRE(satisfies(db, ctx.stats, Integer(n)));
        DisjunctiveRule ddr = square_ddr(q, ctx.vt);

        Audit audit;
        audit.q = &q;
        DdrCertificate cert = certify_ddr(ddr.head_sets(), ctx);
        SizeBound bound = bound_from_flow(cert.flow, cert.integral, ctx);
        audit.bound = &bound;
        ExecHooks hooks = audit.hooks();
        DdrEvalResult ev = evaluate_ddr(ddr, ctx, db, cert.flow, cert.integral, cert.identity,
                                        cert.seq, &hooks);
        CHECK(oracle::check_ddr_model(ddr, ctx.vt, db, ev.outputs).match);
        Integer cap = ev.report.bound.ceil_value();
        for (const auto& [bag, rel] : ev.outputs) CHECK(Integer(rel.size()) <= cap);
        if (n >= 16) CHECK(ev.report.branches_spawned >= 1);  // the heavy side resets
        if (n <= 16) CHECK(audit.checked > 0);  // larger joins skip the exhaustive audit
    }
}

TEST_CASE("evaluate_ddr on an empty database produces nothing", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db;
    for (const auto& a : q.atoms) db.relations[a.symbol] = Relation{Schema(a.vars)};
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(4));
    DdrEvalResult ev = evaluate_ddr(square_ddr(q, ctx.vt), ctx, db);
    for (const auto& [bag, rel] : ev.outputs) CHECK(rel.empty());
    CHECK(ev.report.branches_spawned == 0);
}

TEST_CASE("greedy model size stays within the certificate bound", "[pandaexec][property]") {
    std::mt19937 rng(131);
    ConjunctiveQuery q = four_cycle();
    for (int round = 0; round < 15; round++) {
        Database db = random_db(rng, q, 30, 6);
        StatisticsSet s = infer_stats(db, q, 1);
        WidthContext ctx = make_width_context(q, s);
        DisjunctiveRule ddr = square_ddr(q, ctx.vt);
        BoundResult r = ddr_bound(ddr.head_sets(), ctx);
        REQUIRE(r.status == BoundStatus::bounded);
        IntegralFlow f = to_integral(r.flow, ctx);
        SizeBound b = bound_from_flow(r.flow, f, ctx);
        auto model = oracle::greedy_ddr_model(ddr, ctx.vt, db);
        for (const auto& [bag, rel] : model) CHECK(Integer(rel.size()) <= b.ceil_value());
    }
}

TEST_CASE("static evaluation matches the oracle on the example", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db = example_db();
    StatisticsSet s = infer_stats(db, q, 1);
    WidthContext ctx = make_width_context(q, s);
    auto tds = enumerate_tds(q, ctx.vt);
    for (size_t t = 0; t < tds.size(); t++) {
        CqEvalResult ev = evaluate_cq_static(q, ctx, db, tds[t]);
        CHECK(ev.answer == rel({"X", "Y"}, {{iv(1), sv("p")}, {iv(1), sv("q")}}));
    }

    // full query over the trivial decomposition: the three example output tuples
    ConjunctiveQuery qf = four_cycle_full();
    StatisticsSet sf = infer_stats(db, qf, 1);
    WidthContext fctx = make_width_context(qf, sf);
    TreeDecomposition trivial{{fctx.vt.full()}, JoinTree{{-1}}};
    CqEvalResult full = evaluate_cq_static(qf, fctx, db, trivial);
    CHECK(full.answer == project(oracle::brute_join(qf, db), qf.all_vars()));
    CHECK(full.answer.size() == 3);

    // single-atom full query: a copy of the relation
    ConjunctiveQuery one = parse_query("Q(X,Y) :- R(X,Y).");
    StatisticsSet s1 = infer_stats(db, one, 1);
    WidthContext c1 = make_width_context(one, s1);
    TreeDecomposition td1{{c1.vt.full()}, JoinTree{{-1}}};
    CqEvalResult ev1 = evaluate_cq_static(one, c1, db, td1);
    CHECK(project_ordered(ev1.answer, {"X", "Y"}) == db.at("R"));
}

TEST_CASE("adaptive evaluation matches the oracle on the example", "[pandaexec]") {
    Database db = example_db();
    for (auto* qt : {"Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).",
                     "Q(X,Y,Z,W) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X)."}) {
        ConjunctiveQuery q = parse_query(qt);
        StatisticsSet s = infer_stats(db, q, 1);
        WidthContext ctx = make_width_context(q, s);
        CqEvalResult ev = evaluate_cq_adaptive(q, ctx, db);
        Relation want = oracle::brute_join(q, db);
        CHECK(ev.answer == want);
    }
}

TEST_CASE("adaptive evaluation of the worst-case family stays near the bound", "[pandaexec]") {
    ConjunctiveQuery q = four_cycle();
    Database db = hub_db(32);
    WidthContext ctx = make_width_context(q, square_stats(q), Integer(32));
    CqEvalResult ev = evaluate_cq_adaptive(q, ctx, db);
    CHECK(ev.answer == oracle::brute_join(q, db));
    CHECK(ev.report.max_intermediate <= 182);  // ceil(32^{3/2})
}

TEST_CASE("acyclic adaptive evaluation equals the best static plan", "[pandaexec]") {
    std::mt19937 rng(137);
    ConjunctiveQuery q = parse_query("Q(A,D) :- R(A,B), S(B,C), T(C,D).");
    for (int round = 0; round < 10; round++) {
        Database db = random_db(rng, q, 25, 5);
        StatisticsSet s = infer_stats(db, q, 1);
        WidthContext ctx = make_width_context(q, s);
        CqEvalResult adaptive = evaluate_cq_adaptive(q, ctx, db);
        FhtwResult f = fhtw(q, ctx);
        REQUIRE(f.status == BoundStatus::bounded);
        CqEvalResult stat = evaluate_cq_static(q, ctx, db, f.tds[f.best_td]);
        CHECK(adaptive.answer == stat.answer);
        CHECK(adaptive.answer == oracle::brute_join(q, db));
    }
}

TEST_CASE("adaptive evaluation matches the oracle on random instances", "[pandaexec][property]") {
    std::mt19937 rng(139);
    std::vector<std::string> queries = {
        "Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).",
        "Q(X,Y,Z) :- R(X,Y), S(Y,Z), T(Z,X).",
    };
    for (const auto& text : queries) {
        ConjunctiveQuery q = parse_query(text);
        for (int round = 0; round < 8; round++) {
            Database db = random_db(rng, q, 40, 8);
            StatisticsSet s = infer_stats(db, q, 1);
            WidthContext ctx = make_width_context(q, s);
            CqEvalResult ev = evaluate_cq_adaptive(q, ctx, db);
            Relation want = oracle::brute_join(q, db);
            REQUIRE(ev.answer == want);
        }
    }
}

TEST_CASE("branch measures stay within budget on small instances", "[pandaexec][property]") {
    std::mt19937 rng(149);
    ConjunctiveQuery q = four_cycle();
    size_t audited = 0;
    for (int round = 0; round < 6; round++) {
        Database db = random_db(rng, q, 20, 4);
        StatisticsSet s = infer_stats(db, q, 1);
        WidthContext ctx = make_width_context(q, s);
        DisjunctiveRule ddr = square_ddr(q, ctx.vt);
        DdrCertificate cert = certify_ddr(ddr.head_sets(), ctx);
        SizeBound bound = bound_from_flow(cert.flow, cert.integral, ctx);
        Audit audit;
        audit.q = &q;
        audit.bound = &bound;
        ExecHooks hooks = audit.hooks();
        DdrEvalResult ev = evaluate_ddr(ddr, ctx, db, cert.flow, cert.integral, cert.identity,
                                        cert.seq, &hooks);
        CHECK(oracle::check_ddr_model(ddr, ctx.vt, db, ev.outputs).match);
        audited += audit.checked;
    }
    CHECK(audited > 0);
}
