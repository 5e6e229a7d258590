#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"

using namespace panda;
using namespace fixtures;
namespace fs = std::filesystem;

TEST_CASE("parse_query reads the 4-cycle", "[qmodel]") {
    ConjunctiveQuery q = parse_query("Q(X,Y) :- R(X,Y), S(Y,Z), T(Z,W), U(W,X).");
    CHECK(q.head_vars == std::vector<Variable>{"X", "Y"});
    CHECK(q.atoms.size() == 4);
    CHECK(q.atoms[2].symbol == "T");
    CHECK(q.atoms[2].vars == std::vector<Variable>{"Z", "W"});
    CHECK(q.all_vars() == std::set<Variable>{"X", "Y", "Z", "W"});
    CHECK(!q.is_full());
    CHECK(!q.is_boolean());
}

TEST_CASE("parse_query accepts Boolean heads and flags bad input", "[qmodel]") {
    ConjunctiveQuery b = parse_query("Q() :- R(X,Y).");
    CHECK(b.is_boolean());
    CHECK(b.head_vars.empty());

    CHECK_THROWS_AS(parse_query("Q(X) :- R(X,Y"), parse_error);
    CHECK_THROWS_AS(parse_query("Q(Z) :- R(X,Y)."), semantic_error);  // head var not in body
    CHECK_THROWS_AS(parse_query("Q(X) :- R(X,X)."), semantic_error);  // repeated variable
    CHECK_THROWS_AS(parse_query("Q(X) :- R(X,Y), R(X)."), semantic_error);  // arity conflict
    try {
        parse_query("Q(X) :-\n R(X,Y");
        FAIL("expected parse error");
    } catch (const parse_error& e) {
        CHECK(e.line == 2);  // error position points at the unclosed atom
    }
}

TEST_CASE("query rendering round-trips", "[qmodel][property]") {
    std::mt19937 rng(5);
    std::vector<std::string> syms = {"R", "S", "T", "Rel_1", "edge"};
    std::vector<Variable> pool = {"X", "Y", "Z", "W", "V_long", "u2"};
    for (int round = 0; round < 50; round++) {
        ConjunctiveQuery q;
        q.head_symbol = "Q";
        std::uniform_int_distribution<int> natoms(1, 4);
        int m = natoms(rng);
        std::set<Variable> used;
        for (int i = 0; i < m; i++) {
            Atom a;
            a.symbol = syms[rng() % syms.size()] + std::to_string(i);
            size_t arity = 1 + rng() % 3;
            std::set<Variable> seen;
            while (a.vars.size() < arity) {
                Variable v = pool[rng() % pool.size()];
                if (seen.insert(v).second) a.vars.push_back(v);
            }
            used.insert(a.vars.begin(), a.vars.end());
            q.atoms.push_back(a);
        }
        for (const auto& v : used)
            if (rng() % 2) q.head_vars.push_back(v);
        CHECK(parse_query(render_query(q)) == q);
    }
}

TEST_CASE("parse_stats reads symbolic and numeric forms", "[qmodel]") {
    ConjunctiveQuery q = four_cycle_full();
    StatisticsSet s = square_stats_full(q);
    REQUIRE(s.mode == StatsMode::symbolic);
    REQUIRE(s.constraints.size() == 6);
    CHECK(s.constraints[0].is_cardinality());
    CHECK(s.constraints[0].bound_exponent == 1);
    CHECK(s.constraints[4].ys == std::set<Variable>{"X"});
    CHECK(s.constraints[4].xs == std::set<Variable>{"W"});
    CHECK(s.constraints[4].bound_exponent == 0);  // literal 1 = N^0
    CHECK(s.constraints[5].bound_exponent == Rational(1, 2));

    StatisticsSet n = parse_stats(
        "# tight numbers\nmode numeric N=1000\ncard(R) <= 100\ndeg(S; Z | Y) <= 5\n"
        "norm(R; 2; Y | X)^2 <= 25\n",
        q);
    CHECK(n.mode == StatsMode::numeric);
    CHECK(*n.base_N == 1000);
    CHECK(n.constraints[1].bound_numeric == 5);
    CHECK(n.constraints[2].lk == 2);
    CHECK(n.constraints[2].bound_numeric == 25);
}

TEST_CASE("parse_stats rejects malformed input", "[qmodel]") {
    ConjunctiveQuery q = four_cycle_full();
    CHECK_THROWS_AS(parse_stats("deg(U; X | X) <= 2\n", q), semantic_error);
    CHECK_THROWS_AS(parse_stats("card(R) <= 0\n", q), semantic_error);
    CHECK_THROWS_AS(parse_stats("card(R) <= N\n", q), semantic_error);  // symbolic in numeric mode
    CHECK_THROWS_AS(parse_stats("mode symbolic\ncard(R) <= 7\n", q), semantic_error);
    CHECK_THROWS_AS(parse_stats("card(V) <= 5\n", q), semantic_error);  // unknown guard
    CHECK_THROWS_AS(parse_stats("deg(R; Z | X) <= 5\n", q), semantic_error);  // Z not in R
    CHECK_THROWS_AS(parse_stats("norm(R; 2; Y | X) <= 25\n", q), parse_error);  // missing ^2
    CHECK_THROWS_AS(parse_stats("mode numeric N=1\n", q), parse_error);
}

TEST_CASE("stats render and reparse", "[qmodel]") {
    ConjunctiveQuery q = four_cycle_full();
    StatisticsSet s = square_stats_full(q);
    StatisticsSet again = parse_stats(render_stats(s), q);
    REQUIRE(again.constraints.size() == s.constraints.size());
    for (size_t i = 0; i < s.constraints.size(); i++) {
        CHECK(again.constraints[i].guard == s.constraints[i].guard);
        CHECK(again.constraints[i].xs == s.constraints[i].xs);
        CHECK(again.constraints[i].ys == s.constraints[i].ys);
        CHECK(again.constraints[i].bound_exponent == s.constraints[i].bound_exponent);
    }
}

namespace {

fs::path write_example_csvs(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("pandacq_test_" + tag);
    fs::create_directories(dir);
    std::ofstream(dir / "R.csv") << "X,Y\n1,p\n1,q\n2,p\n";
    std::ofstream(dir / "S.csv") << "Y,Z\np,3\nq,4\nq,5\n";
    std::ofstream(dir / "T.csv") << "Z,W\n3,i\n5,i\n5,j\n";
    std::ofstream(dir / "U.csv") << "W,X\ni,1\nj,1\nk,2\n";
    return dir;
}

}  // namespace

TEST_CASE("load_database reads the example instance", "[qmodel]") {
    auto dir = write_example_csvs("load");
    ConjunctiveQuery q = four_cycle();
    Database db = load_database(dir, q);
    CHECK(db.total_tuples() == 12);
    CHECK(db.at("R") == example_db().at("R"));
    CHECK(db.at("S") == example_db().at("S"));

    // duplicated rows collapse, row order never matters
    std::ofstream(dir / "R.csv") << "X,Y\n2,p\n1,q\n1,p\n1,p\n";
    Database db2 = load_database(dir, q);
    CHECK(db2.at("R") == example_db().at("R"));

    std::ofstream(dir / "R.csv") << "X,Y\n1,p,3\n";
    CHECK_THROWS_AS(load_database(dir, q), io_error);
    std::ofstream(dir / "R.csv") << "X,Z\n1,p\n";
    CHECK_THROWS_AS(load_database(dir, q), io_error);
    fs::remove(dir / "R.csv");
    CHECK_THROWS_AS(load_database(dir, q), io_error);
    std::ofstream(dir / "R.csv") << "X,Y\n";
    CHECK(load_database(dir, q).at("R").empty());
    fs::remove_all(dir);
}

TEST_CASE("infer_stats finds the FD and passes its own check", "[qmodel]") {
    Database db = example_db();
    ConjunctiveQuery q = four_cycle_full();
    StatisticsSet s = infer_stats(db, q, 1);
    bool found_fd = false, found_card = false;
    for (const auto& c : s.constraints) {
        if (c.guard == "U" && c.xs == std::set<Variable>{"W"} && c.ys == std::set<Variable>{"X"}) {
            found_fd = true;
            CHECK(c.bound_numeric == 1);
        }
        if (c.guard == "R" && c.is_cardinality()) {
            found_card = true;
            CHECK(c.bound_numeric == 3);
        }
    }
    CHECK(found_fd);
    CHECK(found_card);
    CHECK(check_stats(db, s).empty());

    StatisticsSet cards_only = infer_stats(db, q, 0);
    for (const auto& c : cards_only.constraints) CHECK(c.xs.empty());

    // empty relations record bound 1
    Database empty;
    for (const auto& a : q.atoms) empty.relations[a.symbol] = Relation{Schema(a.vars)};
    for (const auto& c : infer_stats(empty, q, 1).constraints) CHECK(c.bound_numeric == 1);
}

TEST_CASE("infer_stats output satisfies the data it came from", "[qmodel][property]") {
    std::mt19937 rng(29);
    ConjunctiveQuery q = four_cycle_full();
    for (int round = 0; round < 25; round++) {
        Database db = random_db(rng, q, 25, 5);
        StatisticsSet s = infer_stats(db, q, 2);
        CHECK(check_stats(db, s).empty());
    }
}

TEST_CASE("check_stats reports violations with a witness", "[qmodel]") {
    Database db = example_db();
    ConjunctiveQuery q = four_cycle_full();
    auto ok = check_stats(db, parse_stats("deg(U; X | W) <= 1\n", q));
    CHECK(ok.empty());
    auto bad = check_stats(db, parse_stats("card(R) <= 2\n", q));
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].description.find("3") != std::string::npos);
    CHECK_THROWS_AS(check_stats(db, square_stats(four_cycle())), argument_error);

    Database empty;
    for (const auto& a : q.atoms) empty.relations[a.symbol] = Relation{Schema(a.vars)};
    CHECK(check_stats(empty, parse_stats("card(R) <= 1\ndeg(U; X|W) <= 1\n", q)).empty());
}

TEST_CASE("self-joins share one relation and expand constraints positionally", "[qmodel]") {
    ConjunctiveQuery q = parse_query("Q(X,Z) :- E(X,Y), E(Y,Z).");
    StatisticsSet s = parse_stats("mode numeric N=10\ncard(E) <= 10\ndeg(E; Y | X) <= 2\n", q);
    auto inst = instantiate_constraints(s, q);
    // card at both occurrences: {X,Y} and {Y,Z}; the degree constraint likewise
    REQUIRE(inst.size() == 4);
    CHECK(inst[0].ys == std::set<Variable>{"X", "Y"});
    CHECK(inst[1].ys == std::set<Variable>{"Y", "Z"});
    CHECK(inst[2].xs == std::set<Variable>{"X"});
    CHECK(inst[3].xs == std::set<Variable>{"Y"});
    CHECK(inst[3].ys == std::set<Variable>{"Z"});
}
