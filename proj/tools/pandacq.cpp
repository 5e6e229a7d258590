//==========================================================================================
// pandacq: width bounds, certificates, and evaluation for conjunctive queries.
//
//   pandacq bound  <query> <stats> [--target head|V1,V2,...] [--json]
//   pandacq width  <query> <stats> --measure fhtw|subw [--threads k] [--json]
//   pandacq prove  <query> <stats> [--selector i] [--reset V1,V2,...] [--json]
//   pandacq run    <query> <stats> <datadir> [--plan static|adaptive|oracle] [--td i|best]
//                  [--output file] [--report file] [--no-validate] [--json]
//   pandacq verify <query> <datadir> [--stats file] [--json]
//   pandacq stats  <query> <datadir> [--max-cond k]
//
// Exit codes: 0 ok, 2 parse/semantic error, 3 unbounded, 4 statistics violation,
// 5 oracle guard exceeded, 1 anything else.
//==========================================================================================

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "panda/panda.hpp"

using namespace panda;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::set<Variable> parse_var_list(const std::string& s) {
    std::set<Variable> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.insert(cur);
            cur.clear();
        } else if (!isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
}

std::string bags_str(const std::vector<VarSet>& bags, const VarTable& vt) {
    std::string s;
    for (VarSet b : bags) s += "(" + vt.render(b) + ")";
    return s;
}

struct Inputs {
    ConjunctiveQuery q;
    StatisticsSet stats;
};

Inputs load_inputs(const std::string& qpath, const std::string& spath) {
    Inputs in;
    in.q = parse_query(slurp(qpath));
    in.stats = parse_stats(slurp(spath), in.q);
    return in;
}

int cmd_bound(const std::string& qpath, const std::string& spath, const std::string& target,
              bool as_json) {
    Inputs in = load_inputs(qpath, spath);
    WidthContext ctx = make_width_context(in.q, in.stats);
    std::set<Variable> tvars = (target == "head") ? in.q.free_set() : parse_var_list(target);
    for (const auto& v : tvars)
        if (!in.q.all_vars().count(v)) throw semantic_error("target variable " + v + " not in query");
    VarSet t = ctx.vt.set_of(tvars);
    if (t == 0) {
        std::cout << (as_json ? "{\"bound\":\"0\"}" : "bound = 0") << "\n";
        return 0;
    }
    BoundResult r = polymatroid_bound(t, ctx);
    if (r.status != BoundStatus::bounded) {
        std::cerr << "unbounded: the statistics do not bound h(" << ctx.vt.render(t) << ")\n";
        return 3;
    }
    json j;
    j["target"] = ctx.vt.render(t);
    j["log_N_exponent"] = rational_str(r.value);
    j["decimal"] = rational_decimal(r.value, 12);
    json wj = json::object();
    for (const auto& [coord, val] : r.witness) wj["h(" + ctx.vt.render(coord) + ")"] = rational_str(val);
    j["witness"] = wj;
    j["certificate"] = render_flow(r.flow, ctx);
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "bound = " << rational_str(r.value) << "\n";
        std::cout << "decimal = " << rational_decimal(r.value, 12) << "\n";
        std::cout << "certificate: " << render_flow(r.flow, ctx) << "\n";
        std::cout << "witness:\n";
        for (const auto& [coord, val] : r.witness)
            std::cout << "  h(" << ctx.vt.render(coord) << ") = " << rational_str(val) << "\n";
    }
    return 0;
}

int cmd_width(const std::string& qpath, const std::string& spath, const std::string& measure,
              unsigned threads, bool as_json) {
    Inputs in = load_inputs(qpath, spath);
    WidthContext ctx = make_width_context(in.q, in.stats);
    json j;
    if (measure == "fhtw") {
        FhtwResult f = fhtw(in.q, ctx);
        if (f.status != BoundStatus::bounded) {
            std::cerr << "unbounded: no tree decomposition has bounded bags\n";
            return 3;
        }
        j["measure"] = "fhtw";
        j["value"] = rational_str(f.value);
        json tds = json::array();
        for (size_t t = 0; t < f.tds.size(); t++) {
            json td;
            td["bags"] = bags_str(f.tds[t].bags, ctx.vt);
            if (f.td_bounded[t]) {
                json costs = json::array();
                for (const auto& c : f.per_bag[t]) costs.push_back(rational_str(c));
                td["per_bag"] = costs;
            } else {
                td["per_bag"] = "unbounded";
            }
            td["best"] = (t == f.best_td);
            tds.push_back(td);
        }
        j["tds"] = tds;
        if (as_json) {
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << "fhtw = " << rational_str(f.value) << "\n";
            for (size_t t = 0; t < f.tds.size(); t++) {
                std::cout << "td " << t << ": " << bags_str(f.tds[t].bags, ctx.vt);
                if (f.td_bounded[t]) {
                    std::cout << " per-bag";
                    for (const auto& c : f.per_bag[t]) std::cout << " " << rational_str(c);
                } else {
                    std::cout << " unbounded";
                }
                if (t == f.best_td) std::cout << "  <- best";
                std::cout << "\n";
            }
        }
        return 0;
    }

    // subw: solve the distinct selector LPs (optionally in parallel), then report
    auto tds = enumerate_tds(in.q, ctx.vt);
    auto selectors = bag_selectors(tds);
    std::map<std::vector<VarSet>, BoundResult> cache;
    {
        std::vector<std::vector<VarSet>> keys;
        std::set<std::vector<VarSet>> seen;
        for (const auto& sel : selectors)
            if (seen.insert(sel.distinct_bags()).second) keys.push_back(sel.distinct_bags());
        if (threads > 1) {
            std::vector<std::future<BoundResult>> futs;
            size_t next = 0;
            while (next < keys.size()) {
                size_t batch = std::min<size_t>(threads, keys.size() - next);
                futs.clear();
                for (size_t i = 0; i < batch; i++)
                    futs.push_back(std::async(std::launch::async,
                                              [&, i] { return ddr_bound(keys[next + i], ctx); }));
                for (size_t i = 0; i < batch; i++) cache[keys[next + i]] = futs[i].get();
                next += batch;
            }
        } else {
            for (const auto& k : keys) cache[k] = ddr_bound(k, ctx);
        }
    }
    bool unbounded = false;
    Rational value(0);
    bool any = false;
    json sels = json::array();
    std::ostringstream body;
    for (size_t i = 0; i < selectors.size(); i++) {
        const auto& r = cache.at(selectors[i].distinct_bags());
        json sj;
        sj["bags"] = bags_str(selectors[i].bags, ctx.vt);
        if (r.status != BoundStatus::bounded) {
            unbounded = true;
            sj["value"] = "unbounded";
            body << "selector " << i << ": " << bags_str(selectors[i].bags, ctx.vt) << " unbounded\n";
        } else {
            if (!any || r.value > value) { value = r.value; any = true; }
            sj["value"] = rational_str(r.value);
            sj["certificate"] = render_flow(r.flow, ctx);
            body << "selector " << i << ": " << bags_str(selectors[i].bags, ctx.vt) << " value "
                 << rational_str(r.value) << "\n    " << render_flow(r.flow, ctx) << "\n";
        }
        sels.push_back(sj);
    }
    if (unbounded) {
        std::cerr << "unbounded: some bag selector admits no certificate\n";
        return 3;
    }
    j["measure"] = "subw";
    j["value"] = rational_str(value);
    j["selectors"] = sels;
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "subw = " << rational_str(value) << "\n" << body.str();
    }
    return 0;
}

int cmd_prove(const std::string& qpath, const std::string& spath, int selector,
              const std::string& reset_term, bool as_json) {
    Inputs in = load_inputs(qpath, spath);
    WidthContext ctx = make_width_context(in.q, in.stats);
    auto tds = plan_tds(in.q, ctx.vt);
    auto selectors = bag_selectors(tds);
    if (selector < 0 || static_cast<size_t>(selector) >= selectors.size())
        throw semantic_error("selector index out of range (have " +
                             std::to_string(selectors.size()) + ")");
    const auto& sel = selectors[static_cast<size_t>(selector)];
    BoundResult r = ddr_bound(sel.distinct_bags(), ctx);
    if (r.status != BoundStatus::bounded) {
        std::cerr << "unbounded: selector " << selector << " admits no certificate\n";
        return 3;
    }
    IntegralFlow integral = to_integral(r.flow, ctx);
    Identity id = identity_form(integral, ctx);
    ProofSequence seq = construct_proof_sequence(id);
    std::string why;
    bool ok = verify_proof_sequence(id, seq, &why);

    json j;
    j["selector"] = bags_str(sel.bags, ctx.vt);
    j["value"] = rational_str(r.value);
    j["scale"] = integral.scale.str();
    j["integral"] = render_integral(integral, ctx);
    json steps = json::array();
    for (const auto& s : seq) steps.push_back(render_step(s, ctx.vt));
    j["steps"] = steps;
    j["verified"] = ok;

    std::ostringstream body;
    body << "selector " << selector << ": " << bags_str(sel.bags, ctx.vt) << "\n";
    body << "value = " << rational_str(r.value) << "  (scale L = " << integral.scale.str() << ")\n";
    body << "integral: " << render_integral(integral, ctx) << "\n";
    body << "proof sequence:\n";
    for (size_t i = 0; i < seq.size(); i++)
        body << "  " << (i + 1) << ". " << render_step(seq[i], ctx.vt) << "\n";
    body << (ok ? "VERIFIED" : std::string("VERIFICATION FAILED: ") + why) << "\n";

    if (!reset_term.empty()) {
        Term drop{ctx.vt.set_of(parse_var_list(reset_term)), 0};
        ResetResult rr = reset(id, drop);
        // render the residual inequality: targets <= sources
        std::ostringstream rs;
        bool first = true;
        for (VarSet t : rr.residual.targets) {
            if (!first) rs << " + ";
            first = false;
            rs << "h(" << ctx.vt.render(t) << ")";
        }
        if (first) rs << "0";
        rs << " <= ";
        first = true;
        for (const auto& sc : rr.residual.sources) {
            if (!first) rs << " + ";
            first = false;
            rs << render_term(sc.term, ctx.vt);
        }
        if (first) rs << "0";
        body << "reset h(" << ctx.vt.render(drop.ys) << "): " << rs.str();
        if (rr.lost_target) body << "   [lost h(" << ctx.vt.render(*rr.lost_target) << ")]";
        body << "\n";
        j["reset"] = rs.str();
        if (rr.lost_target) j["reset_lost"] = "h(" + ctx.vt.render(*rr.lost_target) + ")";
    }

    std::cout << (as_json ? j.dump(2) + "\n" : body.str());
    return ok ? 0 : 1;
}

int cmd_run(const std::string& qpath, const std::string& spath, const std::string& datadir,
            const std::string& plan, const std::string& td_choice, const std::string& output,
            const std::string& report_path, bool no_validate, bool as_json) {
    Inputs in = load_inputs(qpath, spath);
    Database db = load_database(datadir, in.q);
    if (!no_validate && in.stats.mode == StatsMode::numeric) {
        auto violations = check_stats(db, in.stats);
        if (!violations.empty()) {
            std::cerr << "statistics violations:\n";
            for (const auto& v : violations) std::cerr << "  " << v.description << "\n";
            return 4;
        }
    }
    std::optional<Integer> n_override;
    if (in.stats.mode == StatsMode::symbolic || !in.stats.base_N)
        n_override = Integer(std::max<size_t>(db.total_tuples(), 2));
    WidthContext ctx = make_width_context(in.q, in.stats, n_override);
    if (in.stats.mode == StatsMode::symbolic && !satisfies(db, in.stats, ctx.N) && !no_validate) {
        std::cerr << "statistics violations: data does not satisfy the symbolic constraints at N="
                  << ctx.N.str() << "\n";
        return 4;
    }

    Relation answer;
    ExecutionReport report;
    if (plan == "oracle") {
        answer = oracle::brute_join(in.q, db);
    } else if (plan == "static") {
        auto tds = enumerate_tds(in.q, ctx.vt);
        size_t pick = 0;
        if (td_choice == "best") {
            FhtwResult f = fhtw(in.q, ctx);
            if (f.status != BoundStatus::bounded) {
                std::cerr << "unbounded: no static plan exists\n";
                return 3;
            }
            pick = f.best_td;
        } else {
            pick = static_cast<size_t>(std::stol(td_choice));
            if (pick >= tds.size()) throw semantic_error("td index out of range");
        }
        CqEvalResult ev = evaluate_cq_static(in.q, ctx, db, tds[pick]);
        answer = ev.answer;
        report = ev.report;
    } else {
        CqEvalResult ev = evaluate_cq_adaptive(in.q, ctx, db);
        answer = ev.answer;
        report = ev.report;
    }

    // canonical output: head variable order, rows sorted
    Relation ordered = project_ordered(answer, in.q.head_vars);
    std::string csv = relation_to_csv(ordered);
    if (output.empty()) std::cout << csv;
    else write_relation_csv(output, ordered);

    json j;
    j["rows"] = ordered.size();
    j["plan"] = plan;
    if (plan != "oracle") {
        j["max_intermediate"] = report.max_intermediate;
        j["steps"] = report.steps_executed;
        j["branches"] = report.branches_spawned;
        json sizes = json::object();
        for (const auto& [bag, n] : report.output_sizes) {
            WidthContext tmp = ctx;
            sizes["Q_" + ctx.vt.render(bag)] = n;
        }
        j["bag_output_sizes"] = sizes;
    }
    std::ostringstream rep;
    rep << "plan: " << plan << "\nrows: " << ordered.size() << "\n";
    if (plan != "oracle") {
        rep << "max intermediate: " << report.max_intermediate << "\n";
        rep << "steps: " << report.steps_executed << "\n";
        rep << "branches: " << report.branches_spawned << "\n";
        for (const auto& [bag, n] : report.output_sizes)
            rep << "bag Q_" << ctx.vt.render(bag) << ": " << n << "\n";
    }
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << (as_json ? j.dump(2) + "\n" : rep.str());
    } else if (!output.empty()) {
        std::cerr << (as_json ? j.dump(2) + "\n" : rep.str());
    }
    return 0;
}

int cmd_verify(const std::string& qpath, const std::string& datadir, const std::string& spath,
               bool as_json) {
    ConjunctiveQuery q = parse_query(slurp(qpath));
    Database db = load_database(datadir, q);
    StatisticsSet stats =
        spath.empty() ? infer_stats(db, q, 1) : parse_stats(slurp(spath), q);
    std::optional<Integer> n_override;
    if (stats.mode == StatsMode::symbolic || !stats.base_N)
        n_override = Integer(std::max<size_t>(db.total_tuples(), 2));
    WidthContext ctx = make_width_context(q, stats, n_override);

    Relation reference = oracle::brute_join(q, db);

    CqEvalResult adaptive = evaluate_cq_adaptive(q, ctx, db);
    auto rep_a = oracle::compare_relations(reference, adaptive.answer);

    FhtwResult f = fhtw(q, ctx);
    if (f.status != BoundStatus::bounded) {
        std::cerr << "unbounded: no static plan\n";
        return 3;
    }
    CqEvalResult stat = evaluate_cq_static(q, ctx, db, f.tds[f.best_td]);
    auto rep_s = oracle::compare_relations(reference, stat.answer);

    json j;
    j["oracle_rows"] = reference.size();
    j["adaptive_match"] = rep_a.match;
    j["static_match"] = rep_s.match;
    bool ok = rep_a.match && rep_s.match;
    if (as_json) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "oracle rows: " << reference.size() << "\n";
        std::cout << "adaptive: " << (rep_a.match ? "match" : "MISMATCH") << "\n";
        std::cout << "static-best: " << (rep_s.match ? "match" : "MISMATCH") << "\n";
        auto dump_diff = [&](const oracle::OracleReport& r) {
            for (const auto& t : r.missing) {
                std::cout << "  missing:";
                for (const auto& v : t) std::cout << " " << v.str();
                std::cout << "\n";
            }
            for (const auto& t : r.extra) {
                std::cout << "  extra:";
                for (const auto& v : t) std::cout << " " << v.str();
                std::cout << "\n";
            }
        };
        if (!rep_a.match) dump_diff(rep_a);
        if (!rep_s.match) dump_diff(rep_s);
    }
    return ok ? 0 : 1;
}

int cmd_stats(const std::string& qpath, const std::string& datadir, unsigned max_cond) {
    ConjunctiveQuery q = parse_query(slurp(qpath));
    Database db = load_database(datadir, q);
    if (db.total_tuples() == 0) throw io_error("data directory holds no tuples");
    StatisticsSet s = infer_stats(db, q, max_cond);
    std::cout << render_stats(s);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-theoretic bounds and adaptive evaluation for conjunctive queries"};
    app.require_subcommand(1);

    std::string qpath, spath, datadir, target = "head", measure = "subw";
    std::string plan = "adaptive", td_choice = "best", output, report_path, reset_term;
    int selector = 0;
    unsigned threads = 1, max_cond = 1, seed = 0;
    bool as_json = false, no_validate = false;

    auto* bound = app.add_subcommand("bound", "worst-case output size bound");
    bound->add_option("query", qpath)->required();
    bound->add_option("stats", spath)->required();
    bound->add_option("--target", target, "head (default) or comma-separated variables");
    bound->add_flag("--json", as_json);

    auto* width = app.add_subcommand("width", "fractional hypertree or submodular width");
    width->add_option("query", qpath)->required();
    width->add_option("stats", spath)->required();
    width->add_option("--measure", measure)->check(CLI::IsMember({"fhtw", "subw"}));
    width->add_option("--threads", threads);
    width->add_flag("--json", as_json);

    auto* prove = app.add_subcommand("prove", "Shannon-flow certificate and proof sequence");
    prove->add_option("query", qpath)->required();
    prove->add_option("stats", spath)->required();
    prove->add_option("--selector", selector);
    prove->add_option("--reset", reset_term, "drop this unconditional source and show the residual");
    prove->add_flag("--json", as_json);

    auto* run = app.add_subcommand("run", "evaluate the query over CSV data");
    run->add_option("query", qpath)->required();
    run->add_option("stats", spath)->required();
    run->add_option("data", datadir)->required();
    run->add_option("--plan", plan)->check(CLI::IsMember({"static", "adaptive", "oracle"}));
    run->add_option("--td", td_choice, "tree decomposition index or 'best'");
    run->add_option("--output", output, "answer CSV path (default stdout)");
    run->add_option("--report", report_path);
    run->add_option("--threads", threads);
    run->add_flag("--no-validate", no_validate);
    run->add_flag("--json", as_json);

    auto* verify = app.add_subcommand("verify", "cross-check plans against the brute-force oracle");
    verify->add_option("query", qpath)->required();
    verify->add_option("data", datadir)->required();
    verify->add_option("--stats", spath);
    verify->add_option("--seed", seed);
    verify->add_flag("--json", as_json);

    auto* stats = app.add_subcommand("stats", "infer the tightest numeric statistics from data");
    stats->add_option("query", qpath)->required();
    stats->add_option("data", datadir)->required();
    stats->add_option("--max-cond", max_cond);

    CLI11_PARSE(app, argc, argv);

    try {
        if (bound->parsed()) return cmd_bound(qpath, spath, target, as_json);
        if (width->parsed()) return cmd_width(qpath, spath, measure, threads, as_json);
        if (prove->parsed()) return cmd_prove(qpath, spath, selector, reset_term, as_json);
        if (run->parsed())
            return cmd_run(qpath, spath, datadir, plan, td_choice, output, report_path,
                           no_validate, as_json);
        if (verify->parsed()) return cmd_verify(qpath, datadir, spath, as_json);
        if (stats->parsed()) return cmd_stats(qpath, datadir, max_cond);
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const semantic_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const schema_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const size_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const unbounded_error& e) {
        std::cerr << "unbounded: " << e.what() << "\n";
        return 3;
    } catch (const oracle::guard_error& e) {
        std::cerr << "guard: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
