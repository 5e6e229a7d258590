#pragma once

//==========================================================================================
// Statistics: degree constraints and lk-norm constraints over the relations of a query,
// in numeric or symbolic mode, plus their line-based concrete syntax:
//
//     # comment
//     mode numeric N=1000          (or: mode symbolic)
//     card(R) <= 100
//     deg(R; Y,Z | X) <= 5
//     norm(R; 2; Y | X)^2 <= 25    (lk bounds are supplied as the k-th power, integral)
//     deg(R; W | X) <= N^{1/2}     (symbolic mode: bounds are powers of the formal N)
//
// Constraints are written against one atom occurrence and apply positionally to every
// atom with the same symbol (self-joins share one instance).
//==========================================================================================

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "panda/query.hpp"
#include "panda/relation.hpp"

namespace panda {

enum class StatsMode { numeric, symbolic };

struct DegreeConstraint {
    std::string guard;                 // relation symbol
    std::vector<size_t> xs_pos;        // condition positions within the guard schema
    std::vector<size_t> ys_pos;
    std::set<Variable> xs, ys;         // as written (first matching occurrence)
    unsigned long lk = 0;              // 0 = plain degree; k >= 1 = lk-norm, bound is the k-th power
    Integer bound_numeric = 0;         // numeric mode
    Rational bound_exponent = 0;       // symbolic mode: bound = N^bound_exponent

    bool is_cardinality() const { return xs.empty() && lk == 0; }
};

struct StatisticsSet {
    StatsMode mode = StatsMode::numeric;
    std::optional<Integer> base_N;     // numeric mode header value, if given
    std::vector<DegreeConstraint> constraints;
};

struct StatsViolation {
    size_t constraint_index;
    std::string description;
};

namespace detail {

inline std::set<Variable> vars_at(const Atom& a, const std::vector<size_t>& pos) {
    std::set<Variable> s;
    for (size_t p : pos) s.insert(a.vars.at(p));
    return s;
}

// First atom of `q` whose variables cover all of `vars`; used to fix the positional
// reading of a constraint.
inline const Atom* defining_atom(const ConjunctiveQuery& q, const std::string& symbol,
                                 const std::set<Variable>& vars) {
    for (const auto& a : q.atoms) {
        if (a.symbol != symbol) continue;
        bool ok = true;
        for (const auto& v : vars)
            if (!a.var_set().count(v)) { ok = false; break; }
        if (ok) return &a;
    }
    return nullptr;
}

}  // namespace detail

// One constraint instantiated at one atom occurrence.
struct ConstraintInstance {
    size_t constraint_index;
    std::set<Variable> xs, ys;
};

// Positional expansion of every constraint to every atom with its guard symbol,
// deduplicated on the resulting variable sets.
inline std::vector<ConstraintInstance> instantiate_constraints(const StatisticsSet& s,
                                                               const ConjunctiveQuery& q) {
    std::vector<ConstraintInstance> out;
    std::set<std::tuple<size_t, std::set<Variable>, std::set<Variable>>> seen;
    for (size_t i = 0; i < s.constraints.size(); i++) {
        const auto& c = s.constraints[i];
        for (const auto& a : q.atoms) {
            if (a.symbol != c.guard) continue;
            auto xs = detail::vars_at(a, c.xs_pos);
            auto ys = detail::vars_at(a, c.ys_pos);
            if (seen.insert({i, xs, ys}).second)
                out.push_back({i, std::move(xs), std::move(ys)});
        }
    }
    return out;
}

inline StatisticsSet parse_stats(const std::string& text, const ConjunctiveQuery& q) {
    StatisticsSet out;
    bool mode_seen = false, constraint_seen = false;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;

    auto fail = [&](const std::string& msg) -> void {
        throw parse_error(msg, lineno, 1);
    };

    while (std::getline(in, raw)) {
        lineno++;
        std::string line;
        for (char ch : raw) {
            if (ch == '#') break;
            line += ch;
        }
        // trim
        size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);

        std::istringstream ls(line);
        std::string head;
        ls >> head;

        if (head == "mode") {
            if (mode_seen) fail("duplicate mode line");
            if (constraint_seen) fail("mode line must precede constraints");
            mode_seen = true;
            std::string m;
            ls >> m;
            if (m == "symbolic") {
                out.mode = StatsMode::symbolic;
            } else if (m == "numeric") {
                out.mode = StatsMode::numeric;
                std::string rest;
                if (ls >> rest) {
                    if (rest.rfind("N=", 0) != 0) fail("expected N=<value> after 'mode numeric'");
                    try {
                        out.base_N = Integer(rest.substr(2));
                    } catch (...) { fail("bad N value '" + rest.substr(2) + "'"); }
                    if (*out.base_N <= 1) fail("N must be > 1");
                }
            } else {
                fail("unknown mode '" + m + "'");
            }
            continue;
        }

        // constraint line: card(R) / deg(R; ys | xs) / norm(R; k; ys | xs)^k  <= bound
        size_t le = line.find("<=");
        if (le == std::string::npos) fail("expected '<=' in constraint");
        std::string lhs = line.substr(0, le);
        std::string rhs = line.substr(le + 2);
        auto strip = [](std::string s) {
            size_t b2 = s.find_first_not_of(" \t");
            if (b2 == std::string::npos) return std::string();
            size_t e2 = s.find_last_not_of(" \t");
            return s.substr(b2, e2 - b2 + 1);
        };
        lhs = strip(lhs);
        rhs = strip(rhs);

        DegreeConstraint c;

        // --- left-hand side ---
        size_t open = lhs.find('(');
        size_t close = lhs.rfind(')');
        if (open == std::string::npos || close == std::string::npos || close < open)
            fail("malformed constraint head");
        std::string kindname = strip(lhs.substr(0, open));
        std::string inner = lhs.substr(open + 1, close - open - 1);
        std::string tail = strip(lhs.substr(close + 1));

        auto split = [&](const std::string& s, char sep) {
            std::vector<std::string> parts;
            std::string cur;
            for (char ch : s) {
                if (ch == sep) { parts.push_back(strip(cur)); cur.clear(); }
                else cur += ch;
            }
            parts.push_back(strip(cur));
            return parts;
        };
        auto parse_varlist = [&](const std::string& s) {
            std::set<Variable> vs;
            if (strip(s).empty()) return vs;
            for (auto& v : split(s, ',')) {
                if (v.empty()) fail("empty variable in list");
                vs.insert(v);
            }
            return vs;
        };

        if (kindname == "card") {
            if (!tail.empty()) fail("unexpected text after card(...)");
            c.guard = strip(inner);
            c.lk = 0;
            // ys = whole guard schema, resolved below
        } else if (kindname == "deg" || kindname == "norm") {
            auto parts = split(inner, ';');
            size_t want = (kindname == "deg") ? 2 : 3;
            if (parts.size() != want) fail("malformed " + kindname + " constraint");
            c.guard = parts[0];
            std::string spec = parts[want - 1];
            auto bar = spec.find('|');
            std::set<Variable> xs, ys;
            if (bar == std::string::npos) {
                ys = parse_varlist(spec);
            } else {
                ys = parse_varlist(spec.substr(0, bar));
                xs = parse_varlist(spec.substr(bar + 1));
            }
            if (ys.empty()) fail("constraint needs at least one bounded variable");
            c.xs = xs;
            c.ys = ys;
            if (kindname == "norm") {
                try {
                    long k = std::stol(strip(parts[1]));
                    if (k < 1) fail("norm order must be >= 1");
                    c.lk = static_cast<unsigned long>(k);
                } catch (parse_error&) { throw; }
                catch (...) { fail("bad norm order '" + parts[1] + "'"); }
                std::string want_tail = "^" + strip(parts[1]);
                if (strip(tail) != want_tail)
                    fail("lk-norm bound must be written as the k-th power: norm(...)^" + strip(parts[1]));
            } else if (!tail.empty()) {
                fail("unexpected text after deg(...)");
            }
        } else {
            fail("unknown constraint kind '" + kindname + "'");
        }

        // --- resolve guard schema and positions ---
        if (c.guard.empty()) fail("missing guard relation");
        const Atom* def = nullptr;
        if (kindname == "card") {
            for (const auto& a : q.atoms)
                if (a.symbol == c.guard) { def = &a; break; }
            if (!def) throw semantic_error("constraint guard " + c.guard + " not in query");
            c.ys = def->var_set();
        } else {
            std::set<Variable> all = c.xs;
            all.insert(c.ys.begin(), c.ys.end());
            def = detail::defining_atom(q, c.guard, all);
            if (!def) {
                bool sym = false;
                for (const auto& a : q.atoms) sym |= (a.symbol == c.guard);
                if (!sym) throw semantic_error("constraint guard " + c.guard + " not in query");
                throw semantic_error("constraint variables do not fit any " + c.guard + " atom");
            }
        }
        for (const auto& v : c.ys)
            if (c.xs.count(v)) throw semantic_error("constraint on " + c.guard + ": variable " + v +
                                                    " appears on both sides of '|'");
        for (const auto& v : c.xs)
            c.xs_pos.push_back(std::find(def->vars.begin(), def->vars.end(), v) - def->vars.begin());
        for (const auto& v : c.ys)
            c.ys_pos.push_back(std::find(def->vars.begin(), def->vars.end(), v) - def->vars.begin());

        // --- right-hand side ---
        if (rhs.empty()) fail("missing bound");
        if (rhs[0] == 'N') {
            if (out.mode != StatsMode::symbolic)
                throw semantic_error("symbolic bound '" + rhs + "' in numeric mode");
            if (rhs == "N") {
                c.bound_exponent = 1;
            } else {
                if (rhs.size() < 2 || rhs[1] != '^') fail("malformed symbolic bound '" + rhs + "'");
                std::string expo = rhs.substr(2);
                if (!expo.empty() && expo.front() == '{' && expo.back() == '}')
                    expo = expo.substr(1, expo.size() - 2);
                auto slash = expo.find('/');
                try {
                    if (slash == std::string::npos)
                        c.bound_exponent = Rational(Integer(expo));
                    else
                        c.bound_exponent = Rational(Integer(expo.substr(0, slash)),
                                                    Integer(expo.substr(slash + 1)));
                } catch (...) { fail("bad exponent '" + expo + "'"); }
            }
        } else {
            Integer b;
            try {
                b = Integer(rhs);
            } catch (...) { fail("bad bound '" + rhs + "'"); }
            if (b <= 0) throw semantic_error("non-positive bound in constraint on " + c.guard);
            if (out.mode == StatsMode::symbolic) {
                if (b != 1)
                    throw semantic_error("numeric bound '" + rhs + "' in symbolic mode (only 1 = N^0 allowed)");
                c.bound_exponent = 0;
            } else {
                c.bound_numeric = b;
            }
        }

        constraint_seen = true;
        out.constraints.push_back(std::move(c));
    }
    return out;
}

inline std::string render_constraint(const DegreeConstraint& c, StatsMode mode) {
    std::ostringstream os;
    auto varlist = [](const std::set<Variable>& vs) {
        std::string s;
        for (const auto& v : vs) s += (s.empty() ? "" : ",") + v;
        return s;
    };
    if (c.is_cardinality()) {
        os << "card(" << c.guard << ")";
    } else if (c.lk == 0) {
        os << "deg(" << c.guard << "; " << varlist(c.ys);
        if (!c.xs.empty()) os << " | " << varlist(c.xs);
        os << ")";
    } else {
        os << "norm(" << c.guard << "; " << c.lk << "; " << varlist(c.ys);
        if (!c.xs.empty()) os << " | " << varlist(c.xs);
        os << ")^" << c.lk;
    }
    os << " <= ";
    if (mode == StatsMode::symbolic) {
        if (c.bound_exponent == 0) os << "1";
        else if (c.bound_exponent == 1) os << "N";
        else os << "N^{" << rational_str(c.bound_exponent) << "}";
    } else {
        os << c.bound_numeric.str();
    }
    return os.str();
}

inline std::string render_stats(const StatisticsSet& s) {
    std::ostringstream os;
    if (s.mode == StatsMode::symbolic) {
        os << "mode symbolic\n";
    } else {
        os << "mode numeric";
        if (s.base_N) os << " N=" << s.base_N->str();
        os << "\n";
    }
    for (const auto& c : s.constraints) os << render_constraint(c, s.mode) << "\n";
    return os.str();
}

// Tightest numeric constraints the data satisfies: for each atom and each condition set
// xs with |xs| <= max_cond_size, bound deg(schema \ xs | xs). Empty counts are recorded
// as 1 (a zero bound has no log).
inline StatisticsSet infer_stats(const Database& db, const ConjunctiveQuery& q,
                                 size_t max_cond_size) {
    StatisticsSet out;
    out.mode = StatsMode::numeric;
    out.base_N = Integer(db.total_tuples());
    std::set<std::tuple<std::string, std::vector<size_t>, std::vector<size_t>>> seen;
    for (const auto& a : q.atoms) {
        const Relation& r = db.at(a.symbol);
        size_t n = a.vars.size();
        // enumerate subsets of positions for xs
        for (size_t mask = 0; mask < (size_t(1) << n); mask++) {
            std::vector<size_t> xs_pos, ys_pos;
            for (size_t i = 0; i < n; i++)
                ((mask >> i) & 1 ? xs_pos : ys_pos).push_back(i);
            if (xs_pos.size() > max_cond_size || ys_pos.empty()) continue;
            if (!seen.insert({a.symbol, xs_pos, ys_pos}).second) continue;
            DegreeConstraint c;
            c.guard = a.symbol;
            c.xs_pos = xs_pos;
            c.ys_pos = ys_pos;
            for (size_t i : xs_pos) c.xs.insert(a.vars[i]);
            for (size_t i : ys_pos) c.ys.insert(a.vars[i]);
            std::set<Variable> rxs, rys;
            for (size_t i : xs_pos) rxs.insert(r.schema().vars().at(i));
            for (size_t i : ys_pos) rys.insert(r.schema().vars().at(i));
            size_t d = degree(r, rys, rxs);
            c.bound_numeric = Integer(d == 0 ? 1 : d);
            out.constraints.push_back(std::move(c));
        }
    }
    return out;
}

// Numeric-mode check of every constraint against the data; empty result means db |= s.
inline std::vector<StatsViolation> check_stats(const Database& db, const StatisticsSet& s) {
    if (s.mode != StatsMode::numeric)
        throw argument_error("check_stats: symbolic statistics cannot be checked against data");
    std::vector<StatsViolation> out;
    for (size_t i = 0; i < s.constraints.size(); i++) {
        const auto& c = s.constraints[i];
        if (!db.has(c.guard)) {
            out.push_back({i, "guard relation " + c.guard + " missing from database"});
            continue;
        }
        const Relation& r = db.at(c.guard);
        std::set<Variable> xs, ys;
        for (size_t p : c.xs_pos) xs.insert(r.schema().vars().at(p));
        for (size_t p : c.ys_pos) ys.insert(r.schema().vars().at(p));
        if (c.lk == 0) {
            auto degs = degree_map(r, ys, xs);
            for (const auto& [binding, d] : degs) {
                if (Integer(d) > c.bound_numeric) {
                    std::string w;
                    for (const auto& v : binding) w += (w.empty() ? "" : ",") + v.str();
                    out.push_back({i, render_constraint(c, s.mode) + " violated: degree " +
                                          std::to_string(d) + " at binding (" + w + ")"});
                    break;
                }
            }
        } else {
            Integer p = lknorm_pow(r, ys, xs, c.lk);
            if (p > c.bound_numeric)
                out.push_back({i, render_constraint(c, s.mode) + " violated: power sum " + p.str()});
        }
    }
    return out;
}

// Does db satisfy s when the symbolic parameter is instantiated with N? Exact: a symbolic
// bound N^{p/q} is compared via d^q <= N^p.
inline bool satisfies(const Database& db, const StatisticsSet& s, const Integer& N) {
    for (const auto& c : s.constraints) {
        if (!db.has(c.guard)) return false;
        const Relation& r = db.at(c.guard);
        std::set<Variable> xs, ys;
        for (size_t p : c.xs_pos) xs.insert(r.schema().vars().at(p));
        for (size_t p : c.ys_pos) ys.insert(r.schema().vars().at(p));
        Integer measured = (c.lk == 0) ? Integer(degree(r, ys, xs)) : lknorm_pow(r, ys, xs, c.lk);
        if (s.mode == StatsMode::numeric) {
            if (measured > c.bound_numeric) return false;
        } else {
            Integer p = numerator(c.bound_exponent);
            unsigned long q = denominator(c.bound_exponent).convert_to<unsigned long>();
            if (p < 0) return measured <= 0;
            if (integer_pow(measured, q) > integer_pow(N, p.convert_to<unsigned long>()))
                return false;
        }
    }
    return true;
}

}  // namespace panda
