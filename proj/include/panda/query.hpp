#pragma once

//==========================================================================================
// Conjunctive query AST and its concrete syntax:
//
//     Head(v1,...,vk) :- A1(u,...), ..., Am(u,...).
//
// Identifiers are [A-Za-z_][A-Za-z0-9_]*, whitespace is insignificant.
//==========================================================================================

#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "panda/relation.hpp"

namespace panda {

struct parse_error : std::runtime_error {
    int line, column;
    parse_error(const std::string& msg, int line_, int col_)
        : std::runtime_error(msg + " at line " + std::to_string(line_) + ", column " +
                             std::to_string(col_)),
          line(line_), column(col_) {}
};

struct semantic_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Atom {
    std::string symbol;
    std::vector<Variable> vars;

    std::set<Variable> var_set() const { return {vars.begin(), vars.end()}; }

    friend bool operator==(const Atom& a, const Atom& b) {
        return a.symbol == b.symbol && a.vars == b.vars;
    }
};

struct ConjunctiveQuery {
    std::string head_symbol;
    std::vector<Variable> head_vars;  // F, in declaration order
    std::vector<Atom> atoms;

    std::set<Variable> free_set() const { return {head_vars.begin(), head_vars.end()}; }

    // V = union of atom variable sets
    std::set<Variable> all_vars() const {
        std::set<Variable> v;
        for (const auto& a : atoms) v.insert(a.vars.begin(), a.vars.end());
        return v;
    }

    bool is_boolean() const { return head_vars.empty(); }
    bool is_full() const { return free_set() == all_vars(); }

    friend bool operator==(const ConjunctiveQuery& a, const ConjunctiveQuery& b) {
        return a.head_symbol == b.head_symbol && a.head_vars == b.head_vars && a.atoms == b.atoms;
    }
};

namespace detail {

class QueryScanner {
public:
    explicit QueryScanner(const std::string& text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '\n') { line_++; col_ = 1; pos_++; }
            else if (isspace(static_cast<unsigned char>(c))) { col_++; pos_++; }
            else break;
        }
    }
    bool eof() {
        skip_ws();
        return pos_ >= text_.size();
    }
    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }
    void expect(char c, const std::string& what) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c)
            throw parse_error("expected '" + std::string(1, c) + "' " + what, line_, col_);
        pos_++; col_++;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) { pos_++; col_++; return true; }
        return false;
    }
    std::string identifier(const std::string& what) {
        skip_ws();
        if (pos_ >= text_.size() || !(isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            throw parse_error("expected identifier (" + what + ")", line_, col_);
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            pos_++; col_++;
        }
        return text_.substr(start, pos_ - start);
    }
    int line() const { return line_; }
    int column() const { return col_; }

private:
    const std::string& text_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

}  // namespace detail

inline ConjunctiveQuery parse_query(const std::string& text) {
    detail::QueryScanner sc(text);
    ConjunctiveQuery q;
    q.head_symbol = sc.identifier("head symbol");
    sc.expect('(', "after head symbol");
    if (!sc.accept(')')) {
        std::set<Variable> seen;
        while (true) {
            Variable v = sc.identifier("head variable");
            if (!seen.insert(v).second)
                throw semantic_error("duplicate head variable " + v);
            q.head_vars.push_back(v);
            if (sc.accept(')')) break;
            sc.expect(',', "between head variables");
        }
    }
    sc.expect(':', "before rule body");
    sc.expect('-', "before rule body");
    while (true) {
        Atom a;
        a.symbol = sc.identifier("atom symbol");
        sc.expect('(', "after atom symbol");
        std::set<Variable> seen;
        while (true) {
            Variable v = sc.identifier("atom variable");
            if (!seen.insert(v).second)
                throw semantic_error("repeated variable " + v + " within atom " + a.symbol);
            a.vars.push_back(v);
            if (sc.accept(')')) break;
            sc.expect(',', "between atom variables");
        }
        if (a.vars.empty()) throw semantic_error("atom " + a.symbol + " has arity 0");
        q.atoms.push_back(std::move(a));
        if (sc.accept('.')) break;
        sc.expect(',', "between atoms");
    }
    if (!sc.eof())
        throw parse_error("trailing input after query", sc.line(), sc.column());
    if (q.atoms.empty()) throw semantic_error("query has no atoms");

    // atoms with the same symbol must agree on arity (they share one instance)
    std::map<std::string, size_t> arities;
    for (const auto& a : q.atoms) {
        auto [it, fresh] = arities.emplace(a.symbol, a.vars.size());
        if (!fresh && it->second != a.vars.size())
            throw semantic_error("relation " + a.symbol + " used with conflicting arities");
    }

    auto v = q.all_vars();
    for (const auto& h : q.head_vars)
        if (!v.count(h)) throw semantic_error("head variable " + h + " does not occur in the body");
    return q;
}

// Canonical renderer; parse_query(render_query(q)) == q.
inline std::string render_query(const ConjunctiveQuery& q) {
    std::ostringstream os;
    os << q.head_symbol << "(";
    for (size_t i = 0; i < q.head_vars.size(); i++)
        os << (i ? "," : "") << q.head_vars[i];
    os << ") :- ";
    for (size_t i = 0; i < q.atoms.size(); i++) {
        if (i) os << ", ";
        os << q.atoms[i].symbol << "(";
        for (size_t j = 0; j < q.atoms[i].vars.size(); j++)
            os << (j ? "," : "") << q.atoms[i].vars[j];
        os << ")";
    }
    os << ".";
    return os.str();
}

}  // namespace panda
