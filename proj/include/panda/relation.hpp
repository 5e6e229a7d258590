#pragma once

//==========================================================================================
// In-memory relational data model: values, schemas, relations, databases, and the
// relational operators everything else is built from (join, project, semijoin, degree
// computation, degree-based partitioning).
//
// Everything uses set semantics and a total order on values, so all operator outputs are
// deterministic.
//==========================================================================================

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "panda/rational.hpp"

namespace panda {

using Variable = std::string;

struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct argument_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A domain element: an integer or a string constant. Integers order before strings;
// integers compare numerically, strings lexicographically.
class Value {
public:
    Value() : is_int_(true), int_(0) {}
    explicit Value(std::int64_t v) : is_int_(true), int_(v) {}
    explicit Value(std::string s) : is_int_(false), int_(0), str_(std::move(s)) {}

    // Integer-looking tokens become integers, everything else stays a string.
    static Value parse(const std::string& tok) {
        if (tok.empty()) return Value(std::string());
        size_t i = (tok[0] == '-') ? 1 : 0;
        if (i == tok.size()) return Value(tok);
        for (size_t j = i; j < tok.size(); j++)
            if (!isdigit(static_cast<unsigned char>(tok[j]))) return Value(tok);
        if (tok.size() > 18) return Value(tok);  // avoid overflow, keep as string
        return Value(static_cast<std::int64_t>(std::stoll(tok)));
    }

    bool is_int() const { return is_int_; }
    std::int64_t as_int() const { return int_; }
    const std::string& as_str() const { return str_; }

    std::string str() const { return is_int_ ? std::to_string(int_) : str_; }

    friend bool operator==(const Value& a, const Value& b) {
        return a.is_int_ == b.is_int_ && a.int_ == b.int_ && a.str_ == b.str_;
    }
    friend bool operator<(const Value& a, const Value& b) {
        if (a.is_int_ != b.is_int_) return a.is_int_;  // ints before strings
        if (a.is_int_) return a.int_ < b.int_;
        return a.str_ < b.str_;
    }

private:
    bool is_int_;
    std::int64_t int_;
    std::string str_;
};

using Tuple = std::vector<Value>;

// Ordered sequence of distinct variables.
class Schema {
public:
    Schema() = default;
    explicit Schema(std::vector<Variable> vars) : vars_(std::move(vars)) {
        std::set<Variable> seen;
        for (const auto& v : vars_) {
            if (v.empty()) throw schema_error("empty variable name");
            if (!seen.insert(v).second) throw schema_error("duplicate variable " + v + " in schema");
        }
    }

    const std::vector<Variable>& vars() const { return vars_; }
    size_t arity() const { return vars_.size(); }

    bool contains(const Variable& v) const {
        return std::find(vars_.begin(), vars_.end(), v) != vars_.end();
    }
    size_t index_of(const Variable& v) const {
        auto it = std::find(vars_.begin(), vars_.end(), v);
        if (it == vars_.end()) throw schema_error("variable " + v + " not in schema");
        return static_cast<size_t>(it - vars_.begin());
    }
    std::set<Variable> var_set() const { return {vars_.begin(), vars_.end()}; }

    friend bool operator==(const Schema& a, const Schema& b) { return a.vars_ == b.vars_; }

private:
    std::vector<Variable> vars_;
};

// A finite set of tuples over a schema.
class Relation {
public:
    Relation() = default;
    explicit Relation(Schema schema) : schema_(std::move(schema)) {}
    Relation(Schema schema, std::set<Tuple> tuples)
        : schema_(std::move(schema)), tuples_(std::move(tuples)) {
        for (const auto& t : tuples_)
            if (t.size() != schema_.arity()) throw schema_error("tuple arity mismatch");
    }

    const Schema& schema() const { return schema_; }
    const std::set<Tuple>& tuples() const { return tuples_; }
    size_t size() const { return tuples_.size(); }
    bool empty() const { return tuples_.empty(); }

    void insert(Tuple t) {
        if (t.size() != schema_.arity()) throw schema_error("tuple arity mismatch");
        tuples_.insert(std::move(t));
    }
    bool contains(const Tuple& t) const { return tuples_.count(t) > 0; }

    friend bool operator==(const Relation& a, const Relation& b) {
        return a.schema_ == b.schema_ && a.tuples_ == b.tuples_;
    }

private:
    Schema schema_;
    std::set<Tuple> tuples_;
};

// Mapping from relation symbol to instance; repeated atoms with the same symbol share data.
struct Database {
    std::map<std::string, Relation> relations;

    const Relation& at(const std::string& symbol) const {
        auto it = relations.find(symbol);
        if (it == relations.end()) throw argument_error("unknown relation " + symbol);
        return it->second;
    }
    bool has(const std::string& symbol) const { return relations.count(symbol) > 0; }

    // N = total number of tuples in all relations
    size_t total_tuples() const {
        size_t n = 0;
        for (const auto& [_, r] : relations) n += r.size();
        return n;
    }
};

namespace detail {

inline std::vector<size_t> positions(const Schema& s, const std::vector<Variable>& vars) {
    std::vector<size_t> idx;
    idx.reserve(vars.size());
    for (const auto& v : vars) idx.push_back(s.index_of(v));
    return idx;
}

inline Tuple extract(const Tuple& t, const std::vector<size_t>& idx) {
    Tuple out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(t[i]);
    return out;
}

inline std::vector<Variable> sorted_vars(const std::set<Variable>& s) {
    return {s.begin(), s.end()};
}

}  // namespace detail

// Natural join. Hash-style build on the smaller input, keyed by the shared variables.
// Output schema: left schema followed by the right-only variables.
inline Relation join(const Relation& left, const Relation& right) {
    const Schema& ls = left.schema();
    const Schema& rs = right.schema();
    std::vector<Variable> shared, right_only;
    for (const auto& v : rs.vars())
        (ls.contains(v) ? shared : right_only).push_back(v);

    std::vector<Variable> out_vars = ls.vars();
    out_vars.insert(out_vars.end(), right_only.begin(), right_only.end());
    Relation out{Schema(out_vars)};

    auto lkey = detail::positions(ls, shared);
    auto rkey = detail::positions(rs, shared);
    auto rrest = detail::positions(rs, right_only);

    // build side = smaller relation
    bool build_right = right.size() <= left.size();
    const Relation& build = build_right ? right : left;
    const Relation& probe = build_right ? left : right;
    const auto& bkey = build_right ? rkey : lkey;
    const auto& pkey = build_right ? lkey : rkey;

    std::map<Tuple, std::vector<const Tuple*>> index;
    for (const auto& t : build.tuples()) index[detail::extract(t, bkey)].push_back(&t);

    for (const auto& p : probe.tuples()) {
        auto it = index.find(detail::extract(p, pkey));
        if (it == index.end()) continue;
        for (const Tuple* b : it->second) {
            const Tuple& lt = build_right ? p : *b;
            const Tuple& rt = build_right ? *b : p;
            Tuple t = lt;
            for (size_t i : rrest) t.push_back(rt[i]);
            out.insert(std::move(t));
        }
    }
    return out;
}

inline Relation project(const Relation& r, const std::set<Variable>& onto) {
    for (const auto& v : onto)
        if (!r.schema().contains(v)) throw schema_error("project: unknown variable " + v);
    std::vector<Variable> vars = detail::sorted_vars(onto);
    auto idx = detail::positions(r.schema(), vars);
    Relation out{Schema(vars)};
    for (const auto& t : r.tuples()) out.insert(detail::extract(t, idx));
    return out;
}

// Projection that keeps the given variable order.
inline Relation project_ordered(const Relation& r, const std::vector<Variable>& vars) {
    auto idx = detail::positions(r.schema(), vars);
    Relation out{Schema(vars)};
    for (const auto& t : r.tuples()) out.insert(detail::extract(t, idx));
    return out;
}

// Tuples of `left` that join with at least one tuple of `right`.
inline Relation semijoin(const Relation& left, const Relation& right) {
    std::vector<Variable> shared;
    for (const auto& v : left.schema().vars())
        if (right.schema().contains(v)) shared.push_back(v);
    auto lkey = detail::positions(left.schema(), shared);
    auto rkey = detail::positions(right.schema(), shared);
    std::set<Tuple> keys;
    for (const auto& t : right.tuples()) keys.insert(detail::extract(t, rkey));
    Relation out{left.schema()};
    for (const auto& t : left.tuples())
        if (keys.count(detail::extract(t, lkey))) out.insert(t);
    return out;
}

// deg_r(Y|X) = max over x-bindings of |pi_Y sigma_{X=x} r|; degree(r, ys, {}) = |pi_Y r|.
inline size_t degree(const Relation& r, const std::set<Variable>& ys, const std::set<Variable>& xs) {
    for (const auto& v : ys)
        if (xs.count(v)) throw argument_error("degree: ys and xs overlap on " + v);
    auto yi = detail::positions(r.schema(), detail::sorted_vars(ys));
    auto xi = detail::positions(r.schema(), detail::sorted_vars(xs));
    std::map<Tuple, std::set<Tuple>> groups;
    for (const auto& t : r.tuples())
        groups[detail::extract(t, xi)].insert(detail::extract(t, yi));
    size_t best = 0;
    for (const auto& [_, g] : groups) best = std::max(best, g.size());
    return best;
}

// Per-binding degrees of Y given X, keyed by the x-binding (over sorted xs).
inline std::map<Tuple, size_t> degree_map(const Relation& r, const std::set<Variable>& ys,
                                          const std::set<Variable>& xs) {
    auto yi = detail::positions(r.schema(), detail::sorted_vars(ys));
    auto xi = detail::positions(r.schema(), detail::sorted_vars(xs));
    std::map<Tuple, std::set<Tuple>> groups;
    for (const auto& t : r.tuples())
        groups[detail::extract(t, xi)].insert(detail::extract(t, yi));
    std::map<Tuple, size_t> out;
    for (const auto& [k, g] : groups) out[k] = g.size();
    return out;
}

// Sum over x-bindings of deg(Y|X=x)^k: the k-th power of the lk-norm of the degree
// vector, kept integral.
inline Integer lknorm_pow(const Relation& r, const std::set<Variable>& ys,
                          const std::set<Variable>& xs, unsigned long k) {
    if (k == 0) throw argument_error("lknorm_pow: k must be >= 1");
    for (const auto& v : ys)
        if (xs.count(v)) throw argument_error("lknorm_pow: ys and xs overlap on " + v);
    Integer sum(0);
    for (const auto& [_, d] : degree_map(r, ys, xs)) sum += integer_pow(Integer(d), k);
    return sum;
}

// Split r into (light, heavy) by whether the x-binding's degree is <= threshold.
inline std::pair<Relation, Relation> partition_by_degree(const Relation& r,
                                                         const std::set<Variable>& ys,
                                                         const std::set<Variable>& xs,
                                                         const Rational& threshold) {
    for (const auto& v : ys)
        if (xs.count(v)) throw argument_error("partition_by_degree: ys and xs overlap on " + v);
    auto degs = degree_map(r, ys, xs);
    auto xi = detail::positions(r.schema(), detail::sorted_vars(xs));
    Relation light{r.schema()}, heavy{r.schema()};
    for (const auto& t : r.tuples()) {
        size_t d = degs.at(detail::extract(t, xi));
        (Rational(d) <= threshold ? light : heavy).insert(t);
    }
    return {std::move(light), std::move(heavy)};
}

}  // namespace panda
