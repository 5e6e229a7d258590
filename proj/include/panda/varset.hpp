#pragma once

//==========================================================================================
// Bitmask representation of variable sets, scoped to one query's variable table.
// The table orders variables by name; bit i stands for the i-th smallest name.
//==========================================================================================

#include <bit>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "panda/relation.hpp"

namespace panda {

using VarSet = std::uint32_t;

constexpr size_t kMaxVars = 12;  // the LP below has 2^n - 1 coordinates

struct size_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class VarTable {
public:
    VarTable() = default;
    explicit VarTable(const std::set<Variable>& vars) : names_(vars.begin(), vars.end()) {
        if (names_.size() > kMaxVars)
            throw size_error("too many variables (" + std::to_string(names_.size()) +
                             " > " + std::to_string(kMaxVars) + ")");
        for (size_t i = 0; i < names_.size(); i++) index_[names_[i]] = i;
    }

    size_t size() const { return names_.size(); }
    const std::vector<Variable>& names() const { return names_; }
    const Variable& name(size_t i) const { return names_.at(i); }

    size_t index(const Variable& v) const {
        auto it = index_.find(v);
        if (it == index_.end()) throw argument_error("unknown variable " + v);
        return it->second;
    }

    VarSet set_of(const std::set<Variable>& vars) const {
        VarSet s = 0;
        for (const auto& v : vars) s |= VarSet(1) << index(v);
        return s;
    }
    VarSet set_of(const std::vector<Variable>& vars) const {
        VarSet s = 0;
        for (const auto& v : vars) s |= VarSet(1) << index(v);
        return s;
    }
    VarSet full() const { return (VarSet(1) << names_.size()) - 1; }

    std::set<Variable> vars_of(VarSet s) const {
        std::set<Variable> out;
        for (size_t i = 0; i < names_.size(); i++)
            if ((s >> i) & 1) out.insert(names_[i]);
        return out;
    }
    std::vector<Variable> var_list(VarSet s) const {
        std::vector<Variable> out;
        for (size_t i = 0; i < names_.size(); i++)
            if ((s >> i) & 1) out.push_back(names_[i]);
        return out;
    }

    // h(XYZ) when every name is a single character, h({foo,bar}) otherwise
    std::string render(VarSet s) const {
        bool compact = true;
        for (const auto& n : names_) compact &= (n.size() == 1);
        std::string out;
        for (size_t i = 0; i < names_.size(); i++) {
            if (!((s >> i) & 1)) continue;
            if (!compact && !out.empty()) out += ",";
            out += names_[i];
        }
        return compact ? out : "{" + out + "}";
    }

private:
    std::vector<Variable> names_;
    std::map<Variable, size_t> index_;
};

inline int varset_size(VarSet s) { return std::popcount(s); }
inline bool subset(VarSet a, VarSet b) { return (a & ~b) == 0; }

// Order that matches lexicographic comparison of the sorted name sequences.
inline bool varset_less(VarSet a, VarSet b) {
    while (a != 0 && b != 0) {
        int la = std::countr_zero(a), lb = std::countr_zero(b);
        if (la != lb) return la < lb;
        a &= a - 1;
        b &= b - 1;
    }
    return a == 0 && b != 0;
}

struct VarSetLess {
    bool operator()(VarSet a, VarSet b) const { return varset_less(a, b); }
};

}  // namespace panda
