#pragma once

//==========================================================================================
// Data directory loading and canonical CSV output. One file per relation symbol, named
// <symbol>.csv, header row = variable names. Values are bare tokens ([A-Za-z0-9_.-]+),
// no quoting.
//==========================================================================================

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "panda/query.hpp"
#include "panda/relation.hpp"

namespace panda {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') { out.push_back(cur); cur.clear(); }
        else if (c != '\r') cur += c;
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline Relation load_relation_csv(const std::filesystem::path& file, const Atom& atom) {
    std::ifstream in(file);
    if (!in) throw io_error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw io_error(file.string() + ": missing header row");
    auto header = detail::split_csv_line(line);
    if (header.size() != atom.vars.size())
        throw io_error(file.string() + ": header arity " + std::to_string(header.size()) +
                       " does not match atom " + atom.symbol + "/" + std::to_string(atom.vars.size()));
    for (size_t i = 0; i < header.size(); i++)
        if (header[i] != atom.vars[i])
            throw io_error(file.string() + ": header column '" + header[i] +
                           "' does not match atom variable '" + atom.vars[i] + "'");
    Relation r{Schema(atom.vars)};
    size_t lineno = 1;
    while (std::getline(in, line)) {
        lineno++;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != atom.vars.size())
            throw io_error(file.string() + ":" + std::to_string(lineno) + ": ragged row with " +
                           std::to_string(fields.size()) + " fields");
        Tuple t;
        t.reserve(fields.size());
        for (const auto& f : fields) t.push_back(Value::parse(f));
        r.insert(std::move(t));
    }
    return r;
}

// Load <symbol>.csv for every distinct relation symbol of the query.
inline Database load_database(const std::filesystem::path& dir, const ConjunctiveQuery& q) {
    Database db;
    for (const auto& atom : q.atoms) {
        if (db.relations.count(atom.symbol)) continue;  // self-joins share one file
        auto file = dir / (atom.symbol + ".csv");
        if (!std::filesystem::exists(file)) throw io_error("missing data file " + file.string());
        db.relations.emplace(atom.symbol, load_relation_csv(file, atom));
    }
    return db;
}

// Canonical form: header in schema order, rows sorted (the tuple set is already ordered).
inline std::string relation_to_csv(const Relation& r) {
    std::ostringstream os;
    const auto& vars = r.schema().vars();
    for (size_t i = 0; i < vars.size(); i++) os << (i ? "," : "") << vars[i];
    os << "\n";
    for (const auto& t : r.tuples()) {
        for (size_t i = 0; i < t.size(); i++) os << (i ? "," : "") << t[i].str();
        os << "\n";
    }
    return os.str();
}

inline void write_relation_csv(const std::filesystem::path& file, const Relation& r) {
    std::ofstream out(file);
    if (!out) throw io_error("cannot write " + file.string());
    out << relation_to_csv(r);
}

}  // namespace panda
