#pragma once

//==========================================================================================
// Exact linear programming over rationals: a dense two-phase tableau simplex with dual
// extraction. The pivot rule is Dantzig's (largest reduced cost) with a permanent switch
// to Bland's rule after a run of degenerate pivots, which guarantees termination on the
// highly degenerate polymatroid programs solved here.
//
// Conventions:
//   maximize c.x  subject to  rows (a.x <= b  or  a.x = b),  x_j >= 0 or x_j free.
//
// On an optimal solve, the returned duals satisfy strong duality and complementary
// slackness exactly; both are asserted in the test suite with no tolerance.
//==========================================================================================

#include <cassert>
#include <vector>

#include "panda/rational.hpp"

namespace panda {

enum class RowRel { le, eq };

struct LinearProgram {
    size_t num_vars = 0;
    std::vector<Rational> objective;  // size num_vars, maximized
    struct Row {
        std::vector<Rational> coeffs;  // size num_vars
        RowRel rel = RowRel::le;
        Rational rhs;
    };
    std::vector<Row> rows;
    std::vector<bool> free_var;  // true: unrestricted; false: >= 0. Empty = all >= 0.

    size_t add_var(const Rational& obj_coeff, bool is_free = false) {
        num_vars++;
        objective.push_back(obj_coeff);
        free_var.push_back(is_free);
        for (auto& r : rows) r.coeffs.emplace_back(0);
        return num_vars - 1;
    }
    size_t add_row(RowRel rel, const Rational& rhs) {
        rows.push_back({std::vector<Rational>(num_vars, Rational(0)), rel, rhs});
        return rows.size() - 1;
    }
    void set(size_t row, size_t var, const Rational& a) { rows[row].coeffs[var] = a; }
    void add(size_t row, size_t var, const Rational& a) { rows[row].coeffs[var] += a; }
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    Rational value;
    std::vector<Rational> primal;  // per original variable
    std::vector<Rational> dual;    // per row; for <= rows the dual is >= 0
};

namespace detail {

// Dense simplex tableau over the equality system built from the input program.
class SimplexTableau {
public:
    explicit SimplexTableau(const LinearProgram& lp) : lp_(lp) {
        build();
    }

    LpSolution run() {
        LpSolution sol;
        // Phase 1: drive the artificial variables to zero.
        if (!artificials_.empty()) {
            std::vector<Rational> saved_obj = obj_;
            obj_.assign(cols_, Rational(0));
            for (size_t a : artificials_) obj_[a] = -1;
            recompute_obj_row();
            iterate(true);
            if (obj_value() != 0) {
                sol.status = LpStatus::infeasible;
                return sol;
            }
            pivot_out_artificials();
            obj_ = saved_obj;
            recompute_obj_row();
        }
        // Phase 2
        bool bounded = iterate(false);
        if (!bounded) {
            sol.status = LpStatus::unbounded;
            return sol;
        }
        sol.status = LpStatus::optimal;
        sol.value = obj_value();
        sol.primal = extract_primal();
        sol.dual = extract_dual();
        return sol;
    }

private:
    const LinearProgram& lp_;
    size_t rows_ = 0, cols_ = 0;
    std::vector<std::vector<Rational>> tab_;  // rows_ x (cols_ + 1), last col = rhs
    std::vector<Rational> obj_;               // objective per column (current phase)
    std::vector<Rational> objrow_;            // reduced-cost row: c_j - z_j, plus obj value
    std::vector<int> basis_;                  // basic column per row
    std::vector<size_t> pos_col_, neg_col_;   // split columns per original variable
    std::vector<int> slack_col_;              // per row, -1 if none
    std::vector<int> flip_;                   // per row, +1 or -1
    std::vector<size_t> artificials_;
    std::vector<bool> banned_;                // artificials barred from entering in phase 2

    void build() {
        size_t n = lp_.num_vars, m = lp_.rows.size();
        rows_ = m;
        pos_col_.resize(n);
        neg_col_.resize(n);
        slack_col_.assign(m, -1);
        flip_.assign(m, 1);

        size_t col = 0;
        for (size_t j = 0; j < n; j++) {
            pos_col_[j] = col++;
            bool fr = j < lp_.free_var.size() && lp_.free_var[j];
            neg_col_[j] = fr ? col++ : SIZE_MAX;
        }
        std::vector<size_t> slack_ix;
        for (size_t i = 0; i < m; i++)
            if (lp_.rows[i].rel == RowRel::le) slack_col_[i] = static_cast<int>(col++);
        size_t first_art = col;

        // decide flips so every rhs is nonnegative
        for (size_t i = 0; i < m; i++)
            if (lp_.rows[i].rhs < 0) flip_[i] = -1;

        // a row needs an artificial unless its slack can start basic (unflipped <= row)
        std::vector<int> art_col(m, -1);
        for (size_t i = 0; i < m; i++) {
            bool slack_ok = lp_.rows[i].rel == RowRel::le && flip_[i] == 1;
            if (!slack_ok) {
                art_col[i] = static_cast<int>(col++);
                artificials_.push_back(static_cast<size_t>(art_col[i]));
            }
        }
        cols_ = col;
        banned_.assign(cols_, false);

        tab_.assign(rows_, std::vector<Rational>(cols_ + 1, Rational(0)));
        for (size_t i = 0; i < m; i++) {
            const auto& row = lp_.rows[i];
            for (size_t j = 0; j < n; j++) {
                if (row.coeffs[j] == 0) continue;
                Rational a = row.coeffs[j] * flip_[i];
                tab_[i][pos_col_[j]] = a;
                if (neg_col_[j] != SIZE_MAX) tab_[i][neg_col_[j]] = -a;
            }
            if (slack_col_[i] >= 0) tab_[i][static_cast<size_t>(slack_col_[i])] = flip_[i];
            if (art_col[i] >= 0) tab_[i][static_cast<size_t>(art_col[i])] = 1;
            tab_[i][cols_] = row.rhs * flip_[i];
        }

        basis_.assign(rows_, -1);
        for (size_t i = 0; i < m; i++)
            basis_[i] = art_col[i] >= 0 ? art_col[i] : slack_col_[i];

        obj_.assign(cols_, Rational(0));
        for (size_t j = 0; j < n; j++) {
            obj_[pos_col_[j]] = lp_.objective[j];
            if (neg_col_[j] != SIZE_MAX) obj_[neg_col_[j]] = -lp_.objective[j];
        }
        recompute_obj_row();
    }

    void recompute_obj_row() {
        objrow_.assign(cols_ + 1, Rational(0));
        for (size_t j = 0; j <= cols_; j++) {
            Rational z(0);
            for (size_t i = 0; i < rows_; i++) {
                const Rational& cb = obj_[static_cast<size_t>(basis_[i])];
                if (cb != 0 && tab_[i][j] != 0) z += cb * tab_[i][j];
            }
            objrow_[j] = (j < cols_ ? obj_[j] : Rational(0)) - z;
        }
    }

    Rational obj_value() const {
        Rational v(0);
        for (size_t i = 0; i < rows_; i++) {
            const Rational& cb = obj_[static_cast<size_t>(basis_[i])];
            if (cb != 0) v += cb * tab_[i][cols_];
        }
        return v;
    }

    void pivot(size_t pr, size_t pc) {
        Rational piv = tab_[pr][pc];
        assert(piv != 0);
        if (piv != 1)
            for (size_t j = 0; j <= cols_; j++)
                if (tab_[pr][j] != 0) tab_[pr][j] /= piv;
        for (size_t i = 0; i < rows_; i++) {
            if (i == pr) continue;
            Rational f = tab_[i][pc];
            if (f == 0) continue;
            for (size_t j = 0; j <= cols_; j++)
                if (tab_[pr][j] != 0) tab_[i][j] -= f * tab_[pr][j];
        }
        {
            Rational f = objrow_[pc];
            if (f != 0)
                for (size_t j = 0; j <= cols_; j++)
                    if (tab_[pr][j] != 0) objrow_[j] -= f * tab_[pr][j];
        }
        basis_[pr] = static_cast<int>(pc);
    }

    // Returns false when the objective is unbounded.
    bool iterate(bool phase1) {
        int degenerate_run = 0;
        bool blands = false;
        while (true) {
            // entering column
            size_t pc = SIZE_MAX;
            if (!blands) {
                Rational best(0);
                for (size_t j = 0; j < cols_; j++) {
                    if (banned_[j]) continue;
                    if (objrow_[j] > best) { best = objrow_[j]; pc = j; }
                }
            } else {
                for (size_t j = 0; j < cols_; j++) {
                    if (banned_[j]) continue;
                    if (objrow_[j] > 0) { pc = j; break; }
                }
            }
            if (pc == SIZE_MAX) return true;  // optimal

            // leaving row: min ratio, Bland tie-break on basic column index
            size_t pr = SIZE_MAX;
            Rational best_ratio;
            for (size_t i = 0; i < rows_; i++) {
                if (tab_[i][pc] <= 0) continue;
                Rational ratio = tab_[i][cols_] / tab_[i][pc];
                if (pr == SIZE_MAX || ratio < best_ratio ||
                    (ratio == best_ratio && basis_[i] < basis_[pr])) {
                    pr = i;
                    best_ratio = ratio;
                }
            }
            if (pr == SIZE_MAX) {
                if (phase1) return true;  // cannot happen: phase-1 objective is bounded
                return false;
            }
            bool degenerate = tab_[pr][cols_] == 0;
            pivot(pr, pc);
            if (degenerate) {
                if (++degenerate_run > 64) blands = true;
            } else {
                degenerate_run = 0;
            }
        }
    }

    // After phase 1 at value 0, remove leftover zero-level artificials from the basis.
    void pivot_out_artificials() {
        for (size_t a : artificials_) banned_[a] = true;
        for (size_t i = 0; i < rows_; i++) {
            if (!banned_[static_cast<size_t>(basis_[i])]) continue;
            assert(tab_[i][cols_] == 0);
            size_t pc = SIZE_MAX;
            for (size_t j = 0; j < cols_; j++)
                if (!banned_[j] && tab_[i][j] != 0) { pc = j; break; }
            if (pc != SIZE_MAX) pivot(i, pc);
            // else: the row is all zeros over real columns (redundant constraint);
            // the artificial stays basic at level 0, which is harmless.
        }
    }

    std::vector<Rational> extract_primal() const {
        std::vector<Rational> x(lp_.num_vars, Rational(0));
        for (size_t i = 0; i < rows_; i++) {
            size_t b = static_cast<size_t>(basis_[i]);
            for (size_t j = 0; j < lp_.num_vars; j++) {
                if (b == pos_col_[j]) x[j] += tab_[i][cols_];
                else if (neg_col_[j] != SIZE_MAX && b == neg_col_[j]) x[j] -= tab_[i][cols_];
            }
        }
        return x;
    }

    // Simplex multipliers y = c_B B^{-1}, translated back through the row flips:
    // y_i = c_j - objrow_j read under row i's identity column.
    std::vector<Rational> extract_dual() const {
        std::vector<Rational> y(rows_, Rational(0));
        // For each row find a column that held the identity for it at start: the slack
        // (coefficient flip) or the artificial (coefficient 1). z_j = c_j - objrow_j and
        // y = c_B B^{-1} satisfies z_j = y . A_j for those columns.
        std::vector<int> art_of_row(rows_, -1);
        {
            size_t k = 0;
            for (size_t i = 0; i < rows_; i++) {
                bool slack_ok = lp_.rows[i].rel == RowRel::le && flip_[i] == 1;
                if (!slack_ok) art_of_row[i] = static_cast<int>(artificials_[k++]);
            }
        }
        for (size_t i = 0; i < rows_; i++) {
            if (art_of_row[i] >= 0) {
                size_t a = static_cast<size_t>(art_of_row[i]);
                // column a = e_i: y_i = z_a = c_a - objrow_a, c_a = 0 in phase 2
                Rational yi = -objrow_[a];
                y[i] = yi * flip_[i];
            } else {
                size_t s = static_cast<size_t>(slack_col_[i]);
                Rational yi = -objrow_[s];  // column s = flip * e_i with flip = +1 here
                y[i] = yi;
            }
        }
        return y;
    }
};

}  // namespace detail

inline LpSolution solve(const LinearProgram& lp) {
    detail::SimplexTableau t(lp);
    return t.run();
}

}  // namespace panda
