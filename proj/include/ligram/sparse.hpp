#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ligram/error.hpp"

namespace ligram {

struct Triplet {
    std::size_t row = 0;
    std::size_t col = 0;
    double weight = 0.0;

    bool operator==(const Triplet&) const = default;
};

/// Immutable compressed-row matrix of doubles. Entries are unique and sorted by
/// (row, col); weights are finite.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), row_start_(rows + 1, 0) {}

    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(rows, cols);
        m.col_.reserve(entries.size());
        m.val_.reserve(entries.size());
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& e = entries[k];
            if (e.row >= rows || e.col >= cols) {
                throw Error("sparse entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                            ") out of range for " + std::to_string(rows) + "x" + std::to_string(cols));
            }
            if (!std::isfinite(e.weight)) throw NumericError("sparse entry with non-finite weight");
            if (k > 0 && entries[k - 1].row == e.row && entries[k - 1].col == e.col) {
                throw Error("duplicate sparse entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) + ")");
            }
            ++m.row_start_[e.row + 1];
            m.col_.push_back(e.col);
            m.val_.push_back(e.weight);
        }
        for (std::size_t r = 0; r < rows; ++r) m.row_start_[r + 1] += m.row_start_[r];
        return m;
    }

    static SparseMatrix identity(std::size_t n) {
        std::vector<Triplet> t;
        t.reserve(n);
        for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
        return from_triplets(n, n, std::move(t));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return val_.size(); }

    /// Half-open range [begin, end) of entry positions belonging to row r.
    std::size_t row_begin(std::size_t r) const { return row_start_[r]; }
    std::size_t row_end(std::size_t r) const { return row_start_[r + 1]; }
    std::size_t col_at(std::size_t k) const { return col_[k]; }
    double value_at(std::size_t k) const { return val_[k]; }

    double at(std::size_t r, std::size_t c) const {
        const auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_start_[r]);
        const auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_start_[r + 1]);
        const auto it = std::lower_bound(first, last, c);
        if (it == last || *it != c) return 0.0;
        return val_[static_cast<std::size_t>(it - col_.begin())];
    }

    std::vector<Triplet> entries() const {
        std::vector<Triplet> out;
        out.reserve(nnz());
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) out.push_back({r, col_[k], val_[k]});
        }
        return out;
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_[k])) = val_[k];
            }
        }
        return d;
    }

    template <typename T>
    Eigen::SparseMatrix<T, Eigen::RowMajor> to_eigen() const {
        std::vector<Eigen::Triplet<T>> t;
        t.reserve(nnz());
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                t.emplace_back(static_cast<int>(r), static_cast<int>(col_[k]), static_cast<T>(val_[k]));
            }
        }
        Eigen::SparseMatrix<T, Eigen::RowMajor> m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        m.setFromTriplets(t.begin(), t.end());
        m.makeCompressed();
        return m;
    }

    /// Exact symmetry: square and every (i, j) weight equals (j, i) bit for bit.
    bool is_symmetric() const {
        if (rows_ != cols_) return false;
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                if (at(col_[k], r) != val_[k]) return false;
            }
        }
        return true;
    }

    bool operator==(const SparseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_start_{0};
    std::vector<std::size_t> col_;
    std::vector<double> val_;
};

} // namespace ligram
