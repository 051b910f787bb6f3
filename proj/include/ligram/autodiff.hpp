#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ligram/error.hpp"
#include "ligram/rng.hpp"

namespace ligram::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using SparseOperator = Eigen::SparseMatrix<T, Eigen::RowMajor>;

enum class Mode { train, eval };

template <typename T>
class Tape;

/// Handle to a node of a Tape. Cheap to copy; valid while its tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix<T>& value() const { return tape_->value(*this); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape<T>& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool requires_grad() const { return tape_->requires_grad(*this); }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Computation record: nodes are appended in execution order, so one reverse
/// sweep visits them in topological order.
///
/// The tape also folds every discrete decision taken during the forward pass
/// (ReLU masks, clamps, thresholded graphs, argmax labels) into a signature.
/// Two evaluations with equal signatures took the same branch everywhere,
/// which is what the finite-difference checker needs to know.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix<T>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Matrix<T> value, bool requires_grad) {
        return record("leaf", std::move(value), requires_grad, nullptr);
    }
    Var<T> constant(Matrix<T> value) { return leaf(std::move(value), false); }
    Var<T> parameter(Matrix<T> value) { return leaf(std::move(value), true); }

    /// Appends a node. `backward` receives the gradient flowing into the new
    /// node and must accumulate into its inputs.
    Var<T> record(const char* op, Matrix<T> value, bool requires_grad, Backward backward) {
        if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
        nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad, false, std::move(backward)});
        return Var<T>(this, nodes_.size() - 1);
    }

    const Matrix<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
    bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }

    /// Gradient of the last backward() loss w.r.t. v (zeros if none reached it).
    Matrix<T> grad(Var<T> v) const {
        const auto& n = nodes_.at(v.id());
        if (!n.has_grad) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    /// Adds `delta` to the gradient of node `id` when that node tracks gradients.
    template <typename Expr>
    void accumulate(std::size_t id, const Expr& delta) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        if (!n.has_grad) {
            n.grad = delta;
            n.has_grad = true;
        } else {
            n.grad += delta;
        }
    }

    void backward(Var<T> loss) {
        const auto& out = nodes_.at(loss.id());
        if (out.value.rows() != 1 || out.value.cols() != 1) {
            throw NumericError("backward needs a scalar loss, got " + std::to_string(out.value.rows()) + "x" +
                               std::to_string(out.value.cols()));
        }
        for (auto& n : nodes_) {
            n.grad = Matrix<T>();
            n.has_grad = false;
        }
        accumulate(loss.id(), Matrix<T>::Ones(1, 1));
        for (std::size_t k = loss.id() + 1; k-- > 0;) {
            auto& n = nodes_[k];
            if (n.requires_grad && n.has_grad && n.backward) n.backward(*this, n.grad);
        }
    }

    void mark(std::uint64_t h) { signature_ = (signature_ ^ h) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL; }
    std::uint64_t signature() const { return signature_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        bool requires_grad;
        bool has_grad;
        Backward backward;
    };
    std::vector<Node> nodes_;
    std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw NumericError(msg);
}

inline std::string shape(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename T>
void same_tape(Var<T> a, Var<T> b) {
    require(&a.tape() == &b.tape(), "operands live on different tapes");
}

/// FNV-style hash of a boolean mask, for tape signatures.
template <typename Pred>
std::uint64_t mask_hash(Eigen::Index n, Pred pred) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ static_cast<std::uint64_t>(n);
    std::uint64_t word = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        word = (word << 1) | (pred(k) ? 1u : 0u);
        if ((k & 63) == 63) {
            h = (h ^ word) * 0x100000001b3ULL;
            word = 0;
        }
    }
    return (h ^ word) * 0x100000001b3ULL;
}

enum class Broadcast { none, row, col };

template <typename T>
Broadcast broadcast_kind(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::col;
    throw NumericError(std::string(op) + ": cannot combine " + shape(a.rows(), a.cols()) + " with " +
                       shape(b.rows(), b.cols()));
}

template <typename T>
Matrix<T> expand(const Matrix<T>& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
    switch (kind) {
    case Broadcast::row: return b.replicate(rows, 1);
    case Broadcast::col: return b.replicate(1, cols);
    case Broadcast::none: break;
    }
    return b;
}

template <typename T>
Matrix<T> reduce(const Matrix<T>& g, Broadcast kind) {
    switch (kind) {
    case Broadcast::row: return g.colwise().sum();
    case Broadcast::col: return g.rowwise().sum();
    case Broadcast::none: break;
    }
    return g;
}

} // namespace detail

// ---- primitives -------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    detail::same_tape(a, b);
    detail::require(a.cols() == b.rows(), "matmul: " + detail::shape(a.rows(), a.cols()) + " times " +
                                              detail::shape(b.rows(), b.cols()));
    const auto ia = a.id(), ib = b.id();
    return a.tape().record("matmul", a.value() * b.value(), a.requires_grad() || b.requires_grad(),
                           [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                               const auto& A = t.value(Var<T>(&t, ia));
                               const auto& B = t.value(Var<T>(&t, ib));
                               if (t.requires_grad(Var<T>(&t, ia))) t.accumulate(ia, g * B.transpose());
                               if (t.requires_grad(Var<T>(&t, ib))) t.accumulate(ib, A.transpose() * g);
                           });
}

/// s * b for a constant sparse operator s.
template <typename T>
Var<T> sparse_matmul(std::shared_ptr<const SparseOperator<T>> s, Var<T> b) {
    detail::require(s->cols() == b.rows(), "sparse_matmul: " + detail::shape(s->rows(), s->cols()) + " times " +
                                               detail::shape(b.rows(), b.cols()));
    const auto ib = b.id();
    Matrix<T> out = *s * b.value();
    return b.tape().record("sparse_matmul", std::move(out), b.requires_grad(),
                           [s, ib](Tape<T>& t, const Matrix<T>& g) { t.accumulate(ib, s->transpose() * g); });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    const auto ia = a.id();
    return a.tape().record("transpose", a.value().transpose(), a.requires_grad(),
                           [ia](Tape<T>& t, const Matrix<T>& g) { t.accumulate(ia, g.transpose()); });
}

/// max(x, 0); the subgradient at exactly 0 is 0.
template <typename T>
Var<T> relu(Var<T> a) {
    const auto ia = a.id();
    const auto& x = a.value();
    a.tape().mark(detail::mask_hash(x.size(), [&](Eigen::Index k) { return x.data()[k] > T(0); }));
    return a.tape().record("relu", x.cwiseMax(T(0)), a.requires_grad(), [ia](Tape<T>& t, const Matrix<T>& g) {
        const auto& x = t.value(Var<T>(&t, ia));
        t.accumulate(ia, (x.array() > T(0)).select(g, Matrix<T>::Zero(g.rows(), g.cols())));
    });
}

template <typename T>
Matrix<T> softmax_rows_value(const Matrix<T>& x) {
    Matrix<T> y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T m = x.row(r).maxCoeff();
        double total = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            y(r, c) = std::exp(x(r, c) - m);
            total += static_cast<double>(y(r, c));
        }
        y.row(r) /= static_cast<T>(total);
    }
    return y;
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
    const auto ia = a.id();
    auto y = std::make_shared<Matrix<T>>(softmax_rows_value(a.value()));
    Matrix<T> out = *y;
    return a.tape().record("softmax_rows", std::move(out), a.requires_grad(),
                           [ia, y](Tape<T>& t, const Matrix<T>& g) {
                               const Matrix<T> dot = (g.array() * y->array()).rowwise().sum();
                               t.accumulate(ia, (y->array() * (g.array() - dot.replicate(1, g.cols()).array())).matrix());
                           });
}

/// Natural log of max(x, floor). Entries at or below a positive floor get a
/// zero gradient.
template <typename T>
Var<T> log(Var<T> a, T floor = T(0)) {
    const auto ia = a.id();
    const auto& x = a.value();
    if (floor > T(0)) {
        a.tape().mark(detail::mask_hash(x.size(), [&](Eigen::Index k) { return x.data()[k] > floor; }));
    }
    Matrix<T> y = x.cwiseMax(floor).array().log().matrix();
    return a.tape().record("log", std::move(y), a.requires_grad(), [ia, floor](Tape<T>& t, const Matrix<T>& g) {
        const auto& x = t.value(Var<T>(&t, ia));
        Matrix<T> d = (x.array() > floor).select(g.array() / x.array(), T(0));
        t.accumulate(ia, d);
    });
}

template <typename T>
Var<T> exp(Var<T> a) {
    const auto ia = a.id();
    Matrix<T> y = a.value().array().exp().matrix();
    auto cached = std::make_shared<Matrix<T>>(y);
    return a.tape().record("exp", std::move(y), a.requires_grad(), [ia, cached](Tape<T>& t, const Matrix<T>& g) {
        t.accumulate(ia, (g.array() * cached->array()).matrix());
    });
}

/// a + b where b has a's shape, or is a row (1 x cols) or column (rows x 1)
/// vector broadcast across a.
template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::same_tape(a, b);
    const auto kind = detail::broadcast_kind(a.value(), b.value(), "add");
    const auto ia = a.id(), ib = b.id();
    Matrix<T> y = a.value() + detail::expand(b.value(), kind, a.rows(), a.cols());
    return a.tape().record("add", std::move(y), a.requires_grad() || b.requires_grad(),
                           [ia, ib, kind](Tape<T>& t, const Matrix<T>& g) {
                               t.accumulate(ia, g);
                               if (t.requires_grad(Var<T>(&t, ib))) t.accumulate(ib, detail::reduce(g, kind));
                           });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::same_tape(a, b);
    const auto kind = detail::broadcast_kind(a.value(), b.value(), "sub");
    const auto ia = a.id(), ib = b.id();
    Matrix<T> y = a.value() - detail::expand(b.value(), kind, a.rows(), a.cols());
    return a.tape().record("sub", std::move(y), a.requires_grad() || b.requires_grad(),
                           [ia, ib, kind](Tape<T>& t, const Matrix<T>& g) {
                               t.accumulate(ia, g);
                               if (t.requires_grad(Var<T>(&t, ib))) t.accumulate(ib, -detail::reduce(g, kind));
                           });
}

/// Elementwise product, with the same broadcasting rules as add.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::same_tape(a, b);
    const auto kind = detail::broadcast_kind(a.value(), b.value(), "mul");
    const auto ia = a.id(), ib = b.id();
    Matrix<T> y = (a.value().array() * detail::expand(b.value(), kind, a.rows(), a.cols()).array()).matrix();
    return a.tape().record("mul", std::move(y), a.requires_grad() || b.requires_grad(),
                           [ia, ib, kind](Tape<T>& t, const Matrix<T>& g) {
                               const auto& A = t.value(Var<T>(&t, ia));
                               const auto& B = t.value(Var<T>(&t, ib));
                               if (t.requires_grad(Var<T>(&t, ia))) {
                                   t.accumulate(ia, (g.array() * detail::expand(B, kind, A.rows(), A.cols()).array()).matrix());
                               }
                               if (t.requires_grad(Var<T>(&t, ib))) {
                                   const Matrix<T> ga = (g.array() * A.array()).matrix();
                                   t.accumulate(ib, detail::reduce(ga, kind));
                               }
                           });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    const auto ia = a.id();
    return a.tape().record("scale", a.value() * factor, a.requires_grad(),
                           [ia, factor](Tape<T>& t, const Matrix<T>& g) { t.accumulate(ia, g * factor); });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    detail::require(!parts.empty(), "concat_cols: no operands");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    bool needs = false;
    for (const auto& p : parts) {
        detail::same_tape(parts.front(), p);
        detail::require(p.rows() == rows, "concat_cols: row counts differ (" + std::to_string(rows) + " vs " +
                                              std::to_string(p.rows()) + ")");
        cols += p.cols();
        needs = needs || p.requires_grad();
    }
    Matrix<T> y(rows, cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> layout; // (id, width)
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
        y.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
        layout.emplace_back(p.id(), p.cols());
    }
    return parts.front().tape().record("concat_cols", std::move(y), needs, [layout](Tape<T>& t, const Matrix<T>& g) {
        Eigen::Index off = 0;
        for (const auto& [id, width] : layout) {
            if (t.requires_grad(Var<T>(&t, id))) t.accumulate(id, Matrix<T>(g.middleCols(off, width)));
            off += width;
        }
    });
}

inline constexpr double normalize_epsilon = 1e-12;

namespace detail {

/// Row-wise x / ||x||; rows with norm below epsilon become zero and pass no
/// gradient.
template <typename T>
Var<T> l2_normalize_rows_impl(Var<T> a, const char* op) {
    const auto ia = a.id();
    const auto& x = a.value();
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.rows()));
    Matrix<T> y = Matrix<T>::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double sq = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) sq += static_cast<double>(x(r, c)) * static_cast<double>(x(r, c));
        const double n = std::sqrt(sq);
        (*norms)[static_cast<std::size_t>(r)] = n;
        if (n >= normalize_epsilon) y.row(r) = (x.row(r).template cast<double>() / n).template cast<T>();
    }
    a.tape().mark(mask_hash(x.rows(), [&](Eigen::Index r) { return (*norms)[static_cast<std::size_t>(r)] >= normalize_epsilon; }));
    auto cached = std::make_shared<Matrix<T>>(y);
    return a.tape().record(op, std::move(y), a.requires_grad(), [ia, norms, cached](Tape<T>& t, const Matrix<T>& g) {
        const auto& Y = *cached;
        Matrix<T> d = Matrix<T>::Zero(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double n = (*norms)[static_cast<std::size_t>(r)];
            if (n < normalize_epsilon) continue;
            double dot = 0.0;
            for (Eigen::Index c = 0; c < g.cols(); ++c) dot += static_cast<double>(g(r, c)) * static_cast<double>(Y(r, c));
            for (Eigen::Index c = 0; c < g.cols(); ++c) {
                d(r, c) = static_cast<T>((static_cast<double>(g(r, c)) - static_cast<double>(Y(r, c)) * dot) / n);
            }
        }
        t.accumulate(ia, d);
    });
}

} // namespace detail

template <typename T>
Var<T> l2_normalize_rows(Var<T> a) {
    return detail::l2_normalize_rows_impl(a, "l2_normalize_rows");
}

template <typename T>
Var<T> l2_normalize_cols(Var<T> a) {
    return transpose(l2_normalize_rows(transpose(a)));
}

/// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity in eval
/// mode or at rate 0.
template <typename T>
Var<T> dropout(Var<T> a, double rate, Rng& rng, Mode mode) {
    detail::require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::eval || rate == 0.0) return a;
    const auto ia = a.id();
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<Matrix<T>>(a.rows(), a.cols());
    for (Eigen::Index k = 0; k < mask->size(); ++k) mask->data()[k] = rng.uniform() < rate ? T(0) : keep_scale;
    Matrix<T> y = (a.value().array() * mask->array()).matrix();
    return a.tape().record("dropout", std::move(y), a.requires_grad(), [ia, mask](Tape<T>& t, const Matrix<T>& g) {
        t.accumulate(ia, (g.array() * mask->array()).matrix());
    });
}

/// All-pairs cosine similarity of the rows of a (zero rows give 0).
template <typename T>
Var<T> cosine_similarity_matrix(Var<T> a) {
    const auto n = l2_normalize_rows(a);
    return matmul(n, transpose(n));
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::vector<std::size_t> rows) {
    const auto ia = a.id();
    Matrix<T> y(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        detail::require(rows[k] < static_cast<std::size_t>(a.rows()), "gather_rows: index out of range");
        y.row(static_cast<Eigen::Index>(k)) = a.value().row(static_cast<Eigen::Index>(rows[k]));
    }
    const auto src_rows = a.rows();
    return a.tape().record("gather_rows", std::move(y), a.requires_grad(),
                           [ia, rows = std::move(rows), src_rows](Tape<T>& t, const Matrix<T>& g) {
                               Matrix<T> d = Matrix<T>::Zero(src_rows, g.cols());
                               for (std::size_t k = 0; k < rows.size(); ++k) {
                                   d.row(static_cast<Eigen::Index>(rows[k])) += g.row(static_cast<Eigen::Index>(k));
                               }
                               t.accumulate(ia, d);
                           });
}

/// Picks a(rows[k], cols[k]) into a k x 1 column.
template <typename T>
Var<T> gather_elements(Var<T> a, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
    detail::require(rows.size() == cols.size(), "gather_elements: index lists differ in length");
    const auto ia = a.id();
    Matrix<T> y(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        detail::require(rows[k] < static_cast<std::size_t>(a.rows()) && cols[k] < static_cast<std::size_t>(a.cols()),
                        "gather_elements: index out of range");
        y(static_cast<Eigen::Index>(k), 0) = a.value()(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(cols[k]));
    }
    const auto r = a.rows(), c = a.cols();
    return a.tape().record("gather_elements", std::move(y), a.requires_grad(),
                           [ia, rows = std::move(rows), cols = std::move(cols), r, c](Tape<T>& t, const Matrix<T>& g) {
                               Matrix<T> d = Matrix<T>::Zero(r, c);
                               for (std::size_t k = 0; k < rows.size(); ++k) {
                                   d(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(cols[k])) +=
                                       g(static_cast<Eigen::Index>(k), 0);
                               }
                               t.accumulate(ia, d);
                           });
}

/// Sum of all entries (accumulated in double) as a 1x1 tensor.
template <typename T>
Var<T> sum(Var<T> a) {
    const auto ia = a.id();
    const auto r = a.rows(), c = a.cols();
    Matrix<T> y(1, 1);
    y(0, 0) = static_cast<T>(a.value().template cast<double>().sum());
    return a.tape().record("sum", std::move(y), a.requires_grad(), [ia, r, c](Tape<T>& t, const Matrix<T>& g) {
        t.accumulate(ia, Matrix<T>::Constant(r, c, g(0, 0)));
    });
}

template <typename T>
Var<T> mean(Var<T> a) {
    detail::require(a.value().size() > 0, "mean of an empty tensor");
    return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(a.value().size())));
}

/// Per-row sums as a rows x 1 column.
template <typename T>
Var<T> row_sum(Var<T> a) {
    const auto ia = a.id();
    const auto c = a.cols();
    Matrix<T> y = a.value().template cast<double>().rowwise().sum().template cast<T>();
    return a.tape().record("row_sum", std::move(y), a.requires_grad(), [ia, c](Tape<T>& t, const Matrix<T>& g) {
        t.accumulate(ia, g.replicate(1, c));
    });
}

/// Same value, cut off from the gradient record.
template <typename T>
Var<T> detach(Var<T> a) {
    return a.tape().constant(a.value());
}

// ---- finite-difference gradient check ---------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0; // probes that crossed a non-differentiable point
    std::size_t worst_input = 0;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

using ScalarFunction = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Compares reverse-mode gradients of a scalar function with central
/// differences for every entry of every input. Relative error is
/// |g_a - g_n| / max(1e-8, |g_a| + |g_n|). A probe is excluded when either
/// shifted evaluation takes a different discrete branch than the base point
/// (for example a ReLU input sitting exactly at 0).
inline GradCheckReport check_gradients(const ScalarFunction& f, const std::vector<Matrix<double>>& inputs,
                                       double step = 1e-5) {
    auto evaluate = [&](const std::vector<Matrix<double>>& xs, std::uint64_t* signature) {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (const auto& x : xs) vars.push_back(tape.parameter(x));
        const auto out = f(tape, vars);
        if (out.rows() != 1 || out.cols() != 1) throw NumericError("check_gradients: function must return a scalar");
        if (signature) *signature = tape.signature();
        return out.value()(0, 0);
    };

    std::vector<Matrix<double>> analytic;
    std::uint64_t base_signature = 0;
    double base_value = 0.0;
    {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        for (const auto& x : inputs) vars.push_back(tape.parameter(x));
        const auto out = f(tape, vars);
        tape.backward(out);
        base_value = out.value()(0, 0);
        base_signature = tape.signature();
        for (const auto& v : vars) analytic.push_back(tape.grad(v));
    }
    std::uint64_t again_signature = 0;
    const double again = evaluate(inputs, &again_signature);
    if (again != base_value || again_signature != base_signature) {
        throw Error("check_gradients: function is not deterministic across evaluations");
    }

    GradCheckReport report;
    auto probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
            for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
                const double original = inputs[i](r, c);
                std::uint64_t sig_plus = 0, sig_minus = 0;
                probe[i](r, c) = original + step;
                const double plus = evaluate(probe, &sig_plus);
                probe[i](r, c) = original - step;
                const double minus = evaluate(probe, &sig_minus);
                probe[i](r, c) = original;
                if (sig_plus != base_signature || sig_minus != base_signature) {
                    ++report.excluded;
                    continue;
                }
                const double numeric = (plus - minus) / (2.0 * step);
                const double a = analytic[i](r, c);
                const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
                ++report.checked;
                if (rel > report.max_rel_error || report.checked == 1) {
                    if (rel >= report.max_rel_error) {
                        report.max_rel_error = rel;
                        report.worst_input = i;
                        report.worst_row = r;
                        report.worst_col = c;
                        report.worst_analytic = a;
                        report.worst_numeric = numeric;
                    }
                }
            }
        }
    }
    return report;
}

} // namespace ligram::ad
