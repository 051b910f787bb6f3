#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ligram/autodiff.hpp"
#include "ligram/binary_io.hpp"
#include "ligram/corpus.hpp"
#include "ligram/error.hpp"
#include "ligram/graph.hpp"
#include "ligram/rng.hpp"
#include "ligram/sparse.hpp"

namespace ligram {

struct Hyperparams {
    std::size_t hidden = 200;
    std::size_t window = 5;
    double delta = 2.7;
    double dropout = 0.7;
    double lambda = 0.7;
    double lr = 5e-4;
    double weight_decay = 1e-3;
    std::size_t max_epochs = 1000;
    std::size_t eval_every = 5;
    double entity_min_sim = 0.5;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden == 0) throw Error("hidden size must be positive");
        if (window == 0) throw Error("window must be at least 1");
        if (delta < -3.0 || delta > 3.0) throw Error("delta must lie in [-3, 3]");
        if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must lie in [0, 1)");
        if (lambda < 0.0) throw Error("lambda must be non-negative");
        if (lr < 0.0) throw Error("learning rate must be non-negative");
        if (weight_decay < 0.0) throw Error("weight decay must be non-negative");
        if (eval_every == 0) throw Error("eval_every must be positive");
        if (entity_min_sim < -1.0 || entity_min_sim > 1.0) throw Error("entity_min_sim must lie in [-1, 1]");
        if (!(temperature > 0.0)) throw Error("temperature must be positive");
    }

    bool operator==(const Hyperparams&) const = default;
};

enum class ContrastiveScope { all, labeled };

/// Hyperparameters plus the ablation switches that decide which parameter
/// matrices exist.
struct ModelConfig {
    Hyperparams hyper;
    bool use_morpheme = true;
    bool use_pos = true;
    bool use_entity = true;
    bool use_semcon = true;
    ContrastiveScope scope = ContrastiveScope::all;
    bool clip_gradients = false; // clip global gradient norm at 5.0

    std::vector<TokenKind> enabled_kinds() const {
        std::vector<TokenKind> kinds;
        if (use_morpheme) kinds.push_back(TokenKind::morpheme);
        if (use_pos) kinds.push_back(TokenKind::pos);
        if (use_entity) kinds.push_back(TokenKind::entity);
        return kinds;
    }

    /// lambda actually applied to the contrastive term.
    double effective_lambda() const { return use_semcon ? hyper.lambda : 0.0; }

    void validate() const {
        hyper.validate();
        if (enabled_kinds().empty()) throw Error("at least one subgraph must be enabled");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Input widths the parameter shapes derive from.
struct ModelDims {
    std::size_t morpheme_dim = 0; // embedding dim
    std::size_t pos_dim = 0;      // |V_p|, one-hot
    std::size_t entity_dim = 0;   // entity embedding dim
    std::size_t classes = 0;

    std::size_t input_dim(TokenKind kind) const {
        switch (kind) {
        case TokenKind::morpheme: return morpheme_dim;
        case TokenKind::pos: return pos_dim;
        case TokenKind::entity: return entity_dim;
        }
        return 0;
    }
};

inline ModelDims dims_of(const GraphBundle& bundle, std::size_t classes) {
    return {bundle.morpheme.feature_dim(), bundle.pos.feature_dim(), bundle.entity.feature_dim(), classes};
}

inline std::string parameter_name(TokenKind kind, int layer) {
    return std::string(to_string(kind)) + ".w" + std::to_string(layer);
}

template <typename T>
struct NamedMatrix {
    std::string name;
    ad::Matrix<T> value;
};

/// Two GCN weight matrices per enabled subgraph, then the two document-level
/// ones, in that fixed order. No biases.
template <typename T>
class ModelParameters {
public:
    ModelParameters() = default;

    /// Uniform(+-sqrt(6 / (fan_in + fan_out))) per matrix, drawn row-major in
    /// parameter order from `rng`.
    static ModelParameters initialize(const ModelConfig& config, const ModelDims& dims, Rng& rng) {
        config.validate();
        if (dims.classes < 1) throw Error("model needs at least one class");
        const std::size_t h = config.hyper.hidden;
        ModelParameters p;
        for (const auto kind : config.enabled_kinds()) {
            p.add_initialized(parameter_name(kind, 1), dims.input_dim(kind), h, rng);
            p.add_initialized(parameter_name(kind, 2), h, h, rng);
        }
        p.add_initialized("document.w1", config.enabled_kinds().size() * h, h, rng);
        p.add_initialized("document.w2", h, dims.classes, rng);
        return p;
    }

    void add(std::string name, ad::Matrix<T> value) {
        if (find(name)) throw Error("duplicate parameter '" + name + "'");
        entries_.push_back({std::move(name), std::move(value)});
    }

    const ad::Matrix<T>* find(const std::string& name) const {
        for (const auto& e : entries_) {
            if (e.name == name) return &e.value;
        }
        return nullptr;
    }

    const ad::Matrix<T>& at(const std::string& name) const {
        const auto* m = find(name);
        if (!m) throw Error("missing parameter '" + name + "'");
        return *m;
    }

    std::vector<NamedMatrix<T>>& entries() { return entries_; }
    const std::vector<NamedMatrix<T>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
        return n;
    }

    template <typename U>
    ModelParameters<U> cast() const {
        ModelParameters<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
        return out;
    }

    bool operator==(const ModelParameters& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            if (entries_[k].name != other.entries_[k].name || entries_[k].value != other.entries_[k].value) return false;
        }
        return true;
    }

private:
    void add_initialized(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        ad::Matrix<T> m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
        const double bound = fan_in + fan_out > 0 ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)) : 0.0;
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
        add(std::move(name), std::move(m));
    }

    std::vector<NamedMatrix<T>> entries_;
};

/// Parameters bound to one tape, addressable by name.
template <typename T>
struct ParameterVars {
    std::vector<std::string> names;
    std::vector<ad::Var<T>> vars;

    ad::Var<T> get(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == name) return vars[k];
        }
        throw Error("parameter '" + name + "' is not bound");
    }
};

template <typename T>
ParameterVars<T> bind_parameters(ad::Tape<T>& tape, const ModelParameters<T>& params) {
    ParameterVars<T> out;
    for (const auto& e : params.entries()) {
        out.names.push_back(e.name);
        out.vars.push_back(tape.parameter(e.value));
    }
    return out;
}

/// Graph-derived constants in the model's scalar type, built once per run.
template <typename T>
struct ModelInputs {
    struct Part {
        TokenKind kind;
        ad::Matrix<T> features;
        std::shared_ptr<const ad::SparseOperator<T>> normalized;
        std::shared_ptr<const ad::SparseOperator<T>> attention;
    };
    std::vector<Part> parts; // enabled subgraphs in w, p, e order
    std::size_t num_documents = 0;

    static ModelInputs from(const GraphBundle& bundle, const ModelConfig& config) {
        ModelInputs in;
        in.num_documents = bundle.num_documents();
        for (const auto kind : config.enabled_kinds()) {
            const auto& g = bundle.graph(kind);
            in.parts.push_back({kind, g.features.template cast<T>(),
                                std::make_shared<const ad::SparseOperator<T>>(g.normalized.to_eigen<T>()),
                                std::make_shared<const ad::SparseOperator<T>>(bundle.attention(kind).weights.to_eigen<T>())});
        }
        return in;
    }
};

/// H = A_norm * ReLU(A_norm * drop(X) * W1) * W2, no biases, no output activation.
template <typename T>
ad::Var<T> subgraph_gcn_forward(ad::Var<T> features, const std::shared_ptr<const ad::SparseOperator<T>>& normalized,
                                ad::Var<T> w1, ad::Var<T> w2, double dropout, ad::Mode mode, Rng& rng) {
    const auto x = ad::dropout(features, dropout, rng, mode);
    const auto hidden = ad::relu(ad::sparse_matmul(normalized, ad::matmul(x, w1)));
    return ad::sparse_matmul(normalized, ad::matmul(hidden, w2));
}

/// Row i = u(H^T s_i): attention-weighted node sum, L2-normalized (zero rows stay zero).
template <typename T>
ad::Var<T> pool_documents(ad::Var<T> node_embeddings, const std::shared_ptr<const ad::SparseOperator<T>>& attention) {
    return ad::l2_normalize_rows(ad::sparse_matmul(attention, node_embeddings));
}

template <typename T>
ad::Var<T> concat_document_embeddings(const std::vector<ad::Var<T>>& pooled) {
    return ad::concat_cols(pooled);
}

/// Edge (i, j), i != j, weighted by the dot product of rows i and j whenever
/// it is at least delta. Each pair is computed once and mirrored, so the
/// result is exactly symmetric.
template <typename Derived>
SparseMatrix build_document_graph(const Eigen::MatrixBase<Derived>& x, double delta) {
    const auto n = static_cast<std::size_t>(x.rows());
    const Eigen::Index d = x.cols();
    const Eigen::MatrixXd xd = x.template cast<double>();
    std::vector<Triplet> entries;
    constexpr std::size_t block = 256;
    for (std::size_t lo = 0; lo < n; lo += block) {
        const std::size_t hi = std::min(n, lo + block);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto ri = static_cast<Eigen::Index>(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto rj = static_cast<Eigen::Index>(j);
                double dot = 0.0;
                for (Eigen::Index k = 0; k < d; ++k) dot += xd(ri, k) * xd(rj, k);
                if (dot >= delta) {
                    entries.push_back({i, j, dot});
                    entries.push_back({j, i, dot});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(n, n, std::move(entries));
}

/// Z = A_norm * ReLU(A_norm * drop(x_s) * W1) * W2 over the document graph.
template <typename T>
ad::Var<T> document_gcn_forward(ad::Var<T> doc_embeddings, const SparseMatrix& doc_graph, ad::Var<T> w1, ad::Var<T> w2,
                                double dropout, ad::Mode mode, Rng& rng) {
    const auto normalized =
        std::make_shared<const ad::SparseOperator<T>>(normalize_adjacency(doc_graph).to_eigen<T>());
    return subgraph_gcn_forward(doc_embeddings, normalized, w1, w2, dropout, mode, rng);
}

template <typename T>
struct ForwardResult {
    std::vector<ad::Var<T>> pooled;
    ad::Var<T> doc_embeddings;
    SparseMatrix doc_graph;
    ad::Var<T> logits;
};

namespace detail {

inline std::uint64_t edge_hash(const SparseMatrix& m) {
    std::uint64_t h = 0x84222325cbf29ce4ULL ^ m.nnz();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = m.row_begin(r); k < m.row_end(r); ++k) {
            h = (h ^ (static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL + m.col_at(k))) * 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace detail

/// Subgraph GCNs, pooling, concatenation, document graph (rebuilt from the
/// current embeddings and treated as a constant), document GCN.
/// `fixed_doc_graph` replaces the rebuilt graph; the gradient checker uses it
/// to hold the detached graph at its base-point value.
template <typename T>
ForwardResult<T> full_forward(ad::Tape<T>& tape, const ModelInputs<T>& inputs, const ParameterVars<T>& params,
                              const ModelConfig& config, ad::Mode mode, Rng& rng,
                              const SparseMatrix* fixed_doc_graph = nullptr) {
    const auto& hp = config.hyper;
    ForwardResult<T> out;
    for (const auto& part : inputs.parts) {
        const auto features = tape.constant(part.features);
        const auto h = subgraph_gcn_forward(features, part.normalized, params.get(parameter_name(part.kind, 1)),
                                            params.get(parameter_name(part.kind, 2)), hp.dropout, mode, rng);
        out.pooled.push_back(pool_documents(h, part.attention));
    }
    out.doc_embeddings = concat_document_embeddings(out.pooled);
    out.doc_graph = fixed_doc_graph ? *fixed_doc_graph : build_document_graph(out.doc_embeddings.value(), hp.delta);
    tape.mark(detail::edge_hash(out.doc_graph));
    out.logits = document_gcn_forward(out.doc_embeddings, out.doc_graph, params.get("document.w1"),
                                      params.get("document.w2"), hp.dropout, mode, rng);
    return out;
}

struct Prediction {
    std::vector<std::size_t> classes;
    Eigen::MatrixXd probabilities;
};

/// Row-wise argmax (ties go to the lowest class index) and softmax rows.
template <typename Derived>
Prediction predict(const Eigen::MatrixBase<Derived>& logits) {
    Prediction p;
    const Eigen::MatrixXd z = logits.template cast<double>();
    p.probabilities = Eigen::MatrixXd(z.rows(), z.cols());
    p.classes.resize(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c) {
            if (z(r, c) > z(r, best)) best = c;
        }
        p.classes[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
        const double m = z.cols() > 0 ? z(r, best) : 0.0;
        double total = 0.0;
        for (Eigen::Index c = 0; c < z.cols(); ++c) total += (p.probabilities(r, c) = std::exp(z(r, c) - m));
        p.probabilities.row(r) /= total;
    }
    return p;
}

/// Eval-mode logits for every document of the corpus graph.
template <typename T>
ad::Matrix<T> infer_logits(const ModelInputs<T>& inputs, const ModelParameters<T>& params, const ModelConfig& config) {
    ad::Tape<T> tape;
    Rng unused(0);
    const auto vars = bind_parameters(tape, params);
    return full_forward(tape, inputs, vars, config, ad::Mode::eval, unused).logits.value();
}

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t checkpoint_version = 1;

template <typename T>
struct Checkpoint {
    ModelConfig config;
    ModelParameters<T> params;
};

/// "LGCK", u32 version, hyperparameter block, u32 matrix count, then per
/// matrix (u32 name length, name, u32 rows, u32 cols, row-major f32).
template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParameters<T>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    using namespace binary;
    const auto& hp = config.hyper;
    write_magic(out, "LGCK");
    write_uint<std::uint32_t>(out, checkpoint_version);
    write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(hp.hidden));
    write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(hp.window));
    write_f64(out, hp.delta);
    write_f64(out, hp.dropout);
    write_f64(out, hp.lambda);
    write_f64(out, hp.lr);
    write_f64(out, hp.weight_decay);
    write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(hp.max_epochs));
    write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(hp.eval_every));
    write_f64(out, hp.entity_min_sim);
    write_f64(out, hp.temperature);
    write_uint<std::uint64_t>(out, hp.seed);
    const std::uint8_t flags = (config.use_morpheme ? 1 : 0) | (config.use_pos ? 2 : 0) | (config.use_entity ? 4 : 0) |
                               (config.use_semcon ? 8 : 0) | (config.scope == ContrastiveScope::labeled ? 16 : 0) |
                               (config.clip_gradients ? 32 : 0);
    write_uint<std::uint8_t>(out, flags);
    write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
        write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
        for (Eigen::Index k = 0; k < e.value.size(); ++k) write_f32(out, static_cast<float>(e.value.data()[k]));
    }
    if (!out) throw Error("failed writing checkpoint: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    using namespace binary;
    expect_magic(in, "LGCK", path);
    const auto version = read_uint<std::uint32_t>(in, "checkpoint version");
    if (version != checkpoint_version) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint<T> ck;
    auto& hp = ck.config.hyper;
    hp.hidden = read_uint<std::uint32_t>(in, "hidden");
    hp.window = read_uint<std::uint32_t>(in, "window");
    hp.delta = read_f64(in, "delta");
    hp.dropout = read_f64(in, "dropout");
    hp.lambda = read_f64(in, "lambda");
    hp.lr = read_f64(in, "lr");
    hp.weight_decay = read_f64(in, "weight_decay");
    hp.max_epochs = read_uint<std::uint32_t>(in, "max_epochs");
    hp.eval_every = read_uint<std::uint32_t>(in, "eval_every");
    hp.entity_min_sim = read_f64(in, "entity_min_sim");
    hp.temperature = read_f64(in, "temperature");
    hp.seed = read_uint<std::uint64_t>(in, "seed");
    const auto flags = read_uint<std::uint8_t>(in, "flags");
    ck.config.use_morpheme = flags & 1;
    ck.config.use_pos = flags & 2;
    ck.config.use_entity = flags & 4;
    ck.config.use_semcon = flags & 8;
    ck.config.scope = (flags & 16) ? ContrastiveScope::labeled : ContrastiveScope::all;
    ck.config.clip_gradients = flags & 32;
    const auto count = read_uint<std::uint32_t>(in, "parameter count");
    for (std::uint32_t p = 0; p < count; ++p) {
        const auto len = read_uint<std::uint32_t>(in, "name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw FormatError(path + ": truncated parameter name");
        const auto rows = read_uint<std::uint32_t>(in, "rows");
        const auto cols = read_uint<std::uint32_t>(in, "cols");
        ad::Matrix<T> m(rows, cols);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(read_f32(in, "parameter values"));
        ck.params.add(std::move(name), std::move(m));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes");
    ck.config.validate();
    return ck;
}

} // namespace ligram
