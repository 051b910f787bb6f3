#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ligram/corpus.hpp"
#include "ligram/embeddings.hpp"
#include "ligram/error.hpp"
#include "ligram/log.hpp"
#include "ligram/sparse.hpp"

namespace ligram {

/// Heterogeneous subgraph: node features, positive-weight symmetric adjacency
/// with zero diagonal, and its self-loop-augmented symmetric normalization.
struct Subgraph {
    TokenKind kind = TokenKind::morpheme;
    Eigen::MatrixXd features;
    SparseMatrix adjacency;
    SparseMatrix normalized;

    std::size_t num_nodes() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Per-document relevance of every node of one subgraph, stored as an
/// N x |V| sparse matrix (row i is the attention vector of document i).
struct AttentionVectors {
    TokenKind kind = TokenKind::morpheme;
    SparseMatrix weights;
};

enum class MissingEmbeddingPolicy { error, zero_vector };

namespace detail {

/// Accumulates binary co-occurrence counts over "units" (windows or whole
/// documents) and turns them into a positive-PMI adjacency.
class CooccurrenceCounter {
public:
    explicit CooccurrenceCounter(std::size_t vocab_size) : vocab_(vocab_size), single_(vocab_size, 0) {}

    /// `unit` must hold distinct token indices in increasing order.
    void add_unit(const std::vector<std::size_t>& unit) {
        ++units_;
        for (std::size_t a = 0; a < unit.size(); ++a) {
            ++single_[unit[a]];
            for (std::size_t b = a + 1; b < unit.size(); ++b) {
                ++pair_[static_cast<std::uint64_t>(unit[a]) * vocab_ + unit[b]];
            }
        }
    }

    std::uint64_t units() const { return units_; }

    SparseMatrix positive_pmi() const {
        std::vector<Triplet> entries;
        for (const auto& [key, joint] : pair_) {
            const std::size_t i = static_cast<std::size_t>(key / vocab_);
            const std::size_t j = static_cast<std::size_t>(key % vocab_);
            // ln(p_ij / (p_i p_j)) > 0  <=>  n_ij * W > n_i * n_j
            const auto lhs = static_cast<unsigned __int128>(joint) * units_;
            const auto rhs = static_cast<unsigned __int128>(single_[i]) * single_[j];
            if (lhs <= rhs) continue;
            const double w = std::log(static_cast<double>(joint) * static_cast<double>(units_) /
                                      (static_cast<double>(single_[i]) * static_cast<double>(single_[j])));
            entries.push_back({i, j, w});
            entries.push_back({j, i, w});
        }
        return SparseMatrix::from_triplets(vocab_, vocab_, std::move(entries));
    }

private:
    std::uint64_t vocab_;
    std::uint64_t units_ = 0;
    std::vector<std::uint64_t> single_;
    std::unordered_map<std::uint64_t, std::uint64_t> pair_;
};

inline std::vector<std::size_t> distinct_sorted(std::vector<std::size_t> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

inline std::vector<std::size_t> token_ids(const Corpus& corpus, const AnnotatedDocument& doc, TokenKind kind) {
    const auto& vocab = corpus.vocab(kind);
    const auto& tokens = Corpus::tokens_of(doc, kind);
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.at(t));
    return ids;
}

inline void require_vocabularies(const Corpus& corpus) {
    if (!corpus.vocabularies_built) throw Error("vocabularies have not been built for this corpus");
}

} // namespace detail

/// Positive PMI between tokens co-occurring in a sliding window. Presence is
/// binary per window; a document no longer than the window is one window.
inline SparseMatrix compute_windowed_pmi(const Corpus& corpus, TokenKind kind, std::size_t window = 5) {
    if (window < 1) throw Error("PMI window must be at least 1");
    if (corpus.documents.empty()) throw Error("cannot compute PMI on an empty corpus");
    detail::require_vocabularies(corpus);
    detail::CooccurrenceCounter counter(corpus.vocab(kind).size());
    for (const auto& doc : corpus.documents) {
        const auto ids = detail::token_ids(corpus, doc, kind);
        if (ids.size() <= window) {
            counter.add_unit(detail::distinct_sorted(ids));
            continue;
        }
        for (std::size_t start = 0; start + window <= ids.size(); ++start) {
            counter.add_unit(detail::distinct_sorted({ids.begin() + static_cast<std::ptrdiff_t>(start),
                                                      ids.begin() + static_cast<std::ptrdiff_t>(start + window)}));
        }
    }
    return counter.positive_pmi();
}

/// Positive PMI with whole documents as the co-occurrence unit (W = N).
inline SparseMatrix compute_document_pmi(const Corpus& corpus, TokenKind kind) {
    if (corpus.documents.empty()) throw Error("cannot compute PMI on an empty corpus");
    detail::require_vocabularies(corpus);
    detail::CooccurrenceCounter counter(corpus.vocab(kind).size());
    for (const auto& doc : corpus.documents) counter.add_unit(detail::distinct_sorted(detail::token_ids(corpus, doc, kind)));
    return counter.positive_pmi();
}

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix normalize_adjacency(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw Error("adjacency must be square");
    if (!a.is_symmetric()) throw Error("adjacency must be symmetric");
    const std::size_t n = a.rows();
    std::vector<double> degree(n, 1.0);
    std::vector<Triplet> hat;
    hat.reserve(a.nnz() + n);
    std::vector<bool> has_diag(n, false);
    for (const auto& e : a.entries()) {
        degree[e.row] += e.weight;
        if (e.row == e.col) {
            has_diag[e.row] = true;
            hat.push_back({e.row, e.col, e.weight + 1.0});
        } else {
            hat.push_back(e);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!has_diag[i]) hat.push_back({i, i, 1.0});
        if (!(degree[i] > 0.0)) {
            throw NumericError("node " + std::to_string(i) + " has non-positive degree after adding self-loops");
        }
    }
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
    for (auto& e : hat) e.weight *= inv_sqrt[e.row] * inv_sqrt[e.col]; // scale product first: exact symmetry
    return SparseMatrix::from_triplets(n, n, std::move(hat));
}

/// Morpheme subgraph: pretrained embedding rows as features, windowed PMI edges.
inline Subgraph build_morpheme_graph(const Corpus& corpus, const EmbeddingTable& embeddings, std::size_t window,
                                     MissingEmbeddingPolicy policy = MissingEmbeddingPolicy::error,
                                     std::size_t expected_dim = 0) {
    detail::require_vocabularies(corpus);
    if (expected_dim != 0 && embeddings.dim() != expected_dim) {
        throw Error("morpheme embedding dim is " + std::to_string(embeddings.dim()) + ", expected " +
                    std::to_string(expected_dim));
    }
    const auto& vocab = corpus.morpheme_vocab;
    Subgraph g;
    g.kind = TokenKind::morpheme;
    g.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(embeddings.dim()));
    std::size_t missing = 0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto row = embeddings.find(vocab.token(i));
        if (!row) {
            if (policy == MissingEmbeddingPolicy::error) {
                throw Error("morpheme '" + vocab.token(i) + "' has no embedding row");
            }
            ++missing;
            continue;
        }
        for (std::size_t k = 0; k < row->size(); ++k) {
            g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (*row)[k];
        }
    }
    if (missing > 0) {
        log::warn(std::to_string(missing) + " morphemes have no embedding row; using zero vectors");
    }
    g.adjacency = compute_windowed_pmi(corpus, TokenKind::morpheme, window);
    g.normalized = normalize_adjacency(g.adjacency);
    return g;
}

/// POS subgraph: one-hot features, document-level PMI edges.
inline Subgraph build_pos_graph(const Corpus& corpus) {
    detail::require_vocabularies(corpus);
    const std::size_t n = corpus.pos_vocab.size();
    if (n == 0) throw Error("POS vocabulary is empty");
    Subgraph g;
    g.kind = TokenKind::pos;
    g.features = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    g.adjacency = compute_document_pmi(corpus, TokenKind::pos);
    g.normalized = normalize_adjacency(g.adjacency);
    return g;
}

/// Entity subgraph: entity vectors as features; an edge joins two distinct
/// entities whose cosine similarity is at least min_sim.
inline Subgraph build_entity_graph(const Corpus& corpus, const EmbeddingTable& embeddings, double min_sim = 0.5) {
    detail::require_vocabularies(corpus);
    if (min_sim < -1.0 || min_sim > 1.0) throw Error("entity min_sim must lie in [-1, 1]");
    const auto& vocab = corpus.entity_vocab;
    const std::size_t n = vocab.size();
    Subgraph g;
    g.kind = TokenKind::entity;
    g.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(embeddings.dim()));
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = embeddings.find(vocab.token(i));
        if (!row) throw Error("entity '" + vocab.token(i) + "' has no embedding row");
        double sq = 0.0;
        for (std::size_t k = 0; k < row->size(); ++k) {
            const double v = (*row)[k];
            g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
            sq += v * v;
        }
        if (sq == 0.0) throw Error("entity '" + vocab.token(i) + "' has a zero-norm embedding");
        norms[i] = std::sqrt(sq);
    }
    std::vector<Triplet> entries;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (Eigen::Index k = 0; k < g.features.cols(); ++k) {
                dot += g.features(static_cast<Eigen::Index>(i), k) * g.features(static_cast<Eigen::Index>(j), k);
            }
            const double cos = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
            if (cos >= min_sim && cos != 0.0) {
                entries.push_back({i, j, cos});
                entries.push_back({j, i, cos});
            }
        }
    }
    g.adjacency = SparseMatrix::from_triplets(n, n, std::move(entries));
    g.normalized = normalize_adjacency(g.adjacency);
    return g;
}

/// Empty entity subgraph for corpora without entity mentions.
inline Subgraph empty_entity_graph(std::size_t dim) {
    Subgraph g;
    g.kind = TokenKind::entity;
    g.features = Eigen::MatrixXd::Zero(0, static_cast<Eigen::Index>(dim));
    g.adjacency = SparseMatrix(0, 0);
    g.normalized = SparseMatrix(0, 0);
    return g;
}

/// weight(i, j) = tf(j, i) * ln(N / df(j)) with raw counts; tokens absent from
/// a document are omitted.
inline AttentionVectors compute_tfidf_attention(const Corpus& corpus, TokenKind kind) {
    detail::require_vocabularies(corpus);
    if (kind == TokenKind::entity) throw Error("entity attention is membership-based, not TF-IDF");
    const std::size_t n_docs = corpus.size();
    const std::size_t n_nodes = corpus.vocab(kind).size();
    std::vector<std::unordered_map<std::size_t, std::size_t>> tf(n_docs);
    std::vector<std::size_t> df(n_nodes, 0);
    for (std::size_t i = 0; i < n_docs; ++i) {
        for (const auto id : detail::token_ids(corpus, corpus.documents[i], kind)) ++tf[i][id];
        for (const auto& [id, count] : tf[i]) ++df[id];
    }
    std::vector<Triplet> entries;
    for (std::size_t i = 0; i < n_docs; ++i) {
        for (const auto& [id, count] : tf[i]) {
            const double idf = std::log(static_cast<double>(n_docs) / static_cast<double>(df[id]));
            entries.push_back({i, id, static_cast<double>(count) * idf});
        }
    }
    return {kind, SparseMatrix::from_triplets(n_docs, n_nodes, std::move(entries))};
}

/// weight(i, j) = 1 when entity j is mentioned in document i.
inline AttentionVectors compute_entity_attention(const Corpus& corpus) {
    detail::require_vocabularies(corpus);
    std::vector<Triplet> entries;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (const auto& e : corpus.documents[i].entities) entries.push_back({i, corpus.entity_vocab.at(e), 1.0});
    }
    return {TokenKind::entity, SparseMatrix::from_triplets(corpus.size(), corpus.entity_vocab.size(), std::move(entries))};
}

struct GraphOptions {
    std::size_t window = 5;
    double entity_min_sim = 0.5;
    MissingEmbeddingPolicy missing_embedding = MissingEmbeddingPolicy::error;
    std::size_t expected_dim = 0; // 0 accepts any morpheme embedding dim
};

/// The three subgraphs with their document attention vectors.
struct GraphBundle {
    Subgraph morpheme;
    Subgraph pos;
    Subgraph entity;
    AttentionVectors morpheme_attention;
    AttentionVectors pos_attention;
    AttentionVectors entity_attention;

    const Subgraph& graph(TokenKind kind) const {
        switch (kind) {
        case TokenKind::morpheme: return morpheme;
        case TokenKind::pos: return pos;
        case TokenKind::entity: return entity;
        }
        return morpheme;
    }

    const AttentionVectors& attention(TokenKind kind) const {
        switch (kind) {
        case TokenKind::morpheme: return morpheme_attention;
        case TokenKind::pos: return pos_attention;
        case TokenKind::entity: return entity_attention;
        }
        return morpheme_attention;
    }

    std::size_t num_documents() const { return morpheme_attention.weights.rows(); }
};

/// `entity_embeddings` may be null when the corpus mentions no entities.
inline GraphBundle build_graph_bundle(const Corpus& corpus, const EmbeddingTable& morpheme_embeddings,
                                      const EmbeddingTable* entity_embeddings, const GraphOptions& options = {}) {
    GraphBundle b;
    b.morpheme = build_morpheme_graph(corpus, morpheme_embeddings, options.window, options.missing_embedding,
                                      options.expected_dim);
    b.pos = build_pos_graph(corpus);
    if (entity_embeddings != nullptr) {
        b.entity = build_entity_graph(corpus, *entity_embeddings, options.entity_min_sim);
    } else {
        if (!corpus.entity_vocab.empty()) throw Error("corpus mentions entities but no entity embeddings were given");
        b.entity = empty_entity_graph(1);
    }
    b.morpheme_attention = compute_tfidf_attention(corpus, TokenKind::morpheme);
    b.pos_attention = compute_tfidf_attention(corpus, TokenKind::pos);
    b.entity_attention = compute_entity_attention(corpus);
    return b;
}

/// Sizes of the built graphs and the operation-count estimate
///   sum_pi E_pi (d_pi + h) + 2 (|V_w| + |V_p| + |V_e|) h^2 + 2 N^2 h.
struct StatsReport {
    std::size_t documents = 0;
    std::size_t hidden = 0;
    std::array<std::size_t, 3> nodes{};
    std::array<std::size_t, 3> edges{};
    std::array<std::size_t, 3> feature_dims{};
    double operation_estimate = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["documents"] = documents;
        j["hidden"] = hidden;
        const char* names[3] = {"morpheme", "pos", "entity"};
        for (std::size_t k = 0; k < 3; ++k) {
            j["subgraphs"][names[k]] = {{"nodes", nodes[k]}, {"edges", edges[k]}, {"feature_dim", feature_dims[k]}};
        }
        j["operation_estimate"] = operation_estimate;
        return j;
    }

    std::string format() const {
        std::ostringstream out;
        const char* names[3] = {"morpheme", "pos", "entity"};
        out << "documents N = " << documents << ", hidden d = " << hidden << '\n';
        for (std::size_t k = 0; k < 3; ++k) {
            out << "  " << std::left << std::setw(9) << names[k] << " |V| = " << nodes[k] << ", E = " << edges[k]
                << ", d_in = " << feature_dims[k] << '\n';
        }
        out << "estimated operations per forward pass: " << std::scientific << std::setprecision(3)
            << operation_estimate << '\n';
        return out.str();
    }
};

inline StatsReport graph_stats(const GraphBundle& bundle, std::size_t num_documents, std::size_t hidden) {
    StatsReport s;
    s.documents = num_documents;
    s.hidden = hidden;
    const TokenKind kinds[3] = {TokenKind::morpheme, TokenKind::pos, TokenKind::entity};
    const double h = static_cast<double>(hidden);
    double total = 0.0;
    double node_total = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& g = bundle.graph(kinds[k]);
        s.nodes[k] = g.num_nodes();
        s.edges[k] = g.adjacency.nnz();
        s.feature_dims[k] = g.num_nodes() == 0 ? 0 : g.feature_dim();
        total += static_cast<double>(s.edges[k]) * (static_cast<double>(s.feature_dims[k]) + h);
        node_total += static_cast<double>(s.nodes[k]);
    }
    const double n = static_cast<double>(num_documents);
    s.operation_estimate = total + 2.0 * node_total * h * h + 2.0 * n * n * h;
    return s;
}

// ---- graph-bundle directory -------------------------------------------------

/// `n_rows n_cols n_entries` header, then one `row col weight` line per entry.
/// Weights use 17 significant digits so they read back exactly.
inline void write_sparse(std::ostream& out, const SparseMatrix& m) {
    out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
    char buf[64];
    for (const auto& e : m.entries()) {
        std::snprintf(buf, sizeof buf, "%.17g", e.weight);
        out << e.row << ' ' << e.col << ' ' << buf << '\n';
    }
}

inline void write_sparse(const std::string& path, const SparseMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    write_sparse(out, m);
}

inline SparseMatrix read_sparse(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::size_t rows = 0, cols = 0, count = 0;
    if (!(in >> rows >> cols >> count)) throw FormatError(path + ": bad header");
    std::vector<Triplet> entries(count);
    for (std::size_t k = 0; k < count; ++k) {
        if (!(in >> entries[k].row >> entries[k].col >> entries[k].weight)) {
            throw FormatError(path + ": entry " + std::to_string(k + 1) + " is malformed");
        }
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(entries));
}

/// Writes <kind>.adj, <kind>.norm and <kind>.att for every subgraph plus
/// stats.json into `dir`.
inline void write_graph_bundle(const std::string& dir, const GraphBundle& bundle, const StatsReport& stats) {
    std::filesystem::create_directories(dir);
    for (const TokenKind kind : {TokenKind::morpheme, TokenKind::pos, TokenKind::entity}) {
        const std::string base = dir + "/" + std::string(to_string(kind));
        write_sparse(base + ".adj", bundle.graph(kind).adjacency);
        write_sparse(base + ".norm", bundle.graph(kind).normalized);
        write_sparse(base + ".att", bundle.attention(kind).weights);
    }
    std::ofstream out(dir + "/stats.json", std::ios::binary);
    out << stats.to_json().dump(2) << '\n';
}

} // namespace ligram
