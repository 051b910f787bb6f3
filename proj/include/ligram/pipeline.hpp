#pragma once

#include <optional>
#include <string>

#include "ligram/corpus.hpp"
#include "ligram/embeddings.hpp"
#include "ligram/graph.hpp"
#include "ligram/log.hpp"
#include "ligram/model.hpp"

namespace ligram {

/// Everything a command needs besides the model hyperparameters.
struct RunConfig {
    ModelConfig model;
    std::string corpus_path;
    std::string morpheme_embeddings_path;
    std::string entity_embeddings_path; // optional when the corpus has no entities
    std::string out_dir = "ligram-out";
    std::size_t min_freq = 5;
    std::size_t per_class = 40;
    std::size_t embedding_dim = 768; // expected morpheme embedding dim, 0 accepts any
    MissingEmbeddingPolicy missing_embedding = MissingEmbeddingPolicy::error;

    GraphOptions graph_options() const {
        return {model.hyper.window, model.hyper.entity_min_sim, missing_embedding, embedding_dim};
    }
};

struct Preprocessed {
    Corpus corpus;  // filtered, indexed, split
    Corpus records; // deduplicated but unfiltered, carrying the same splits
};

/// Dedup -> low-frequency filter -> vocabularies -> splits (only when some
/// document has none yet; seeded by the run seed). Feeding `records` back in
/// reproduces `corpus` exactly.
inline Preprocessed preprocess(const Corpus& raw, std::size_t min_freq, std::size_t per_class, std::uint64_t seed) {
    Preprocessed out;
    out.records = deduplicate(raw);
    out.corpus = build_vocabularies(filter_low_frequency(out.records, min_freq));
    bool unassigned = false;
    for (const auto& doc : out.corpus.documents) unassigned = unassigned || !doc.split;
    if (unassigned) out.corpus = assign_splits(out.corpus, per_class, seed);
    for (std::size_t i = 0; i < out.records.size(); ++i) out.records.documents[i].split = out.corpus.documents[i].split;
    return out;
}

struct PreparedData {
    Corpus corpus;
    Corpus records;
    EmbeddingTable morpheme_embeddings;
    std::optional<EmbeddingTable> entity_embeddings;
    GraphBundle graphs;
};

inline PreparedData prepare(const RunConfig& config) {
    if (config.corpus_path.empty()) throw Error("--corpus is required");
    if (config.morpheme_embeddings_path.empty()) throw Error("--morpheme-emb is required");
    PreparedData data;
    const auto raw = load_corpus(config.corpus_path);
    auto pre = preprocess(raw, config.min_freq, config.per_class, config.model.hyper.seed);
    data.corpus = std::move(pre.corpus);
    data.records = std::move(pre.records);
    log::info("corpus: " + std::to_string(raw.size()) + " records, " + std::to_string(data.corpus.size()) +
              " after deduplication");
    data.morpheme_embeddings = read_embeddings(config.morpheme_embeddings_path);
    if (config.embedding_dim != 0 && data.morpheme_embeddings.dim() != config.embedding_dim) {
        throw Error(config.morpheme_embeddings_path + ": embedding dim " + std::to_string(data.morpheme_embeddings.dim()) +
                    " does not match the configured dim " + std::to_string(config.embedding_dim));
    }
    if (!config.entity_embeddings_path.empty()) data.entity_embeddings = read_embeddings(config.entity_embeddings_path);
    data.graphs = build_graph_bundle(data.corpus, data.morpheme_embeddings,
                                     data.entity_embeddings ? &*data.entity_embeddings : nullptr, config.graph_options());
    return data;
}

} // namespace ligram
