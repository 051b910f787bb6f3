#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ligram/corpus.hpp"
#include "ligram/embeddings.hpp"
#include "ligram/error.hpp"
#include "ligram/rng.hpp"

namespace ligram {

/// Shape of a generated test corpus. Each class owns a block of
/// vocab_per_class morphemes and a pool of entities_per_class entities;
/// `overlap` is the probability that a token is drawn from the whole
/// vocabulary instead of the class's own block.
struct SyntheticSpec {
    std::size_t classes = 3;
    std::size_t docs_per_class = 20;
    std::size_t vocab_per_class = 30;
    double overlap = 0.0;
    std::size_t min_length = 4;
    std::size_t max_length = 12;
    double entity_density = 1.0; // expected entity mentions per document
    std::size_t entities_per_class = 6;
    double entity_overlap = 0.0;
    std::size_t embedding_dim = 768;
    std::size_t entity_dim = 768;
    double class_offset = 1.0; // weight of the class mean direction in each embedding
};

struct SyntheticCorpus {
    Corpus corpus;
    EmbeddingTable morpheme_embeddings;
    EmbeddingTable entity_embeddings;
};

inline constexpr std::array<const char*, 12> synthetic_pos_tags = {
    "NNG", "NNP", "NNB", "VV", "VA", "MAG", "JKS", "JKO", "JKB", "EC", "EF", "ETM"};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

inline std::vector<float> offset_unit(Rng& rng, const std::vector<double>& mean, double offset) {
    auto v = random_unit(rng, mean.size());
    double norm = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] += offset * mean[k];
        norm += v[k] * v[k];
    }
    norm = std::sqrt(norm);
    std::vector<float> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = static_cast<float>(v[k] / norm);
    return out;
}

inline std::string padded(std::size_t value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

} // namespace detail

/// Deterministic labeled corpus plus matching embedding tables. Documents are
/// interleaved across classes; splits are left unassigned.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.classes == 0) throw Error("synthetic spec needs at least one class");
    if (spec.docs_per_class == 0) throw Error("synthetic spec needs at least one document per class");
    if (spec.vocab_per_class == 0) throw Error("synthetic spec needs a nonempty vocabulary per class");
    if (spec.min_length == 0 || spec.min_length > spec.max_length) throw Error("synthetic spec has an invalid length range");
    if (spec.overlap < 0.0 || spec.overlap > 1.0 || spec.entity_overlap < 0.0 || spec.entity_overlap > 1.0) {
        throw Error("synthetic overlap fractions must lie in [0, 1]");
    }
    if (spec.entity_density < 0.0) throw Error("synthetic entity density must be non-negative");
    if (spec.embedding_dim == 0 || spec.entity_dim == 0) throw Error("synthetic embedding dims must be positive");
    if (spec.entity_density > 0.0 && spec.entities_per_class == 0) throw Error("entity density needs an entity pool");

    Rng rng(seed);
    const std::size_t vocab_total = spec.classes * spec.vocab_per_class;
    auto morpheme = [&](std::size_t global) {
        return "m" + detail::padded(global / spec.vocab_per_class, 2) + "_" +
               detail::padded(global % spec.vocab_per_class, 4);
    };
    auto entity = [&](std::size_t c, std::size_t k) {
        return "e" + detail::padded(c, 2) + "_" + detail::padded(k, 3);
    };

    SyntheticCorpus out{Corpus{}, EmbeddingTable(spec.embedding_dim), EmbeddingTable(spec.entity_dim)};

    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto mean = detail::random_unit(rng, spec.embedding_dim);
        for (std::size_t k = 0; k < spec.vocab_per_class; ++k) {
            out.morpheme_embeddings.add(morpheme(c * spec.vocab_per_class + k),
                                        detail::offset_unit(rng, mean, spec.class_offset));
        }
    }
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto mean = detail::random_unit(rng, spec.entity_dim);
        for (std::size_t k = 0; k < spec.entities_per_class; ++k) {
            out.entity_embeddings.add(entity(c, k), detail::offset_unit(rng, mean, spec.class_offset));
        }
    }

    const double whole = std::floor(spec.entity_density);
    const double fraction = spec.entity_density - whole;
    std::size_t index = 0;
    for (std::size_t k = 0; k < spec.docs_per_class; ++k) {
        for (std::size_t c = 0; c < spec.classes; ++c) {
            AnnotatedDocument doc;
            doc.id = "d" + detail::padded(index++, 6);
            doc.label = "class" + std::to_string(c);
            const std::size_t length =
                spec.min_length + static_cast<std::size_t>(rng.below(spec.max_length - spec.min_length + 1));
            for (std::size_t t = 0; t < length; ++t) {
                std::size_t global;
                if (rng.bernoulli(spec.overlap)) {
                    global = static_cast<std::size_t>(rng.below(vocab_total));
                } else {
                    global = c * spec.vocab_per_class + static_cast<std::size_t>(rng.below(spec.vocab_per_class));
                }
                doc.morphemes.push_back(morpheme(global));
                doc.pos_tags.push_back(synthetic_pos_tags[global % synthetic_pos_tags.size()]);
            }
            std::size_t mentions = static_cast<std::size_t>(whole) + (rng.bernoulli(fraction) ? 1 : 0);
            if (spec.entities_per_class == 0) mentions = 0;
            for (std::size_t m = 0; m < mentions; ++m) {
                const std::size_t pool =
                    rng.bernoulli(spec.entity_overlap) ? static_cast<std::size_t>(rng.below(spec.classes)) : c;
                const auto name = entity(pool, static_cast<std::size_t>(rng.below(spec.entities_per_class)));
                if (std::find(doc.entities.begin(), doc.entities.end(), name) == doc.entities.end()) {
                    doc.entities.push_back(name);
                }
            }
            out.corpus.documents.push_back(std::move(doc));
        }
    }
    return out;
}

} // namespace ligram
