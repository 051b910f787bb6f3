#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ligram/error.hpp"
#include "ligram/rng.hpp"

namespace ligram {

enum class Split { train, val, test, unlabeled };

inline std::string_view to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline std::optional<Split> parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    if (name == "unlabeled") return Split::unlabeled;
    return std::nullopt;
}

/// One short text: aligned morpheme/POS sequences plus its entity mentions.
struct AnnotatedDocument {
    std::string id;
    std::vector<std::string> morphemes;
    std::vector<std::string> pos_tags;
    std::vector<std::string> entities; // distinct, in first-mention order
    std::optional<std::string> label;
    std::optional<Split> split; // nullopt until assign_splits runs

    bool operator==(const AnnotatedDocument&) const = default;
};

/// Dense token -> index association; indices are assigned in insertion order.
class Vocabulary {
public:
    std::size_t add(const std::string& token) {
        auto [it, inserted] = index_.try_emplace(token, tokens_.size());
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::optional<std::size_t> find(const std::string& token) const {
        const auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t at(const std::string& token) const {
        const auto it = index_.find(token);
        if (it == index_.end()) throw Error("token not in vocabulary: " + token);
        return it->second;
    }

    const std::string& token(std::size_t index) const { return tokens_.at(index); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t size() const { return tokens_.size(); }
    bool empty() const { return tokens_.empty(); }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class TokenKind { morpheme, pos, entity };

inline std::string_view to_string(TokenKind kind) {
    switch (kind) {
    case TokenKind::morpheme: return "morpheme";
    case TokenKind::pos: return "pos";
    case TokenKind::entity: return "entity";
    }
    return "morpheme";
}

struct Corpus {
    std::vector<AnnotatedDocument> documents;
    std::vector<std::string> class_names;
    Vocabulary morpheme_vocab;
    Vocabulary pos_vocab;
    Vocabulary entity_vocab;
    bool vocabularies_built = false;

    std::size_t size() const { return documents.size(); }
    std::size_t num_classes() const { return class_names.size(); }

    const Vocabulary& vocab(TokenKind kind) const {
        switch (kind) {
        case TokenKind::morpheme: return morpheme_vocab;
        case TokenKind::pos: return pos_vocab;
        case TokenKind::entity: return entity_vocab;
        }
        return morpheme_vocab;
    }

    /// Token sequence of one document for a kind (entities as a set).
    static const std::vector<std::string>& tokens_of(const AnnotatedDocument& doc, TokenKind kind) {
        switch (kind) {
        case TokenKind::morpheme: return doc.morphemes;
        case TokenKind::pos: return doc.pos_tags;
        case TokenKind::entity: return doc.entities;
        }
        return doc.morphemes;
    }

    std::optional<std::size_t> class_index(const std::string& name) const {
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - class_names.begin());
    }

    /// Class index of every document, or nullopt for unlabeled ones.
    std::vector<std::optional<std::size_t>> labels() const {
        std::vector<std::optional<std::size_t>> out;
        out.reserve(documents.size());
        for (const auto& doc : documents) {
            out.push_back(doc.label ? class_index(*doc.label) : std::nullopt);
        }
        return out;
    }

    std::vector<std::size_t> indices_in(Split split) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < documents.size(); ++i) {
            if (documents[i].split == split) out.push_back(i);
        }
        return out;
    }
};

namespace detail {

inline void check_document(const AnnotatedDocument& doc, const std::string& where) {
    if (doc.morphemes.size() != doc.pos_tags.size()) {
        throw FormatError(where + ": document '" + doc.id + "' has " +
                          std::to_string(doc.morphemes.size()) + " morphemes but " +
                          std::to_string(doc.pos_tags.size()) + " pos tags");
    }
    if ((doc.split == Split::train || doc.split == Split::val) && !doc.label) {
        throw FormatError(where + ": document '" + doc.id + "' is in split " +
                          std::string(to_string(*doc.split)) + " but has no label");
    }
}

inline std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw FormatError(std::string("missing key '") + key + "'");
    if (!it->is_array()) throw FormatError(std::string("key '") + key + "' is not an array");
    std::vector<std::string> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_string()) throw FormatError(std::string("key '") + key + "' holds a non-string");
        out.push_back(v.get<std::string>());
    }
    return out;
}

inline std::vector<std::string> distinct(std::vector<std::string> items) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (auto& item : items) {
        if (seen.insert(item).second) out.push_back(std::move(item));
    }
    return out;
}

} // namespace detail

inline AnnotatedDocument parse_document(const std::string& line) {
    const auto j = nlohmann::json::parse(line); // throws parse_error
    if (!j.is_object()) throw FormatError("record is not a JSON object");
    AnnotatedDocument doc;
    const auto id = j.find("id");
    if (id == j.end() || !id->is_string()) throw FormatError("missing or non-string 'id'");
    doc.id = id->get<std::string>();
    doc.morphemes = detail::string_array(j, "morphemes");
    doc.pos_tags = detail::string_array(j, "pos");
    doc.entities = detail::distinct(detail::string_array(j, "entities"));
    if (const auto label = j.find("label"); label != j.end() && !label->is_null()) {
        if (!label->is_string()) throw FormatError("'label' must be a string or null");
        doc.label = label->get<std::string>();
    }
    if (const auto split = j.find("split"); split != j.end() && !split->is_null()) {
        if (!split->is_string()) throw FormatError("'split' must be a string or null");
        const auto name = split->get<std::string>();
        doc.split = parse_split(name);
        if (!doc.split) throw FormatError("unknown split tag '" + name + "'");
    }
    return doc;
}

/// Reads line-delimited JSON records. Blank lines are skipped; every error
/// names the 1-based line number.
inline Corpus read_corpus(std::istream& in, const std::string& name = "<corpus>") {
    Corpus corpus;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        AnnotatedDocument doc;
        try {
            doc = parse_document(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": malformed record: " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(where + ": " + e.what());
        }
        detail::check_document(doc, where);
        if (!ids.insert(doc.id).second) {
            throw FormatError(where + ": duplicate id '" + doc.id + "'");
        }
        corpus.documents.push_back(std::move(doc));
    }
    return corpus;
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file: " + path);
    return read_corpus(in, path);
}

inline std::string document_to_json(const AnnotatedDocument& doc) {
    nlohmann::ordered_json j;
    j["id"] = doc.id;
    j["morphemes"] = doc.morphemes;
    j["pos"] = doc.pos_tags;
    j["entities"] = doc.entities;
    j["label"] = doc.label ? nlohmann::ordered_json(*doc.label) : nlohmann::ordered_json(nullptr);
    j["split"] = doc.split ? nlohmann::ordered_json(std::string(to_string(*doc.split)))
                           : nlohmann::ordered_json(nullptr);
    return j.dump();
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& doc : corpus.documents) out << document_to_json(doc) << '\n';
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file: " + path);
    write_corpus(out, corpus);
}

/// Keeps the first document of every distinct morpheme sequence.
inline Corpus deduplicate(const Corpus& corpus) {
    Corpus out;
    out.class_names = corpus.class_names;
    std::set<std::vector<std::string>> seen;
    for (const auto& doc : corpus.documents) {
        if (seen.insert(doc.morphemes).second) out.documents.push_back(doc);
    }
    return out;
}

/// Drops every morpheme occurring fewer than min_freq times in the corpus,
/// together with the POS tag at the same position. Documents are kept even
/// when they end up empty so document indices stay stable.
inline Corpus filter_low_frequency(const Corpus& corpus, std::size_t min_freq = 5) {
    if (min_freq < 1) throw Error("min_freq must be at least 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : corpus.documents) {
        for (const auto& m : doc.morphemes) ++counts[m];
    }
    Corpus out;
    out.class_names = corpus.class_names;
    out.documents.reserve(corpus.documents.size());
    for (const auto& doc : corpus.documents) {
        AnnotatedDocument kept = doc;
        kept.morphemes.clear();
        kept.pos_tags.clear();
        for (std::size_t k = 0; k < doc.morphemes.size(); ++k) {
            if (counts[doc.morphemes[k]] >= min_freq) {
                kept.morphemes.push_back(doc.morphemes[k]);
                kept.pos_tags.push_back(doc.pos_tags[k]);
            }
        }
        out.documents.push_back(std::move(kept));
    }
    return out;
}

/// Assigns dense first-occurrence indices to morphemes, POS tags, entities and
/// class names.
inline Corpus build_vocabularies(const Corpus& corpus) {
    Corpus out;
    out.documents = corpus.documents;
    for (const auto& doc : out.documents) {
        for (const auto& m : doc.morphemes) out.morpheme_vocab.add(m);
        for (const auto& p : doc.pos_tags) out.pos_vocab.add(p);
        for (const auto& e : doc.entities) out.entity_vocab.add(e);
        if (doc.label && !out.class_index(*doc.label)) out.class_names.push_back(*doc.label);
    }
    if (out.class_names.empty()) throw Error("corpus has no labeled documents");
    out.vocabularies_built = true;
    return out;
}

/// Per class, samples per_class labeled documents without replacement: the
/// first half become train, the rest val. Every other labeled document is
/// test and unlabeled documents are tagged unlabeled.
inline Corpus assign_splits(const Corpus& corpus, std::size_t per_class, std::uint64_t seed) {
    if (per_class < 2) throw Error("per_class must be at least 2");
    if (corpus.class_names.empty()) throw Error("assign_splits needs class names; build vocabularies first");
    Corpus out = corpus;
    std::vector<std::vector<std::size_t>> by_class(corpus.num_classes());
    for (std::size_t i = 0; i < out.documents.size(); ++i) {
        auto& doc = out.documents[i];
        if (!doc.label) {
            doc.split = Split::unlabeled;
            continue;
        }
        const auto c = out.class_index(*doc.label);
        if (!c) throw Error("document '" + doc.id + "' has unknown class '" + *doc.label + "'");
        by_class[*c].push_back(i);
        doc.split = Split::test;
    }
    Rng rng(seed);
    const std::size_t n_train = per_class / 2;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.size() < per_class) {
            throw Error("class '" + corpus.class_names[c] + "' has " + std::to_string(members.size()) +
                        " labeled documents, fewer than " + std::to_string(per_class));
        }
        rng.shuffle(members);
        for (std::size_t k = 0; k < per_class; ++k) {
            out.documents[members[k]].split = k < n_train ? Split::train : Split::val;
        }
    }
    return out;
}

/// Reorders documents, keeping vocabularies and class names as they are.
inline Corpus permute_documents(const Corpus& corpus, const std::vector<std::size_t>& order) {
    if (order.size() != corpus.size()) throw Error("permutation size does not match corpus");
    Corpus out = corpus;
    for (std::size_t i = 0; i < order.size(); ++i) out.documents[i] = corpus.documents.at(order[i]);
    return out;
}

/// Summary figures in the layout of a dataset statistics table.
struct CorpusStats {
    std::size_t texts = 0;
    double avg_length = 0.0;
    std::size_t classes = 0;
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::size_t morphemes = 0;
    std::size_t entities = 0;
    std::size_t pos = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats s;
    s.texts = corpus.size();
    std::size_t total = 0;
    for (const auto& doc : corpus.documents) {
        total += doc.morphemes.size();
        if (doc.split == Split::train) ++s.train;
        if (doc.split == Split::val) ++s.val;
        if (doc.split == Split::test) ++s.test;
    }
    s.avg_length = s.texts ? static_cast<double>(total) / static_cast<double>(s.texts) : 0.0;
    s.classes = corpus.num_classes();
    s.morphemes = corpus.morpheme_vocab.size();
    s.entities = corpus.entity_vocab.size();
    s.pos = corpus.pos_vocab.size();
    return s;
}

} // namespace ligram
