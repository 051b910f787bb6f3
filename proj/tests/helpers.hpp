#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "ligram/corpus.hpp"

namespace ligram::testing {

// POS tags default to "T<morpheme>" so positions stay traceable after filtering.
inline AnnotatedDocument make_doc(const std::string& id, const std::vector<std::string>& morphemes,
                                  std::optional<std::string> label = "a", std::vector<std::string> entities = {},
                                  std::optional<Split> split = std::nullopt) {
    AnnotatedDocument d;
    d.id = id;
    d.morphemes = morphemes;
    for (const auto& m : morphemes) d.pos_tags.push_back("T" + m);
    d.entities = std::move(entities);
    d.label = std::move(label);
    d.split = split;
    return d;
}

inline Corpus make_corpus(std::vector<AnnotatedDocument> docs) {
    Corpus c;
    c.documents = std::move(docs);
    return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ligram_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

} // namespace ligram::testing
