#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ligram/binary_io.hpp"
#include "ligram/error.hpp"

namespace ligram {

/// Token -> dim-length float vector. Rows are stored contiguously, row i
/// belonging to tokens()[i].
class EmbeddingTable {
public:
    static constexpr std::uint32_t format_version = 1;

    explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    void add(const std::string& token, std::span<const float> values) {
        if (values.size() != dim_) {
            throw Error("embedding for '" + token + "' has length " + std::to_string(values.size()) +
                        ", table dim is " + std::to_string(dim_));
        }
        for (const float v : values) {
            if (!std::isfinite(v)) throw Error("embedding for '" + token + "' has a non-finite entry");
        }
        if (!index_.try_emplace(token, tokens_.size()).second) {
            throw Error("duplicate embedding token '" + token + "'");
        }
        tokens_.push_back(token);
        values_.insert(values_.end(), values.begin(), values.end());
    }

    std::optional<std::span<const float>> find(const std::string& token) const {
        const auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return row(it->second);
    }

    std::span<const float> row(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }

    bool operator==(const EmbeddingTable& other) const {
        return dim_ == other.dim_ && tokens_ == other.tokens_ && values_ == other.values_;
    }

private:
    std::size_t dim_;
    std::vector<std::string> tokens_;
    std::vector<float> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Companion token file of an embedding file: one token per line.
inline std::string token_file_path(const std::string& embedding_path) {
    return embedding_path + ".tokens";
}

/// Writes the LGEM binary ("LGEM", u32 version, u64 rows, u32 dim, rows*dim
/// f32, little-endian) and its token file.
inline void write_embeddings(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write embedding file: " + path);
    binary::write_magic(out, "LGEM");
    binary::write_uint<std::uint32_t>(out, EmbeddingTable::format_version);
    binary::write_uint<std::uint64_t>(out, table.rows());
    binary::write_uint<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (const float v : table.row(i)) binary::write_f32(out, v);
    }
    std::ofstream tokens(token_file_path(path), std::ios::binary);
    if (!tokens) throw Error("cannot write token file: " + token_file_path(path));
    for (const auto& t : table.tokens()) tokens << t << '\n';
}

inline EmbeddingTable read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open embedding file: " + path);
    binary::expect_magic(in, "LGEM", path);
    const auto version = binary::read_uint<std::uint32_t>(in, "format version");
    if (version != EmbeddingTable::format_version) {
        throw FormatError(path + ": unsupported embedding format version " + std::to_string(version));
    }
    const auto rows = binary::read_uint<std::uint64_t>(in, "row count");
    const auto dim = binary::read_uint<std::uint32_t>(in, "dim");
    if (dim == 0) throw FormatError(path + ": embedding dim is zero");

    const std::string token_path = token_file_path(path);
    std::ifstream token_in(token_path);
    if (!token_in) throw Error("cannot open token file: " + token_path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(token_in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    if (tokens.size() != rows) {
        throw FormatError(token_path + ": has " + std::to_string(tokens.size()) + " tokens, " + path +
                          " declares " + std::to_string(rows) + " rows");
    }

    EmbeddingTable table(dim);
    std::vector<float> row(dim);
    for (std::uint64_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < dim; ++c) row[c] = binary::read_f32(in, "embedding values");
        try {
            table.add(tokens[r], row);
        } catch (const Error& e) {
            throw FormatError(path + ": row " + std::to_string(r) + ": " + e.what());
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(path + ": trailing bytes after " + std::to_string(rows) + "x" +
                          std::to_string(dim) + " values");
    }
    return table;
}

} // namespace ligram
