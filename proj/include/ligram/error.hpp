#pragma once

#include <stdexcept>
#include <string>

namespace ligram {

/// Base class for every error raised by the library. CLI commands turn these
/// into a one-line diagnostic and a nonzero exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input files (corpus, embeddings, checkpoints, graph bundles).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Shape mismatches, non-finite values and other numerical failures.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace ligram
