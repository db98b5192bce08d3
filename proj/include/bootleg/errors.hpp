#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bootleg {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what)
        : std::runtime_error(what)
    {
    }
};

/// Malformed or truncated binary input. Carries the byte offset at which
/// parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")")
        , byte_offset_(byte_offset)
    {
    }

    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

/// Input uses a feature the library deliberately does not handle
/// (e.g. MIDI format 2).
class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

/// Persisted file could not be loaded: bad magic, version mismatch,
/// checksum failure or truncation.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Bad configuration file or invalid run settings.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Image could not be decoded.
class DecodeError : public Error {
public:
    using Error::Error;
};

/// The comb-filter bank found no staff-like response on a page.
class NoStaffError : public Error {
public:
    using Error::Error;
};

/// Detected staves could not be grouped into grand-staff systems.
class PairingError : public Error {
public:
    using Error::Error;
};

/// Database construction failed (duplicate piece id, unreadable input).
class BuildError : public Error {
public:
    using Error::Error;
};

/// Every page of a piece failed sheet feature extraction.
class EmptyPieceError : public Error {
public:
    using Error::Error;
};

/// Evaluation harness misuse (missing pairing, empty inputs).
class EvalError : public Error {
public:
    using Error::Error;
};

/// A search was attempted with a width-0 query.
class EmptyQueryError : public Error {
public:
    using Error::Error;
};

} // namespace bootleg
