#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace attnacc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by parse_manifest. `field` and `span_id` name the offending
/// location when one exists (empty otherwise).
class ManifestError : public Error {
public:
    enum class Kind { syntax, schema, semantic };

    ManifestError(Kind kind, std::string field, std::string span_id, const std::string& message);

    Kind kind() const noexcept { return kind_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& span_id() const noexcept { return span_id_; }

private:
    Kind kind_;
    std::string field_;
    std::string span_id_;
};

/// Raised by the dump reader/writer. `offset` is the byte offset in the
/// stream where the problem was detected; for sink failures it is the
/// number of bytes successfully written.
class DumpError : public Error {
public:
    enum class Kind { bad_magic, truncated, zero_shape, trailing_data, shape_overflow, io };

    DumpError(Kind kind, std::uint64_t offset, const std::string& message);

    Kind kind() const noexcept { return kind_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::uint64_t offset_;
};

/// An operation was requested on data that cannot support it
/// (patch factors without a patch grid, anchor factors on a text-image run).
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Dataset-level problems: duplicate sample ids, unlabeled datasets,
/// samples failing validation during analysis.
class DatasetError : public Error {
public:
    using Error::Error;
};

const char* to_string(ManifestError::Kind kind) noexcept;
const char* to_string(DumpError::Kind kind) noexcept;

}  // namespace attnacc
