#include "attnacc/error.hpp"

#include <utility>

namespace attnacc {

ManifestError::ManifestError(Kind kind, std::string field, std::string span_id, const std::string& message)
    : Error(message), kind_(kind), field_(std::move(field)), span_id_(std::move(span_id)) {}

DumpError::DumpError(Kind kind, std::uint64_t offset, const std::string& message)
    : Error(message), kind_(kind), offset_(offset) {}

const char* to_string(ManifestError::Kind kind) noexcept {
    switch (kind) {
        case ManifestError::Kind::syntax: return "syntax";
        case ManifestError::Kind::schema: return "schema";
        case ManifestError::Kind::semantic: return "semantic";
    }
    return "unknown";
}

const char* to_string(DumpError::Kind kind) noexcept {
    switch (kind) {
        case DumpError::Kind::bad_magic: return "bad magic";
        case DumpError::Kind::truncated: return "truncated";
        case DumpError::Kind::zero_shape: return "zero shape";
        case DumpError::Kind::trailing_data: return "trailing data";
        case DumpError::Kind::shape_overflow: return "shape overflow";
        case DumpError::Kind::io: return "io";
    }
    return "unknown";
}

}  // namespace attnacc
