#pragma once

// Binary attention-dump format (`.attn`):
//
//   offset  size  field
//   0       8     magic "ATTNDMP1"
//   8       4     layers   (u32, little-endian)
//   12      4     heads    (u32, little-endian)
//   16      4     rows     (u32, little-endian)
//   20      4     cols     (u32, little-endian)
//   24      4*N   IEEE-754 binary32 values, little-endian,
//                 layer-major, then head, then row-major matrix
//
// The file length must equal 24 + 4 * layers * heads * rows * cols exactly.

#include "attnacc/sample.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace attnacc {

inline constexpr char kDumpMagic[8] = {'A', 'T', 'T', 'N', 'D', 'M', 'P', '1'};
inline constexpr std::uint64_t kDumpHeaderSize = 24;

/// Writes `dump` and returns the number of bytes emitted.
/// Throws DumpError(io) carrying the bytes written before the failure.
std::uint64_t write_dump(const AttentionDump& dump, std::ostream& sink);

/// Reads a whole dump. Throws DumpError with the byte offset of the problem.
AttentionDump read_dump(std::istream& source);

/// Reads only the header; leaves the stream positioned at the payload.
DumpShape read_dump_header(std::istream& source);

std::uint64_t write_dump_file(const AttentionDump& dump, const std::string& path);
AttentionDump read_dump_file(const std::string& path);

}  // namespace attnacc
