#include "attnacc/dump_io.hpp"

#include "attnacc/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

namespace attnacc {

namespace {

constexpr std::size_t kChunkValues = 1 << 14;

void put_u32(unsigned char* out, std::uint32_t v) {
    out[0] = static_cast<unsigned char>(v);
    out[1] = static_cast<unsigned char>(v >> 8);
    out[2] = static_cast<unsigned char>(v >> 16);
    out[3] = static_cast<unsigned char>(v >> 24);
}

std::uint32_t get_u32(const unsigned char* in) {
    return std::uint32_t{in[0]} | std::uint32_t{in[1]} << 8 | std::uint32_t{in[2]} << 16 |
           std::uint32_t{in[3]} << 24;
}

// Reads up to `size` bytes; returns how many arrived.
std::size_t read_some(std::istream& in, unsigned char* dst, std::size_t size) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(size));
    return static_cast<std::size_t>(in.gcount());
}

}  // namespace

std::uint64_t write_dump(const AttentionDump& dump, std::ostream& sink) {
    const DumpShape& s = dump.shape();
    std::uint64_t written = 0;
    auto emit = [&](const unsigned char* data, std::size_t size) {
        sink.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!sink) throw DumpError(DumpError::Kind::io, written, "dump write failed after " + std::to_string(written) + " bytes");
        written += size;
    };

    std::array<unsigned char, kDumpHeaderSize> header{};
    std::memcpy(header.data(), kDumpMagic, sizeof(kDumpMagic));
    put_u32(header.data() + 8, s.layers);
    put_u32(header.data() + 12, s.heads);
    put_u32(header.data() + 16, s.rows);
    put_u32(header.data() + 20, s.cols);
    emit(header.data(), header.size());

    const auto values = dump.values();
    std::vector<unsigned char> buf;
    for (std::size_t begin = 0; begin < values.size(); begin += kChunkValues) {
        const std::size_t count = std::min(kChunkValues, values.size() - begin);
        buf.resize(count * 4);
        for (std::size_t i = 0; i < count; ++i) put_u32(buf.data() + 4 * i, std::bit_cast<std::uint32_t>(values[begin + i]));
        emit(buf.data(), buf.size());
    }
    sink.flush();
    if (!sink) throw DumpError(DumpError::Kind::io, written, "dump flush failed after " + std::to_string(written) + " bytes");
    return written;
}

DumpShape read_dump_header(std::istream& source) {
    std::array<unsigned char, kDumpHeaderSize> header{};
    const std::size_t got = read_some(source, header.data(), header.size());
    if (got < sizeof(kDumpMagic) || std::memcmp(header.data(), kDumpMagic, sizeof(kDumpMagic)) != 0) {
        // A short file whose prefix matches the magic is a truncation, not a different format.
        if (got < sizeof(kDumpMagic) && std::memcmp(header.data(), kDumpMagic, got) == 0)
            throw DumpError(DumpError::Kind::truncated, got, "truncated header at offset " + std::to_string(got));
        throw DumpError(DumpError::Kind::bad_magic, 0, "bad magic at offset 0 (expected ATTNDMP1)");
    }
    if (got < header.size())
        throw DumpError(DumpError::Kind::truncated, got, "truncated header at offset " + std::to_string(got));

    DumpShape shape;
    std::uint32_t* fields[] = {&shape.layers, &shape.heads, &shape.rows, &shape.cols};
    const char* names[] = {"layers", "heads", "rows", "cols"};
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t off = 8 + 4 * i;
        *fields[i] = get_u32(header.data() + off);
        if (*fields[i] == 0)
            throw DumpError(DumpError::Kind::zero_shape, off,
                            std::string("shape field '") + names[i] + "' is zero at offset " + std::to_string(off));
    }
    // Guard the payload size computation against overflow of size_t.
    const std::uint64_t limit = std::numeric_limits<std::size_t>::max() / 4;
    std::uint64_t total = 1;
    for (auto* f : fields) {
        if (total > limit / *f)
            throw DumpError(DumpError::Kind::shape_overflow, 8, "declared shape too large to address");
        total *= *f;
    }
    return shape;
}

AttentionDump read_dump(std::istream& source) {
    const DumpShape shape = read_dump_header(source);
    const std::size_t count = shape.total();
    std::vector<float> values(count);

    std::uint64_t offset = kDumpHeaderSize;
    std::vector<unsigned char> buf;
    for (std::size_t begin = 0; begin < count; begin += kChunkValues) {
        const std::size_t n = std::min(kChunkValues, count - begin);
        buf.resize(n * 4);
        const std::size_t got = read_some(source, buf.data(), buf.size());
        if (got < buf.size()) {
            const std::uint64_t at = offset + got;
            throw DumpError(DumpError::Kind::truncated, at,
                            "truncated payload at offset " + std::to_string(at) + " (expected " +
                                std::to_string(kDumpHeaderSize + 4 * std::uint64_t{count}) + " bytes)");
        }
        for (std::size_t i = 0; i < n; ++i) values[begin + i] = std::bit_cast<float>(get_u32(buf.data() + 4 * i));
        offset += got;
    }
    if (source.peek() != std::char_traits<char>::eof())
        throw DumpError(DumpError::Kind::trailing_data, offset,
                        "unexpected data after payload at offset " + std::to_string(offset));
    return AttentionDump(shape, std::move(values));
}

std::uint64_t write_dump_file(const AttentionDump& dump, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DumpError(DumpError::Kind::io, 0, "cannot open '" + path + "' for writing");
    return write_dump(dump, out);
}

AttentionDump read_dump_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DumpError(DumpError::Kind::io, 0, "cannot open '" + path + "'");
    try {
        return read_dump(in);
    } catch (const DumpError& e) {
        throw DumpError(e.kind(), e.offset(), path + ": " + e.what());
    }
}

}  // namespace attnacc
