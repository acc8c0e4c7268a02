#pragma once

// Domain types for one recorded inference run: the manifest describing the
// token layout, the post-softmax attention submatrix, and the mapping from
// submatrix columns back to images and patches.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attnacc {

enum class SpanRole { system, instruction, special, image, caption, question, anchor_image, output };
enum class Difficulty { easy, hard };
enum class SampleMode { text_image, image_image };

const char* to_string(SpanRole role) noexcept;
const char* to_string(Difficulty difficulty) noexcept;
const char* to_string(SampleMode mode) noexcept;

std::optional<SpanRole> span_role_from_string(std::string_view text) noexcept;
std::optional<Difficulty> difficulty_from_string(std::string_view text) noexcept;
std::optional<SampleMode> sample_mode_from_string(std::string_view text) noexcept;

struct PatchGrid {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    std::size_t size() const noexcept { return std::size_t{rows} * cols; }
    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// A contiguous run of tokens [start, end) with one role.
struct Span {
    std::string id;
    SpanRole role = SpanRole::system;
    std::size_t start = 0;
    std::size_t end = 0;
    std::optional<std::size_t> image_index;  // set iff role is image or anchor_image
    std::optional<PatchGrid> patch_grid;

    std::size_t length() const noexcept { return end - start; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct SampleManifest {
    std::string sample_id;
    std::string task;
    Difficulty difficulty = Difficulty::easy;
    SampleMode mode = SampleMode::text_image;
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t seq_len = 0;
    std::vector<Span> spans;
    std::vector<std::string> query_span_ids;
    std::vector<std::string> key_span_ids;
    std::size_t target_image_index = 0;
    std::optional<bool> answer_correct;
    std::vector<std::string> tags;
    std::optional<std::string> model_name;
    std::optional<std::string> shuffle_group;
    std::optional<std::int64_t> shuffle_seed;
    // Extractor metadata only; no computation reads it.
    std::optional<std::uint32_t> embed_dim;

    const Span* find_span(std::string_view id) const noexcept;
    /// Number of key images (k).
    std::size_t num_images() const noexcept { return key_span_ids.size(); }
    /// Total query rows R of the extracted submatrix.
    std::size_t query_rows() const noexcept;
    /// Total key columns C of the extracted submatrix.
    std::size_t key_cols() const noexcept;
    bool has_tag(std::string_view tag) const noexcept;

    friend bool operator==(const SampleManifest&, const SampleManifest&) = default;
};

/// Parses and fully validates a manifest document. Throws ManifestError.
SampleManifest parse_manifest(std::string_view text);
SampleManifest read_manifest_file(const std::string& path);
/// Canonical JSON form; parse_manifest(serialize_manifest(m)) == m.
std::string serialize_manifest(const SampleManifest& manifest);
/// Re-runs the semantic checks on an in-memory manifest. Throws ManifestError.
void check_manifest(const SampleManifest& manifest);

struct DumpShape {
    std::uint32_t layers = 0;
    std::uint32_t heads = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    std::size_t matrix_size() const noexcept { return std::size_t{rows} * cols; }
    std::size_t layer_size() const noexcept { return std::size_t{heads} * matrix_size(); }
    std::size_t total() const noexcept { return std::size_t{layers} * layer_size(); }
    friend bool operator==(const DumpShape&, const DumpShape&) = default;
};

/// Post-softmax attention values of shape layers x heads x rows x cols,
/// stored layer-major, then head, then row-major.
class AttentionDump {
public:
    AttentionDump() = default;
    explicit AttentionDump(DumpShape shape);
    AttentionDump(DumpShape shape, std::vector<float> values);

    const DumpShape& shape() const noexcept { return shape_; }
    std::span<const float> values() const noexcept { return values_; }
    std::span<float> values() noexcept { return values_; }

    std::size_t offset(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) const noexcept {
        return ((layer * shape_.heads + head) * shape_.rows + row) * shape_.cols + col;
    }
    float at(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) const noexcept {
        return values_[offset(layer, head, row, col)];
    }
    float& at(std::size_t layer, std::size_t head, std::size_t row, std::size_t col) noexcept {
        return values_[offset(layer, head, row, col)];
    }
    /// The rows x cols matrix of one (layer, head).
    std::span<const float> matrix(std::size_t layer, std::size_t head) const noexcept {
        return std::span<const float>(values_).subspan(offset(layer, head, 0, 0), shape_.matrix_size());
    }

    friend bool operator==(const AttentionDump&, const AttentionDump&) = default;

private:
    DumpShape shape_;
    std::vector<float> values_;
};

struct ImageColumns {
    std::string span_id;
    std::size_t image_index = 0;
    std::size_t first = 0;  // first column inside the dump
    std::size_t width = 0;  // n_i
    std::optional<PatchGrid> patch_grid;

    std::size_t end() const noexcept { return first + width; }
};

struct PatchLocation {
    std::size_t image = 0;
    std::size_t patch = 0;  // offset inside the image block
    std::size_t row = 0;
    std::size_t col = 0;
};

/// Column layout of the dump, one entry per key image in key_span_ids order.
/// Entry i always describes image_index i.
struct ColumnMap {
    SampleMode mode = SampleMode::text_image;
    std::size_t rows = 0;  // R
    std::size_t cols = 0;  // C
    std::vector<ImageColumns> images;

    std::size_t num_images() const noexcept { return images.size(); }
    /// Dump column of patch (row, col) of image `image`. Requires a patch grid.
    std::size_t patch_column(std::size_t image, std::size_t grid_row, std::size_t grid_col) const;
    /// Inverse mapping of a dump column.
    PatchLocation locate(std::size_t column) const;
};

ColumnMap build_column_map(const SampleManifest& manifest);

struct Violation {
    enum class Kind { layer_count, head_count, row_count, col_count, value_range };

    Kind kind;
    std::string message;
    // Coordinates, set for value_range violations.
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    float value = 0.0f;
};

const char* to_string(Violation::Kind kind) noexcept;

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

/// Checks a dump against its manifest. Never throws for data problems;
/// every mismatch becomes a report entry.
ValidationReport validate_sample(const SampleManifest& manifest, const AttentionDump& dump);

}  // namespace attnacc
