#include "attnacc/sample.hpp"

#include "attnacc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace attnacc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::pair<SpanRole, const char*> kRoleNames[] = {
    {SpanRole::system, "system"},   {SpanRole::instruction, "instruction"},
    {SpanRole::special, "special"}, {SpanRole::image, "image"},
    {SpanRole::caption, "caption"}, {SpanRole::question, "question"},
    {SpanRole::anchor_image, "anchor_image"}, {SpanRole::output, "output"},
};

[[noreturn]] void schema_error(const std::string& field, const std::string& span_id, const std::string& what) {
    std::string msg = "schema error: " + field + ": " + what;
    if (!span_id.empty()) msg += " (span '" + span_id + "')";
    throw ManifestError(ManifestError::Kind::schema, field, span_id, msg);
}

[[noreturn]] void semantic_error(const std::string& field, const std::string& span_id, const std::string& what) {
    std::string msg = "semantic error: " + field + ": " + what;
    if (!span_id.empty()) msg += " (span '" + span_id + "')";
    throw ManifestError(ManifestError::Kind::semantic, field, span_id, msg);
}

const json& require(const json& obj, const char* key, const std::string& path, const std::string& span_id = {}) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path + key, span_id, "missing field");
    return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& path, const std::string& span_id = {}) {
    const json& v = require(obj, key, path, span_id);
    if (!v.is_string()) schema_error(path + key, span_id, "expected string");
    return v.get<std::string>();
}

std::uint64_t as_unsigned(const json& v, const std::string& field, const std::string& span_id) {
    if (!v.is_number_unsigned()) {
        if (v.is_number_integer()) schema_error(field, span_id, "expected non-negative integer, got negative");
        schema_error(field, span_id, "expected non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::uint64_t get_unsigned(const json& obj, const char* key, const std::string& path, const std::string& span_id = {}) {
    return as_unsigned(require(obj, key, path, span_id), path + key, span_id);
}

std::vector<std::string> get_string_list(const json& obj, const char* key, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) schema_error(key, {}, "missing field");
        return {};
    }
    if (!it->is_array()) schema_error(key, {}, "expected array of strings");
    std::vector<std::string> out;
    out.reserve(it->size());
    for (std::size_t i = 0; i < it->size(); ++i) {
        const json& e = (*it)[i];
        if (!e.is_string()) schema_error(std::string(key) + "[" + std::to_string(i) + "]", {}, "expected string");
        out.push_back(e.get<std::string>());
    }
    return out;
}

// Present and non-null.
const json* optional_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return nullptr;
    return &*it;
}

Span parse_span(const json& j, std::size_t position) {
    const std::string path = "spans[" + std::to_string(position) + "].";
    if (!j.is_object()) schema_error("spans[" + std::to_string(position) + "]", {}, "expected object");
    Span span;
    span.id = get_string(j, "id", path);
    const std::string role = get_string(j, "role", path, span.id);
    auto parsed_role = span_role_from_string(role);
    if (!parsed_role) schema_error(path + "role", span.id, "unknown role '" + role + "'");
    span.role = *parsed_role;
    span.start = get_unsigned(j, "start", path, span.id);
    span.end = get_unsigned(j, "end", path, span.id);
    if (const json* v = optional_field(j, "image_index")) {
        span.image_index = as_unsigned(*v, path + "image_index", span.id);
    }
    if (const json* v = optional_field(j, "patch_grid")) {
        if (!v->is_object()) schema_error(path + "patch_grid", span.id, "expected object");
        PatchGrid grid;
        const std::string gpath = path + "patch_grid.";
        const auto rows = get_unsigned(*v, "rows", gpath, span.id);
        const auto cols = get_unsigned(*v, "cols", gpath, span.id);
        if (rows == 0 || cols == 0) semantic_error(path + "patch_grid", span.id, "rows and cols must be positive");
        if (rows > UINT32_MAX || cols > UINT32_MAX) semantic_error(path + "patch_grid", span.id, "grid too large");
        grid.rows = static_cast<std::uint32_t>(rows);
        grid.cols = static_cast<std::uint32_t>(cols);
        span.patch_grid = grid;
    }
    return span;
}

bool is_image_role(SpanRole role) { return role == SpanRole::image || role == SpanRole::anchor_image; }

void check_id_list(const SampleManifest& m, const std::vector<std::string>& ids, const char* field) {
    if (ids.empty()) semantic_error(field, {}, "must list at least one span");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!m.find_span(id)) semantic_error(field, id, "dangling span id");
        if (!seen.insert(id).second) semantic_error(field, id, "span listed twice");
    }
}

}  // namespace

const char* to_string(SpanRole role) noexcept {
    for (const auto& [r, name] : kRoleNames)
        if (r == role) return name;
    return "unknown";
}

const char* to_string(Difficulty difficulty) noexcept { return difficulty == Difficulty::easy ? "easy" : "hard"; }

const char* to_string(SampleMode mode) noexcept {
    return mode == SampleMode::text_image ? "text-image" : "image-image";
}

std::optional<SpanRole> span_role_from_string(std::string_view text) noexcept {
    for (const auto& [r, name] : kRoleNames)
        if (text == name) return r;
    return std::nullopt;
}

std::optional<Difficulty> difficulty_from_string(std::string_view text) noexcept {
    if (text == "easy") return Difficulty::easy;
    if (text == "hard") return Difficulty::hard;
    return std::nullopt;
}

std::optional<SampleMode> sample_mode_from_string(std::string_view text) noexcept {
    if (text == "text-image") return SampleMode::text_image;
    if (text == "image-image") return SampleMode::image_image;
    return std::nullopt;
}

const Span* SampleManifest::find_span(std::string_view id) const noexcept {
    for (const auto& s : spans)
        if (s.id == id) return &s;
    return nullptr;
}

std::size_t SampleManifest::query_rows() const noexcept {
    std::size_t n = 0;
    for (const auto& id : query_span_ids)
        if (const Span* s = find_span(id)) n += s->length();
    return n;
}

std::size_t SampleManifest::key_cols() const noexcept {
    std::size_t n = 0;
    for (const auto& id : key_span_ids)
        if (const Span* s = find_span(id)) n += s->length();
    return n;
}

bool SampleManifest::has_tag(std::string_view tag) const noexcept {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

void check_manifest(const SampleManifest& m) {
    if (m.num_layers == 0) semantic_error("num_layers", {}, "must be positive");
    if (m.num_heads == 0) semantic_error("num_heads", {}, "must be positive");
    if (m.seq_len == 0) semantic_error("seq_len", {}, "must be positive");

    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < m.spans.size(); ++i) {
        const Span& s = m.spans[i];
        const std::string path = "spans[" + std::to_string(i) + "]";
        if (s.id.empty()) semantic_error(path + ".id", {}, "empty span id");
        if (!ids.insert(s.id).second) semantic_error(path + ".id", s.id, "duplicate span id");
        if (s.start >= s.end) semantic_error(path, s.id, "empty or inverted span (start >= end)");
        if (s.end > m.seq_len) semantic_error(path + ".end", s.id, "span ends past seq_len");
        if (is_image_role(s.role) && !s.image_index) semantic_error(path + ".image_index", s.id, "required for image spans");
        if (!is_image_role(s.role) && s.image_index) semantic_error(path + ".image_index", s.id, "only allowed on image spans");
        if (s.patch_grid && s.patch_grid->size() != s.length())
            semantic_error(path + ".patch_grid", s.id, "rows x cols does not equal span length");
        if (i > 0) {
            const Span& prev = m.spans[i - 1];
            if (s.start < prev.start) semantic_error("spans", s.id, "spans not sorted by start");
            if (s.start < prev.end) semantic_error("spans", s.id, "overlapping spans ('" + prev.id + "' and '" + s.id + "')");
        }
    }

    std::vector<const Span*> images;
    for (const auto& s : m.spans)
        if (s.role == SpanRole::image) images.push_back(&s);
    std::sort(images.begin(), images.end(),
              [](const Span* a, const Span* b) { return *a->image_index < *b->image_index; });
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::size_t idx = *images[i]->image_index;
        if (idx < i) semantic_error("image_index", images[i]->id, "image_index repeated (" + std::to_string(idx) + ")");
        if (idx > i) semantic_error("image_index", images[i]->id, "image_index gap (missing " + std::to_string(i) + ")");
    }

    check_id_list(m, m.query_span_ids, "query_span_ids");
    check_id_list(m, m.key_span_ids, "key_span_ids");

    for (std::size_t i = 0; i < m.key_span_ids.size(); ++i) {
        const Span* s = m.find_span(m.key_span_ids[i]);
        if (s->role != SpanRole::image) semantic_error("key_span_ids", s->id, "key span must have role image");
        if (*s->image_index != i)
            semantic_error("key_span_ids", s->id, "key spans must be listed in image_index order");
    }
    if (m.key_span_ids.size() != images.size())
        semantic_error("key_span_ids", {}, "every image span must be a key span");

    for (const auto& id : m.query_span_ids) {
        const Span* s = m.find_span(id);
        const bool allowed = m.mode == SampleMode::text_image
                                 ? (s->role == SpanRole::caption || s->role == SpanRole::question ||
                                    s->role == SpanRole::output)
                                 : (s->role == SpanRole::anchor_image || s->role == SpanRole::output);
        if (!allowed)
            semantic_error("query_span_ids", id,
                           std::string("role ") + to_string(s->role) + " not allowed as query in " + to_string(m.mode) +
                               " mode");
    }

    if (m.target_image_index >= m.key_span_ids.size())
        semantic_error("target_image_index", {},
                       "target image index " + std::to_string(m.target_image_index) + " out of range (k=" +
                           std::to_string(m.key_span_ids.size()) + ")");
}

SampleManifest parse_manifest(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ManifestError(ManifestError::Kind::syntax, {}, {}, std::string("syntax error: ") + e.what());
    }
    if (!doc.is_object()) schema_error("<root>", {}, "expected object");

    SampleManifest m;
    m.sample_id = get_string(doc, "sample_id", "");
    m.task = get_string(doc, "task", "");
    const std::string difficulty = get_string(doc, "difficulty", "");
    auto d = difficulty_from_string(difficulty);
    if (!d) schema_error("difficulty", {}, "unknown difficulty '" + difficulty + "'");
    m.difficulty = *d;
    const std::string mode = get_string(doc, "mode", "");
    auto md = sample_mode_from_string(mode);
    if (!md) schema_error("mode", {}, "unknown mode '" + mode + "'");
    m.mode = *md;
    m.num_layers = get_unsigned(doc, "num_layers", "");
    m.num_heads = get_unsigned(doc, "num_heads", "");
    m.seq_len = get_unsigned(doc, "seq_len", "");

    const json& spans = require(doc, "spans", "");
    if (!spans.is_array()) schema_error("spans", {}, "expected array");
    for (std::size_t i = 0; i < spans.size(); ++i) m.spans.push_back(parse_span(spans[i], i));

    m.query_span_ids = get_string_list(doc, "query_span_ids", true);
    m.key_span_ids = get_string_list(doc, "key_span_ids", true);
    m.target_image_index = get_unsigned(doc, "target_image_index", "");

    if (const json* v = optional_field(doc, "answer_correct")) {
        if (!v->is_boolean()) schema_error("answer_correct", {}, "expected boolean or null");
        m.answer_correct = v->get<bool>();
    }
    m.tags = get_string_list(doc, "tags", false);
    if (const json* v = optional_field(doc, "model_name")) {
        if (!v->is_string()) schema_error("model_name", {}, "expected string");
        m.model_name = v->get<std::string>();
    }
    if (const json* v = optional_field(doc, "shuffle_group")) {
        if (!v->is_string()) schema_error("shuffle_group", {}, "expected string");
        m.shuffle_group = v->get<std::string>();
    }
    if (const json* v = optional_field(doc, "shuffle_seed")) {
        if (!v->is_number_integer()) schema_error("shuffle_seed", {}, "expected integer");
        m.shuffle_seed = v->get<std::int64_t>();
    }
    if (const json* v = optional_field(doc, "embed_dim")) {
        const auto dim = as_unsigned(*v, "embed_dim", {});
        if (dim > UINT32_MAX) schema_error("embed_dim", {}, "out of range");
        m.embed_dim = static_cast<std::uint32_t>(dim);
    }

    check_manifest(m);
    return m;
}

SampleManifest read_manifest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_manifest(buf.str());
    } catch (const ManifestError& e) {
        throw ManifestError(e.kind(), e.field(), e.span_id(), path + ": " + e.what());
    }
}

std::string serialize_manifest(const SampleManifest& m) {
    ordered_json doc;
    doc["sample_id"] = m.sample_id;
    doc["task"] = m.task;
    doc["difficulty"] = to_string(m.difficulty);
    doc["mode"] = to_string(m.mode);
    doc["num_layers"] = m.num_layers;
    doc["num_heads"] = m.num_heads;
    doc["seq_len"] = m.seq_len;
    ordered_json spans = ordered_json::array();
    for (const auto& s : m.spans) {
        ordered_json js;
        js["id"] = s.id;
        js["role"] = to_string(s.role);
        js["start"] = s.start;
        js["end"] = s.end;
        if (s.image_index) js["image_index"] = *s.image_index;
        if (s.patch_grid) js["patch_grid"] = {{"rows", s.patch_grid->rows}, {"cols", s.patch_grid->cols}};
        spans.push_back(std::move(js));
    }
    doc["spans"] = std::move(spans);
    doc["query_span_ids"] = m.query_span_ids;
    doc["key_span_ids"] = m.key_span_ids;
    doc["target_image_index"] = m.target_image_index;
    doc["answer_correct"] = m.answer_correct ? ordered_json(*m.answer_correct) : ordered_json(nullptr);
    doc["tags"] = m.tags;
    if (m.model_name) doc["model_name"] = *m.model_name;
    if (m.shuffle_group) doc["shuffle_group"] = *m.shuffle_group;
    if (m.shuffle_seed) doc["shuffle_seed"] = *m.shuffle_seed;
    if (m.embed_dim) doc["embed_dim"] = *m.embed_dim;
    return doc.dump(2) + "\n";
}

AttentionDump::AttentionDump(DumpShape shape) : shape_(shape), values_(shape.total(), 0.0f) {}

AttentionDump::AttentionDump(DumpShape shape, std::vector<float> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.total())
        throw std::invalid_argument("AttentionDump: value count " + std::to_string(values_.size()) +
                                    " does not match shape (" + std::to_string(shape_.total()) + ")");
}

std::size_t ColumnMap::patch_column(std::size_t image, std::size_t grid_row, std::size_t grid_col) const {
    const ImageColumns& img = images.at(image);
    if (!img.patch_grid) throw UnsupportedError("image " + std::to_string(image) + " has no patch grid");
    if (grid_row >= img.patch_grid->rows || grid_col >= img.patch_grid->cols)
        throw std::out_of_range("patch position outside grid");
    return img.first + grid_row * img.patch_grid->cols + grid_col;
}

PatchLocation ColumnMap::locate(std::size_t column) const {
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageColumns& img = images[i];
        if (column >= img.first && column < img.end()) {
            PatchLocation loc;
            loc.image = i;
            loc.patch = column - img.first;
            if (img.patch_grid) {
                loc.row = loc.patch / img.patch_grid->cols;
                loc.col = loc.patch % img.patch_grid->cols;
            } else {
                loc.col = loc.patch;
            }
            return loc;
        }
    }
    throw std::out_of_range("column " + std::to_string(column) + " outside the column map");
}

ColumnMap build_column_map(const SampleManifest& manifest) {
    ColumnMap map;
    map.mode = manifest.mode;
    map.rows = manifest.query_rows();
    std::size_t next = 0;
    for (const auto& id : manifest.key_span_ids) {
        const Span* s = manifest.find_span(id);
        ImageColumns img;
        img.span_id = s->id;
        img.image_index = s->image_index.value_or(map.images.size());
        img.first = next;
        img.width = s->length();
        img.patch_grid = s->patch_grid;
        next += img.width;
        map.images.push_back(std::move(img));
    }
    map.cols = next;
    return map;
}

const char* to_string(Violation::Kind kind) noexcept {
    switch (kind) {
        case Violation::Kind::layer_count: return "layer count mismatch";
        case Violation::Kind::head_count: return "head count mismatch";
        case Violation::Kind::row_count: return "query row count mismatch";
        case Violation::Kind::col_count: return "key column count mismatch";
        case Violation::Kind::value_range: return "value out of [0,1]";
    }
    return "unknown";
}

ValidationReport validate_sample(const SampleManifest& manifest, const AttentionDump& dump) {
    ValidationReport report;
    const DumpShape& shape = dump.shape();
    auto mismatch = [&](Violation::Kind kind, std::size_t expected, std::size_t actual) {
        if (expected == actual) return;
        Violation v{kind, std::string(to_string(kind)) + ": manifest " + std::to_string(expected) + ", dump " +
                              std::to_string(actual)};
        report.violations.push_back(std::move(v));
    };
    mismatch(Violation::Kind::layer_count, manifest.num_layers, shape.layers);
    mismatch(Violation::Kind::head_count, manifest.num_heads, shape.heads);
    mismatch(Violation::Kind::row_count, manifest.query_rows(), shape.rows);
    mismatch(Violation::Kind::col_count, manifest.key_cols(), shape.cols);

    const auto values = dump.values();
    for (std::size_t l = 0; l < shape.layers; ++l)
        for (std::size_t h = 0; h < shape.heads; ++h)
            for (std::size_t r = 0; r < shape.rows; ++r)
                for (std::size_t c = 0; c < shape.cols; ++c) {
                    const float v = values[dump.offset(l, h, r, c)];
                    if (v >= 0.0f && v <= 1.0f) continue;  // also rejects NaN
                    std::ostringstream msg;
                    msg << "value out of [0,1]: " << v << " at (layer " << l << ", head " << h << ", row " << r
                        << ", col " << c << ")";
                    report.violations.push_back(
                        Violation{Violation::Kind::value_range, msg.str(), l, h, r, c, v});
                }
    return report;
}

}  // namespace attnacc
