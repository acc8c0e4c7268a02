#include "attnacc/synthgen.hpp"

#include "attnacc/dump_io.hpp"
#include "attnacc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>

namespace attnacc {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
// Prefix span lengths of the synthetic prompt layout.
constexpr std::size_t kSystemTokens = 3;
constexpr std::size_t kInstructionTokens = 2;

std::string padded(std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
    return buf;
}

SampleManifest build_manifest(const GenSpec& spec, const std::vector<std::size_t>& order) {
    const std::size_t k = spec.image_widths.size();
    SampleManifest m;
    m.sample_id = spec.sample_id;
    m.task = spec.task;
    m.difficulty = spec.difficulty;
    m.mode = spec.mode;
    m.num_layers = spec.layers;
    m.num_heads = spec.heads;
    m.tags = spec.tags;
    m.model_name = spec.model_name;
    m.answer_correct = spec.answer_correct;

    std::size_t pos = 0;
    auto add = [&](std::string id, SpanRole role, std::size_t length, std::optional<std::size_t> image_index = {},
                   std::optional<PatchGrid> grid = {}) {
        m.spans.push_back(Span{std::move(id), role, pos, pos + length, image_index, grid});
        pos += length;
    };
    add("system", SpanRole::system, kSystemTokens);
    add("instruction", SpanRole::instruction, kInstructionTokens);
    for (std::size_t p = 0; p < k; ++p) {
        const std::size_t original = order[p];
        std::optional<PatchGrid> grid;
        if (!spec.patch_grids.empty()) grid = spec.patch_grids[original];
        const std::string id = "image_" + std::to_string(p);
        add(id, SpanRole::image, spec.image_widths[original], p, grid);
        m.key_span_ids.push_back(id);
        if (original == spec.target) m.target_image_index = p;
    }
    if (spec.mode == SampleMode::text_image) {
        const std::size_t output_rows = spec.query_rows / 2;
        add("question", SpanRole::question, spec.query_rows - output_rows);
        m.query_span_ids.push_back("question");
        if (output_rows > 0) {
            add("output", SpanRole::output, output_rows);
            m.query_span_ids.push_back("output");
        }
    } else {
        add("anchor", SpanRole::anchor_image, spec.query_rows, k);
        m.query_span_ids.push_back("anchor");
    }
    m.seq_len = pos;
    return m;
}

// Generates the dump in canonical image order, then lays column blocks out
// in `order`. Noise is drawn per row over the canonical columns, so a
// reordered run sees the same values block for block.
AttentionDump build_dump(const GenSpec& spec, const std::vector<std::size_t>& order) {
    const std::size_t k = spec.image_widths.size();
    std::vector<std::size_t> canonical_first(k, 0);
    for (std::size_t i = 1; i < k; ++i) canonical_first[i] = canonical_first[i - 1] + spec.image_widths[i - 1];
    const std::size_t cols = std::accumulate(spec.image_widths.begin(), spec.image_widths.end(), std::size_t{0});

    std::vector<std::size_t> placed_first(k, 0);  // by original image
    for (std::size_t p = 0, next = 0; p < k; ++p) {
        placed_first[order[p]] = next;
        next += spec.image_widths[order[p]];
    }

    const DumpShape shape{static_cast<std::uint32_t>(spec.layers), static_cast<std::uint32_t>(spec.heads),
                          static_cast<std::uint32_t>(spec.query_rows), static_cast<std::uint32_t>(cols)};
    AttentionDump dump(shape);
    Xorshift64Star rng(spec.seed);
    std::vector<double> row(cols);
    const double target_share = spec.gamma / static_cast<double>(spec.image_widths[spec.target]);
    const std::size_t target_first = canonical_first[spec.target];
    const std::size_t target_end = target_first + spec.image_widths[spec.target];

    for (std::size_t l = 0; l < spec.layers; ++l) {
        const bool converged = l >= spec.onset_layer;
        for (std::size_t h = 0; h < spec.heads; ++h)
            for (std::size_t r = 0; r < spec.query_rows; ++r) {
                double total = 0.0;
                for (double& v : row) {
                    v = rng.next_unit();
                    total += v;
                }
                for (double& v : row) v /= total;
                if (converged) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        const bool in_target = c >= target_first && c < target_end;
                        row[c] = (in_target ? target_share : 0.0) + (1.0 - spec.gamma) * row[c];
                    }
                }
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t n = 0; n < spec.image_widths[i]; ++n)
                        dump.at(l, h, r, placed_first[i] + n) = static_cast<float>(row[canonical_first[i] + n]);
            }
    }
    return dump;
}

std::vector<std::size_t> identity(std::size_t k) {
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    std::uint64_t z = x + kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return splitmix64(base ^ splitmix64(index));
}

Xorshift64Star::Xorshift64Star(std::uint64_t seed) noexcept : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = kGolden;
}

std::uint64_t Xorshift64Star::next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
}

double Xorshift64Star::next_unit() noexcept {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t Xorshift64Star::next_below(std::uint64_t bound) noexcept { return next() % bound; }

void GenSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error("invalid generator spec: " + what); };
    if (layers == 0) fail("num_layers must be positive");
    if (heads == 0) fail("num_heads must be positive");
    if (query_rows == 0) fail("query_rows must be positive");
    if (image_widths.empty()) fail("image_widths must list at least one image");
    for (std::size_t w : image_widths)
        if (w == 0) fail("image widths must be >= 1");
    if (target >= image_widths.size()) fail("target_image_index out of range");
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must be in [0, 1]");
    if (onset_layer > layers) fail("onset_layer must be <= num_layers");
    if (!patch_grids.empty()) {
        if (patch_grids.size() != image_widths.size()) fail("patch_grids must have one entry per image");
        for (std::size_t i = 0; i < patch_grids.size(); ++i)
            if (patch_grids[i] && patch_grids[i]->size() != image_widths[i])
                fail("patch grid of image " + std::to_string(i) + " does not cover its width");
    }
    if (shuffles && *shuffles == 0) fail("shuffles must be >= 1");
    if (sample_id.empty()) fail("sample_id must be non-empty");
}

GenSpec parse_genspec(std::string_view json_text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw Error(std::string("generator spec syntax error: ") + e.what());
    }
    if (!doc.is_object()) throw Error("generator spec must be a JSON object");

    GenSpec spec;
    try {
        spec.seed = doc.at("seed").get<std::uint64_t>();
        spec.layers = doc.at("num_layers").get<std::size_t>();
        spec.heads = doc.at("num_heads").get<std::size_t>();
        spec.image_widths = doc.at("image_widths").get<std::vector<std::size_t>>();
        spec.query_rows = doc.at("query_rows").get<std::size_t>();
        spec.target = doc.value("target_image_index", std::size_t{0});
        spec.gamma = doc.value("gamma", 0.0);
        spec.onset_layer = doc.value("onset_layer", std::size_t{0});
        if (auto it = doc.find("mode"); it != doc.end()) {
            auto mode = sample_mode_from_string(it->get<std::string>());
            if (!mode) throw Error("unknown mode '" + it->get<std::string>() + "'");
            spec.mode = *mode;
        }
        if (auto it = doc.find("patch_grids"); it != doc.end() && !it->is_null()) {
            for (const json& g : *it) {
                if (g.is_null()) {
                    spec.patch_grids.emplace_back();
                } else {
                    spec.patch_grids.push_back(PatchGrid{g.at("rows").get<std::uint32_t>(), g.at("cols").get<std::uint32_t>()});
                }
            }
        }
        if (auto it = doc.find("shuffles"); it != doc.end() && !it->is_null()) spec.shuffles = it->get<std::size_t>();
        if (auto it = doc.find("answer_correct"); it != doc.end())
            spec.answer_correct = it->is_null() ? std::nullopt : std::optional<bool>(it->get<bool>());
        spec.sample_id = doc.value("sample_id", spec.sample_id);
        spec.task = doc.value("task", spec.task);
        if (auto it = doc.find("difficulty"); it != doc.end()) {
            auto d = difficulty_from_string(it->get<std::string>());
            if (!d) throw Error("unknown difficulty '" + it->get<std::string>() + "'");
            spec.difficulty = *d;
        }
        spec.tags = doc.value("tags", std::vector<std::string>{});
        if (auto it = doc.find("model_name"); it != doc.end() && !it->is_null()) spec.model_name = it->get<std::string>();
    } catch (const json::exception& e) {
        throw Error(std::string("generator spec schema error: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string serialize_genspec(const GenSpec& spec) {
    nlohmann::ordered_json doc;
    doc["seed"] = spec.seed;
    doc["num_layers"] = spec.layers;
    doc["num_heads"] = spec.heads;
    doc["image_widths"] = spec.image_widths;
    doc["query_rows"] = spec.query_rows;
    doc["target_image_index"] = spec.target;
    doc["gamma"] = spec.gamma;
    doc["onset_layer"] = spec.onset_layer;
    doc["mode"] = to_string(spec.mode);
    if (!spec.patch_grids.empty()) {
        nlohmann::ordered_json grids = nlohmann::ordered_json::array();
        for (const auto& g : spec.patch_grids)
            grids.push_back(g ? nlohmann::ordered_json{{"rows", g->rows}, {"cols", g->cols}} : nlohmann::ordered_json());
        doc["patch_grids"] = grids;
    }
    if (spec.shuffles) doc["shuffles"] = *spec.shuffles;
    doc["answer_correct"] = spec.answer_correct ? nlohmann::ordered_json(*spec.answer_correct) : nlohmann::ordered_json();
    doc["sample_id"] = spec.sample_id;
    doc["task"] = spec.task;
    doc["difficulty"] = to_string(spec.difficulty);
    doc["tags"] = spec.tags;
    if (spec.model_name) doc["model_name"] = *spec.model_name;
    return doc.dump(2) + "\n";
}

GeneratedSample generate_sample(const GenSpec& spec) {
    spec.validate();
    const auto order = identity(spec.image_widths.size());
    return GeneratedSample{build_manifest(spec, order), build_dump(spec, order)};
}

std::vector<std::size_t> shuffle_permutation(std::uint64_t seed, std::size_t shuffle_seed, std::size_t k) {
    std::vector<std::size_t> order = identity(k);
    Xorshift64Star rng(derive_seed(splitmix64(seed), shuffle_seed));
    for (std::size_t i = k; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    return order;
}

std::vector<GeneratedSample> generate_shuffle_group(const GenSpec& spec, std::size_t shuffles) {
    spec.validate();
    if (shuffles == 0) throw Error("invalid generator spec: shuffles must be >= 1");
    std::vector<GeneratedSample> group;
    group.reserve(shuffles);
    for (std::size_t s = 0; s < shuffles; ++s) {
        const auto order = shuffle_permutation(spec.seed, s, spec.image_widths.size());
        GeneratedSample sample{build_manifest(spec, order), build_dump(spec, order)};
        sample.manifest.sample_id = spec.sample_id + "-s" + std::to_string(s);
        sample.manifest.shuffle_group = spec.sample_id;
        sample.manifest.shuffle_seed = static_cast<std::int64_t>(s);
        group.push_back(std::move(sample));
    }
    return group;
}

std::vector<GeneratedSample> generate_dataset(const GenSpec& spec, std::size_t count) {
    std::vector<GeneratedSample> out;
    const int width = static_cast<int>(std::max<std::size_t>(4, std::to_string(count).size()));
    for (std::size_t j = 0; j < count; ++j) {
        GenSpec member = spec;
        member.seed = derive_seed(spec.seed, j);
        member.sample_id = spec.sample_id + "-" + padded(j, width);
        if (spec.shuffles) {
            auto group = generate_shuffle_group(member, *spec.shuffles);
            for (auto& s : group) out.push_back(std::move(s));
        } else {
            out.push_back(generate_sample(member));
        }
    }
    return out;
}

void write_sample(const GeneratedSample& sample, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base = fs::path(dir) / sample.manifest.sample_id;
    write_dump_file(sample.dump, base.string() + ".attn");
    std::ofstream out(base.string() + ".manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write manifest for '" + sample.manifest.sample_id + "'");
    out << serialize_manifest(sample.manifest);
    if (!out) throw Error("failed writing manifest for '" + sample.manifest.sample_id + "'");
}

}  // namespace attnacc
