#include "attnacc/error.hpp"
#include "attnacc/sample.hpp"
#include "attnacc/synthgen.hpp"

#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <set>

using namespace attnacc;
using nlohmann::json;

namespace {

json minimal_doc() {
    return json::parse(R"({
        "sample_id": "min-1",
        "task": "caption_matching",
        "difficulty": "easy",
        "mode": "text-image",
        "num_layers": 4,
        "num_heads": 2,
        "seq_len": 25,
        "spans": [
            {"id": "sys", "role": "system", "start": 0, "end": 6},
            {"id": "inst", "role": "instruction", "start": 6, "end": 10},
            {"id": "img0", "role": "image", "start": 10, "end": 14, "image_index": 0},
            {"id": "img1", "role": "image", "start": 14, "end": 17, "image_index": 1},
            {"id": "q", "role": "question", "start": 17, "end": 20},
            {"id": "out", "role": "output", "start": 20, "end": 25}
        ],
        "query_span_ids": ["q", "out"],
        "key_span_ids": ["img0", "img1"],
        "target_image_index": 1,
        "answer_correct": true,
        "tags": ["ocr"]
    })");
}

ManifestError parse_error(const json& doc) {
    try {
        parse_manifest(doc.dump());
    } catch (const ManifestError& e) {
        return e;
    }
    FAIL("expected ManifestError");
    throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("minimal manifest parses with k=2, R=8, C=7") {
    const SampleManifest m = parse_manifest(minimal_doc().dump());
    CHECK(m.num_images() == 2);
    CHECK(m.query_rows() == 8);
    CHECK(m.key_cols() == 7);
    CHECK(m.target_image_index == 1);
    CHECK(m.answer_correct == true);
    CHECK(m.has_tag("ocr"));
    CHECK_FALSE(m.shuffle_group);
}

TEST_CASE("unknown fields are ignored") {
    json doc = minimal_doc();
    doc["extractor_version"] = "9.9";
    doc["spans"][0]["note"] = 3;
    CHECK_NOTHROW(parse_manifest(doc.dump()));
}

TEST_CASE("null answer_correct stays null") {
    json doc = minimal_doc();
    doc["answer_correct"] = nullptr;
    CHECK_FALSE(parse_manifest(doc.dump()).answer_correct.has_value());
    doc.erase("answer_correct");
    CHECK_FALSE(parse_manifest(doc.dump()).answer_correct.has_value());
}

TEST_CASE("overlapping spans are a semantic error") {
    json doc = minimal_doc();
    doc["spans"] = json::parse(R"([
        {"id": "a", "role": "system", "start": 0, "end": 5},
        {"id": "img0", "role": "image", "start": 3, "end": 8, "image_index": 0},
        {"id": "q", "role": "question", "start": 8, "end": 9}])");
    doc["key_span_ids"] = {"img0"};
    doc["query_span_ids"] = {"q"};
    doc["target_image_index"] = 0;
    const auto e = parse_error(doc);
    CHECK(e.kind() == ManifestError::Kind::semantic);
    CHECK(std::string(e.what()).find("overlapping spans") != std::string::npos);
    CHECK(e.span_id() == "img0");
}

TEST_CASE("image_index sequence 0,2 is a gap") {
    json doc = minimal_doc();
    doc["spans"][3]["image_index"] = 2;
    const auto e = parse_error(doc);
    CHECK(e.kind() == ManifestError::Kind::semantic);
    CHECK(std::string(e.what()).find("image_index gap") != std::string::npos);
    CHECK(e.span_id() == "img1");
}

TEST_CASE("repeated image_index") {
    json doc = minimal_doc();
    doc["spans"][3]["image_index"] = 0;
    CHECK(std::string(parse_error(doc).what()).find("repeated") != std::string::npos);
}

TEST_CASE("dangling span id") {
    json doc = minimal_doc();
    doc["query_span_ids"] = {"q", "nope"};
    const auto e = parse_error(doc);
    CHECK(e.field() == "query_span_ids");
    CHECK(e.span_id() == "nope");
    CHECK(std::string(e.what()).find("dangling") != std::string::npos);
}

TEST_CASE("target out of range") {
    json doc = minimal_doc();
    doc["target_image_index"] = 2;
    const auto e = parse_error(doc);
    CHECK(e.field() == "target_image_index");
}

TEST_CASE("syntax and schema errors") {
    CHECK(parse_error(json()).kind() == ManifestError::Kind::schema);
    try {
        parse_manifest("{\"sample_id\": ");
        FAIL("no throw");
    } catch (const ManifestError& e) {
        CHECK(e.kind() == ManifestError::Kind::syntax);
    }

    json doc = minimal_doc();
    doc.erase("num_heads");
    auto e = parse_error(doc);
    CHECK(e.kind() == ManifestError::Kind::schema);
    CHECK(e.field() == "num_heads");

    doc = minimal_doc();
    doc["spans"][2]["start"] = "10";
    e = parse_error(doc);
    CHECK(e.kind() == ManifestError::Kind::schema);
    CHECK(e.field() == "spans[2].start");
    CHECK(e.span_id() == "img0");

    doc = minimal_doc();
    doc["spans"][2]["role"] = "picture";
    CHECK(parse_error(doc).field() == "spans[2].role");

    doc = minimal_doc();
    doc["num_layers"] = -3;
    CHECK(parse_error(doc).kind() == ManifestError::Kind::schema);
}

TEST_CASE("role constraints") {
    SUBCASE("key span must be an image") {
        json doc = minimal_doc();
        doc["key_span_ids"] = {"img0", "q"};
        CHECK(parse_error(doc).span_id() == "q");
    }
    SUBCASE("text-image query cannot be an image") {
        json doc = minimal_doc();
        doc["query_span_ids"] = {"img0"};
        CHECK(parse_error(doc).field() == "query_span_ids");
    }
    SUBCASE("image-image query must be anchor or output") {
        json doc = minimal_doc();
        doc["mode"] = "image-image";
        CHECK(parse_error(doc).span_id() == "q");
    }
    SUBCASE("image spans need image_index") {
        json doc = minimal_doc();
        doc["spans"][2].erase("image_index");
        CHECK(parse_error(doc).field() == "spans[2].image_index");
    }
    SUBCASE("patch grid must cover the span") {
        json doc = minimal_doc();
        doc["spans"][2]["patch_grid"] = {{"rows", 3}, {"cols", 2}};
        CHECK(parse_error(doc).field() == "spans[2].patch_grid");
        doc["spans"][2]["patch_grid"] = {{"rows", 2}, {"cols", 2}};
        CHECK_NOTHROW(parse_manifest(doc.dump()));
    }
    SUBCASE("span past seq_len") {
        json doc = minimal_doc();
        doc["seq_len"] = 24;
        CHECK(parse_error(doc).field() == "spans[5].end");
    }
    SUBCASE("key order follows image_index") {
        json doc = minimal_doc();
        doc["key_span_ids"] = {"img1", "img0"};
        CHECK(parse_error(doc).field() == "key_span_ids");
    }
    SUBCASE("every image is a key") {
        json doc = minimal_doc();
        doc["key_span_ids"] = {"img0"};
        doc["target_image_index"] = 0;
        CHECK(parse_error(doc).field() == "key_span_ids");
    }
}

TEST_CASE("parse(serialize(m)) == m over generated manifests") {
    Xorshift64Star rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        GenSpec spec;
        spec.seed = rng.next();
        spec.layers = 1 + rng.next_below(6);
        spec.heads = 1 + rng.next_below(3);
        const std::size_t k = 1 + rng.next_below(5);
        for (std::size_t i = 0; i < k; ++i) spec.image_widths.push_back(1 + rng.next_below(6));
        spec.query_rows = 1 + rng.next_below(5);
        spec.target = rng.next_below(k);
        spec.mode = rng.next_below(2) ? SampleMode::image_image : SampleMode::text_image;
        if (rng.next_below(2)) {
            for (std::size_t w : spec.image_widths)
                spec.patch_grids.push_back(rng.next_below(2) ? std::optional<PatchGrid>(PatchGrid{1, static_cast<std::uint32_t>(w)})
                                                             : std::nullopt);
        }
        const std::uint64_t label = rng.next_below(3);
        spec.answer_correct = label == 2 ? std::nullopt : std::optional<bool>(label == 1);
        spec.tags = {"t" + std::to_string(rng.next_below(4))};
        if (rng.next_below(2)) spec.model_name = "model-" + std::to_string(trial);

        auto manifests = rng.next_below(2) ? std::vector<GeneratedSample>{generate_sample(spec)}
                                           : generate_shuffle_group(spec, 2);
        for (auto& g : manifests) {
            SampleManifest m = g.manifest;
            if (rng.next_below(2)) m.embed_dim = 64;
            const SampleManifest back = parse_manifest(serialize_manifest(m));
            CHECK(back == m);
        }
    }
}

TEST_CASE("build_column_map prefix sums") {
    const SampleManifest m = parse_manifest(minimal_doc().dump());
    const ColumnMap cmap = build_column_map(m);
    REQUIRE(cmap.num_images() == 2);
    CHECK(cmap.images[0].first == 0);
    CHECK(cmap.images[0].end() == 4);
    CHECK(cmap.images[1].first == 4);
    CHECK(cmap.images[1].end() == 7);
    CHECK(cmap.cols == 7);
    CHECK(cmap.rows == 8);

    GenSpec spec;
    spec.image_widths = {5, 1, 2};
    const ColumnMap three = build_column_map(generate_sample(spec).manifest);
    CHECK(three.images[0].first == 0);
    CHECK(three.images[0].end() == 5);
    CHECK(three.images[1].first == 5);
    CHECK(three.images[1].end() == 6);
    CHECK(three.images[2].first == 6);
    CHECK(three.images[2].end() == 8);
}

TEST_CASE("patch (1,0) of a 2x3 grid is column 3") {
    GenSpec spec;
    spec.image_widths = {6};
    spec.patch_grids = {PatchGrid{2, 3}};
    const ColumnMap cmap = build_column_map(generate_sample(spec).manifest);
    CHECK(cmap.patch_column(0, 1, 0) == 3);
    const PatchLocation loc = cmap.locate(3);
    CHECK(loc.image == 0);
    CHECK(loc.row == 1);
    CHECK(loc.col == 0);
    CHECK_THROWS_AS(cmap.patch_column(0, 2, 0), std::out_of_range);
}

TEST_CASE("column map is a bijection onto (image, patch offset)") {
    GenSpec spec;
    spec.image_widths = {4, 1, 6, 3};
    spec.patch_grids = {PatchGrid{2, 2}, std::nullopt, PatchGrid{3, 2}, PatchGrid{1, 3}};
    const ColumnMap cmap = build_column_map(generate_sample(spec).manifest);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t c = 0; c < cmap.cols; ++c) {
        const PatchLocation loc = cmap.locate(c);
        CHECK(seen.insert({loc.image, loc.patch}).second);
        CHECK(cmap.images[loc.image].first + loc.patch == c);
        if (cmap.images[loc.image].patch_grid) CHECK(cmap.patch_column(loc.image, loc.row, loc.col) == c);
    }
    CHECK(seen.size() == cmap.cols);
    CHECK_THROWS_AS(cmap.locate(cmap.cols), std::out_of_range);
}

TEST_CASE("validate_sample reports") {
    const SampleManifest m = parse_manifest(minimal_doc().dump());
    AttentionDump dump(DumpShape{4, 2, 8, 7});
    for (float& v : dump.values()) v = 1.0f / 7.0f;
    CHECK(validate_sample(m, dump).ok());

    SUBCASE("value out of range") {
        dump.at(0, 1, 2, 3) = 1.25f;
        const auto report = validate_sample(m, dump);
        REQUIRE(report.violations.size() == 1);
        const Violation& v = report.violations.front();
        CHECK(v.kind == Violation::Kind::value_range);
        CHECK(v.layer == 0);
        CHECK(v.head == 1);
        CHECK(v.row == 2);
        CHECK(v.col == 3);
        CHECK(v.message.find("value out of [0,1]") != std::string::npos);
    }
    SUBCASE("NaN is out of range") {
        dump.at(3, 0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
        CHECK(validate_sample(m, dump).violations.size() == 1);
    }
    SUBCASE("column count mismatch") {
        const AttentionDump narrow(DumpShape{4, 2, 8, 6});
        const auto report = validate_sample(m, narrow);
        REQUIRE(report.violations.size() == 1);
        CHECK(report.violations[0].kind == Violation::Kind::col_count);
        CHECK(report.violations[0].message.find("key column count mismatch") != std::string::npos);
    }
    SUBCASE("every mismatch is listed") {
        const AttentionDump wrong(DumpShape{3, 1, 7, 6});
        CHECK(validate_sample(m, wrong).violations.size() == 4);
    }
}

TEST_CASE("every generated sample validates") {
    Xorshift64Star rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        GenSpec spec;
        spec.seed = rng.next();
        spec.layers = 1 + rng.next_below(5);
        spec.heads = 1 + rng.next_below(3);
        const std::size_t k = 1 + rng.next_below(4);
        for (std::size_t i = 0; i < k; ++i) spec.image_widths.push_back(1 + rng.next_below(5));
        spec.query_rows = 1 + rng.next_below(4);
        spec.target = rng.next_below(k);
        spec.gamma = static_cast<double>(rng.next_below(11)) / 10.0;
        spec.onset_layer = rng.next_below(spec.layers + 1);
        spec.mode = rng.next_below(2) ? SampleMode::image_image : SampleMode::text_image;
        const GeneratedSample s = generate_sample(spec);
        CHECK(validate_sample(s.manifest, s.dump).ok());
    }
}
