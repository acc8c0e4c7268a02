#include "fixtures.hpp"

#include "attnacc/oracle.hpp"
#include "attnacc/render.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace attnacc;
using namespace attnacc::testing;
using nlohmann::json;

namespace {

std::string pgm_of(const LayerTable& t, Normalization n) {
    std::ostringstream out(std::ios::binary);
    write_pgm(t, n, out);
    return out.str();
}

std::vector<int> pixels(const std::string& pgm, std::size_t count) {
    std::vector<int> px;
    for (std::size_t i = pgm.size() - count; i < pgm.size(); ++i) px.push_back(static_cast<unsigned char>(pgm[i]));
    return px;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("global min-max PGM") {
    const std::string pgm = pgm_of(sigma_from({{0.1, 0.3}, {0.2, 0.4}}), Normalization::global_minmax);
    CHECK(pgm.rfind("P5\n2 2\n255\n", 0) == 0);
    CHECK(pgm.size() == 11 + 4);
    CHECK(pixels(pgm, 4) == std::vector<int>{0, 170, 85, 255});
}

TEST_CASE("constant table renders mid-gray") {
    const std::string pgm = pgm_of(sigma_from({{0.25, 0.25, 0.25}, {0.25, 0.25, 0.25}}), Normalization::global_minmax);
    CHECK(pixels(pgm, 6) == std::vector<int>(6, 128));
    const LayerTable n = normalize(sigma_from({{0.25}}), Normalization::per_layer_minmax);
    CHECK(n.at(0, 0) == 0.5);
}

TEST_CASE("per-layer normalization") {
    const LayerTable n = normalize(sigma_from({{0.1, 0.3}, {0.2, 0.4}, {0.5, 0.5}}), Normalization::per_layer_minmax);
    CHECK(n.at(0, 0) == 0.0);
    CHECK(n.at(0, 1) == 1.0);
    CHECK(n.at(1, 0) == 0.0);
    CHECK(n.at(1, 1) == 1.0);
    CHECK(n.at(2, 0) == 0.5);
    CHECK(normalization_from_string("per-layer") == Normalization::per_layer_minmax);
    CHECK(normalization_from_string("global-minmax") == Normalization::global_minmax);
    CHECK_FALSE(normalization_from_string("log").has_value());
}

TEST_CASE("CSV round trip is exact") {
    const GeneratedSample g = generate_sample(fx1_spec());
    const SigmaTable s = sample_factors(g.dump, build_column_map(g.manifest));
    std::stringstream io;
    write_table_csv(s, "image", io);
    const std::string text = io.str();
    CHECK(text.rfind("layer,image_0,image_1,image_2\n", 0) == 0);
    const LayerTable back = read_table_csv(io);
    CHECK(back == static_cast<const LayerTable&>(s));
}

TEST_CASE("shortest decimal formatting") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(0.25) == "0.25");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}

TEST_CASE("heatmap files") {
    const std::string dir = scratch_dir("heatmap");
    const SigmaTable s = sigma_from({{0.1, 0.3}, {0.2, 0.4}});
    const auto written = render_sigma_heatmap(s, HeatmapSpec{Normalization::global_minmax, HeatmapOutput::both}, dir + "/sigma");
    REQUIRE(written.size() == 2);
    CHECK(slurp(dir + "/sigma.csv") == "layer,image_0,image_1\n0,0.1,0.3\n1,0.2,0.4\n");
    CHECK(slurp(dir + "/sigma.pgm") == pgm_of(s, Normalization::global_minmax));
}

TEST_CASE("patch map with highlights") {
    RhoTable rho{3, PatchGrid{2, 3}, LayerTable(2, 6)};
    const double row1[] = {0.05, 0.4, 0.1, 0.3, 0.4, 0.2};
    for (std::size_t n = 0; n < 6; ++n) rho.values.at(1, n) = row1[n];

    const json one = json::parse(patch_highlights_json(rho, 1, 10));
    REQUIRE(one["patches"].size() == 1);
    CHECK(one["patches"][0]["row"] == 0);
    CHECK(one["patches"][0]["col"] == 1);
    CHECK(one["image"] == 3);

    const json half = json::parse(patch_highlights_json(rho, 1, 50));
    REQUIRE(half["patches"].size() == 3);
    CHECK(half["patches"][0]["col"] == 1);
    CHECK(half["patches"][1]["row"] == 1);
    CHECK(half["patches"][1]["col"] == 1);
    CHECK(half["patches"][2]["rho"] == 0.3);

    const std::string dir = scratch_dir("patchmap");
    render_patch_map(rho, 1, 50, dir + "/p");
    CHECK(slurp(dir + "/p.csv") == "0.05,0.4,0.1\n0.3,0.4,0.2\n");
    CHECK(slurp(dir + "/p.top.json") == patch_highlights_json(rho, 1, 50));
    CHECK_THROWS_AS(render_patch_map(rho, 2, 10, dir + "/q"), std::out_of_range);
}

TEST_CASE("highlights agree with the oracle on FX-1") {
    const GeneratedSample g = generate_sample(fx1_spec());
    const RhoTable rho = patch_attention_factors(g.dump, build_column_map(g.manifest), 0);
    for (std::size_t l = 0; l < rho.layers(); ++l) {
        const json j = json::parse(patch_highlights_json(rho, l, 50));
        const auto row = rho.values.row(l);
        const auto expected = oracle::top_patches(std::vector<double>(row.begin(), row.end()), 50);
        REQUIRE(j["patches"].size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(j["patches"][i]["row"] == expected[i] / 2);
            CHECK(j["patches"][i]["col"] == expected[i] % 2);
        }
    }
}

TEST_CASE("report JSON keeps undefined explicit") {
    std::vector<AnalyzedSample> s{analyzed("a", sigma_with_focus({1}, 2), 1, false)};
    const json r = json::parse(to_json(evaluate(s, full_grid(1))));
    const json& cell = r["overall"]["cells"][0];
    CHECK(cell["attention_accuracy"]["value"].is_null());
    CHECK(cell["attention_accuracy"]["total"] == 0);
    CHECK(r["overall"]["best"].is_null());
    CHECK(to_text(evaluate(s, full_grid(1))).find("undefined") != std::string::npos);
}

TEST_CASE("report JSON is byte-stable") {
    std::vector<AnalyzedSample> s;
    s.push_back(analyzed("a", sigma_with_focus({1, 0}, 2), 1, true));
    s.push_back(analyzed("b", sigma_with_focus({0, 0}, 2), 1, false));
    const std::string a = to_json(evaluate(s, full_grid(2)));
    CHECK(a == to_json(evaluate(s, full_grid(2))));
    CHECK(a.back() == '\n');
    const json q = json::parse(to_json(quadrant_report(s, MetricConfig{MetricKind::lnd, 2})));
    CHECK(q["quadrants"]["answer_correct_attention_correct"] == 1);
}
