#include "fixtures.hpp"

#include "attnacc/metrics.hpp"
#include "attnacc/oracle.hpp"

#include <doctest.h>

using namespace attnacc;
using namespace attnacc::testing;

namespace {

oracle::Table oracle_table(const SigmaTable& s) {
    oracle::Table t(s.layers());
    for (std::size_t l = 0; l < s.layers(); ++l) t[l].assign(s.row(l).begin(), s.row(l).end());
    return t;
}

}  // namespace

TEST_CASE("layer focus and ties") {
    CHECK(layer_focused_image(sigma_from({{0.2, 0.25}}), 0) == 1);
    CHECK(layer_focused_image(sigma_from({{0.25, 0.25}}), 0) == 0);
    CHECK(layer_focused_image(sigma_from({{0.1, 0.3, 0.3}}), 0) == 1);
}

TEST_CASE("LND counts back from the last layer") {
    const SigmaTable s = sigma_with_focus({0, 1, 2}, 3);
    CHECK(lnd(s, 1) == 2);
    CHECK(lnd(s, 2) == 1);
    CHECK(lnd(s, 3) == 0);
}

TEST_CASE("LND unanimous reading") {
    CHECK(lnd(sigma_with_focus({2, 2, 2}, 3), 3, LndMode::unanimous_else_last) == 2);
    CHECK(lnd(sigma_with_focus({0, 1, 2}, 3), 2, LndMode::unanimous_else_last) == 2);
    CHECK(lnd(sigma_with_focus({1, 0, 0}, 3), 3, LndMode::unanimous_else_last) == 0);
}

TEST_CASE("M-LND averages then picks") {
    // image 0: 0.2, 0.4; image 1: 0.35, 0.2
    const SigmaTable s = sigma_from({{0.9, 0.0}, {0.2, 0.35}, {0.4, 0.2}});
    CHECK(m_lnd(s, 2) == 0);
    CHECK(m_lnd(sigma_from({{0.2, 0.4}, {0.4, 0.2}}), 2) == 0);
    CHECK(m_lnd(sigma_from({{0.1, 0.2}, {0.3, 0.3}}), 1) == 0);
}

TEST_CASE("MC-LND majority and ties") {
    CHECK(mc_lnd(sigma_with_focus({2, 1, 2, 0, 2}, 3), 5) == 2);
    CHECK(mc_lnd(sigma_with_focus({0, 1, 1, 2, 2}, 3), 4) == 1);
    CHECK(mc_lnd(sigma_with_focus({2, 2, 1, 1}, 3), 4) == 1);
    const SigmaTable s = sigma_with_focus({0, 2, 1}, 3);
    CHECK(mc_lnd(s, 1) == layer_focused_image(s, 2));
}

TEST_CASE("N = 1 collapses the three metrics") {
    Xorshift64Star rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        SigmaTable s(5, 4);
        for (std::size_t l = 0; l < 5; ++l)
            for (std::size_t i = 0; i < 4; ++i) s.at(l, i) = rng.next_unit();
        const std::size_t last = layer_focused_image(s, 4);
        CHECK(lnd(s, 1) == last);
        CHECK(m_lnd(s, 1) == last);
        CHECK(mc_lnd(s, 1) == last);
        CHECK(lnd(s, 1, LndMode::unanimous_else_last) == last);
    }
}

TEST_CASE("N outside 1..L is rejected") {
    const SigmaTable s = sigma_with_focus({0, 1}, 2);
    CHECK_THROWS_AS(focused_image(s, MetricConfig{MetricKind::lnd, 0}), std::out_of_range);
    CHECK_THROWS_AS(focused_image(s, MetricConfig{MetricKind::m_lnd, 3}), std::out_of_range);
    CHECK(focused_image(s, MetricConfig{MetricKind::mc_lnd, 2}) == 0);
}

TEST_CASE("metric names") {
    CHECK(std::string(to_string(MetricKind::mc_lnd)) == "MC-LND");
    CHECK(metric_from_string("M-LND") == MetricKind::m_lnd);
    CHECK_FALSE(metric_from_string("mlnd").has_value());
    CHECK(lnd_mode_from_string("unanimous-else-last") == LndMode::unanimous_else_last);
    CHECK(describe(MetricConfig{MetricKind::m_lnd, 2}) == "M-LND@N=2");
    const auto grid = full_grid(2);
    REQUIRE(grid.size() == 6);
    CHECK(grid[0] == MetricConfig{MetricKind::lnd, 1});
    CHECK(grid[5] == MetricConfig{MetricKind::mc_lnd, 2});
}

TEST_CASE("verdicts") {
    const SigmaTable s = sigma_from({{0.2, 0.35}, {0.4, 0.2}});
    const std::vector<MetricConfig> cell{{MetricKind::m_lnd, 2}};
    auto v = model_focused_verdicts(s, 0, cell, "x", true);
    REQUIRE(v.size() == 1);
    CHECK(v[0].predicted_image == 0);
    CHECK(v[0].attention_correct);
    CHECK(v[0].sample_id == "x");
    CHECK(v[0].answer_correct == true);
    v = model_focused_verdicts(s, 1, cell);
    CHECK_FALSE(v[0].attention_correct);
    CHECK_FALSE(v[0].answer_correct.has_value());
}

TEST_CASE("FX-1 verdicts match the oracle") {
    const GeneratedSample fx1 = generate_sample(fx1_spec());
    const SigmaTable s = sample_factors(fx1.dump, build_column_map(fx1.manifest));
    const oracle::Table table = oracle::sigma(fx1.dump, fx1.manifest);

    CHECK(layer_focused_image(s, 3) == oracle::focus(table, "LND", 1));
    CHECK(m_lnd(s, 2) == oracle::focus(table, "M-LND", 2));

    const auto verdicts = model_focused_verdicts(s, fx1.manifest.target_image_index, full_grid(4), "fx1");
    REQUIRE(verdicts.size() == 12);
    for (const auto& v : verdicts) {
        const std::size_t expected = oracle::focus(table, to_string(v.config.metric), v.config.n);
        CHECK(v.predicted_image == expected);
        CHECK(v.attention_correct == (expected == fx1.manifest.target_image_index));
    }
    for (std::size_t n = 1; n <= 4; ++n)
        CHECK(lnd(s, n, LndMode::unanimous_else_last) == oracle::focus(table, "LND", n, true));
}

TEST_CASE("predictions ignore positive scaling") {
    Xorshift64Star rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        SigmaTable s(4, 3);
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t i = 0; i < 3; ++i) s.at(l, i) = rng.next_unit();
        SigmaTable scaled = s;
        const double factor = 0.5 + 8.0 * rng.next_unit();
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t i = 0; i < 3; ++i) scaled.at(l, i) *= factor;
        for (const auto& c : full_grid(4)) CHECK(focused_image(s, c) == focused_image(scaled, c));
    }
}

TEST_CASE("relabeling images relabels predictions") {
    Xorshift64Star rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 4;
        SigmaTable s(5, k);
        for (std::size_t l = 0; l < 5; ++l)
            for (std::size_t i = 0; i < k; ++i) s.at(l, i) = rng.next_unit();
        const auto perm = random_permutation(rng, k);  // new position p shows old image perm[p]
        SigmaTable p(5, k);
        for (std::size_t l = 0; l < 5; ++l)
            for (std::size_t q = 0; q < k; ++q) p.at(l, q) = s.at(l, perm[q]);
        const std::size_t target = rng.next_below(k);
        std::size_t new_target = 0;
        for (std::size_t q = 0; q < k; ++q)
            if (perm[q] == target) new_target = q;
        const auto a = model_focused_verdicts(s, target, full_grid(5));
        const auto b = model_focused_verdicts(p, new_target, full_grid(5));
        const oracle::Table table = oracle_table(s);
        for (std::size_t c = 0; c < a.size(); ++c) {
            // Ties go to the lowest label, which relabeling moves.
            if (oracle::tied(table, to_string(a[c].config.metric), a[c].config.n)) continue;
            CHECK(perm[b[c].predicted_image] == a[c].predicted_image);
            CHECK(a[c].attention_correct == b[c].attention_correct);
        }
    }
}

TEST_CASE("tied votes follow the labels") {
    // Focus [0, 1] over the last two layers: a 1-1 vote.
    const SigmaTable s = sigma_with_focus({0, 1}, 2);
    CHECK(oracle::tied(oracle_table(s), "MC-LND", 2));
    CHECK(mc_lnd(s, 2) == 0);
    const SigmaTable swapped = sigma_with_focus({1, 0}, 2);
    CHECK(mc_lnd(swapped, 2) == 0);
    CHECK_FALSE(oracle::tied(oracle_table(s), "MC-LND", 1));
    CHECK(oracle::tied(oracle_table(s), "M-LND", 2));
}
