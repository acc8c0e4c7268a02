#pragma once

#include "attnacc/factors.hpp"
#include "attnacc/harness.hpp"
#include "attnacc/sample.hpp"
#include "attnacc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace attnacc::testing {

/// Two key images of widths 2 and 1 (image 0 has a 1x2 patch grid), one
/// question span of two rows, L = H = 1. Rows: [0.1, 0.3, 0.4], [0.2, 0.2, 0.1].
inline SampleManifest hand_manifest(std::size_t heads = 1) {
    SampleManifest m;
    m.sample_id = "hand";
    m.task = "fixture";
    m.num_layers = 1;
    m.num_heads = heads;
    m.seq_len = 8;
    m.spans = {
        Span{"sys", SpanRole::system, 0, 2, {}, {}},
        Span{"img0", SpanRole::image, 2, 4, 0, PatchGrid{1, 2}},
        Span{"img1", SpanRole::image, 4, 5, 1, {}},
        Span{"q", SpanRole::question, 5, 7, {}, {}},
    };
    m.query_span_ids = {"q"};
    m.key_span_ids = {"img0", "img1"};
    m.target_image_index = 1;
    m.answer_correct = true;
    return m;
}

inline AttentionDump hand_dump() {
    return AttentionDump(DumpShape{1, 1, 2, 3}, {0.1f, 0.3f, 0.4f, 0.2f, 0.2f, 0.1f});
}

/// Same values plus a second head of zeros.
inline AttentionDump hand_dump_two_heads() {
    return AttentionDump(DumpShape{1, 2, 2, 3}, {0.1f, 0.3f, 0.4f, 0.2f, 0.2f, 0.1f, 0, 0, 0, 0, 0, 0});
}

/// FX-1: seed 42, L=4, H=2, widths 4/3/5, R=6, pure normalized noise.
/// Image 2 carries a 1x5 patch grid so rho can be taken on it.
inline GenSpec fx1_spec() {
    GenSpec spec;
    spec.seed = 42;
    spec.layers = 4;
    spec.heads = 2;
    spec.image_widths = {4, 3, 5};
    spec.query_rows = 6;
    spec.target = 0;
    spec.gamma = 0.0;
    spec.onset_layer = 4;
    spec.patch_grids = {PatchGrid{2, 2}, std::nullopt, PatchGrid{1, 5}};
    spec.sample_id = "fx1";
    return spec;
}

/// FX-2: seed 7, image-image, 4 candidates of width 3, anchor R=5, L=3, H=2.
inline GenSpec fx2_spec() {
    GenSpec spec;
    spec.seed = 7;
    spec.layers = 3;
    spec.heads = 2;
    spec.image_widths = {3, 3, 3, 3};
    spec.query_rows = 5;
    spec.target = 2;
    spec.gamma = 0.0;
    spec.onset_layer = 3;
    spec.mode = SampleMode::image_image;
    spec.sample_id = "fx2";
    return spec;
}

/// Reorders the (contiguous) image spans so that position p shows the old
/// image perm[p], moving the dump's column blocks and the target along.
inline GeneratedSample permute_images(const GeneratedSample& in, const std::vector<std::size_t>& perm) {
    const SampleManifest& m = in.manifest;
    const std::size_t k = m.num_images();
    std::vector<const Span*> old(k);
    for (const Span& s : m.spans)
        if (s.role == SpanRole::image) old[*s.image_index] = &s;
    std::vector<std::size_t> old_first(k, 0);
    for (std::size_t i = 1; i < k; ++i) old_first[i] = old_first[i - 1] + old[i - 1]->length();

    GeneratedSample out{m, AttentionDump(in.dump.shape())};
    out.manifest.spans.clear();
    out.manifest.key_span_ids.clear();
    for (const Span& s : m.spans)
        if (s.role != SpanRole::image) out.manifest.spans.push_back(s);
    std::size_t pos = old[0]->start;
    for (std::size_t p = 0; p < k; ++p) {
        Span s = *old[perm[p]];
        const std::size_t len = s.length();
        s.start = pos;
        s.end = pos + len;
        s.image_index = p;
        pos += len;
        out.manifest.spans.push_back(s);
        out.manifest.key_span_ids.push_back(s.id);
        if (perm[p] == m.target_image_index) out.manifest.target_image_index = p;
    }
    std::sort(out.manifest.spans.begin(), out.manifest.spans.end(),
              [](const Span& a, const Span& b) { return a.start < b.start; });

    const DumpShape& sh = in.dump.shape();
    for (std::size_t l = 0; l < sh.layers; ++l)
        for (std::size_t h = 0; h < sh.heads; ++h)
            for (std::size_t r = 0; r < sh.rows; ++r) {
                std::size_t c = 0;
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t n = 0; n < old[perm[p]]->length(); ++n)
                        out.dump.at(l, h, r, c++) = in.dump.at(l, h, r, old_first[perm[p]] + n);
            }
    return out;
}

/// Uniformly random permutation of 0..k-1.
inline std::vector<std::size_t> random_permutation(Xorshift64Star& rng, std::size_t k) {
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[rng.next_below(i)]);
    return perm;
}

/// `count` members of `spec` with derived seeds and the target rotating
/// through the images, so chance accuracy is 1/k whatever the tie rule favors.
inline std::vector<GeneratedSample> rotating_dataset(const GenSpec& spec, std::size_t count) {
    std::vector<GeneratedSample> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        GenSpec member = spec;
        member.seed = derive_seed(spec.seed, j);
        member.target = j % spec.image_widths.size();
        char id[32];
        std::snprintf(id, sizeof(id), "%s-%05zu", spec.sample_id.c_str(), j);
        member.sample_id = id;
        out.push_back(generate_sample(member));
    }
    return out;
}

/// Hand-built sigma table from per-layer rows.
inline SigmaTable sigma_from(const std::vector<std::vector<double>>& rows) {
    SigmaTable t(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t l = 0; l < rows.size(); ++l)
        for (std::size_t i = 0; i < rows[l].size(); ++i) t.at(l, i) = rows[l][i];
    return t;
}

/// Sigma table whose layer-focused image sequence is `focus` (k images).
inline SigmaTable sigma_with_focus(const std::vector<std::size_t>& focus, std::size_t k) {
    SigmaTable t(focus.size(), k);
    for (std::size_t l = 0; l < focus.size(); ++l)
        for (std::size_t i = 0; i < k; ++i) t.at(l, i) = i == focus[l] ? 0.5 : 0.1;
    return t;
}

/// Minimal analyzed sample: hand sigma plus the labels the harness reads.
inline AnalyzedSample analyzed(const std::string& id, SigmaTable sigma, std::size_t target,
                               std::optional<bool> answer_correct) {
    SampleManifest m;
    m.sample_id = id;
    m.task = "fixture";
    m.num_layers = sigma.layers();
    m.num_heads = 1;
    m.target_image_index = target;
    m.answer_correct = answer_correct;
    return AnalyzedSample{std::move(m), std::move(sigma)};
}

#ifdef ATTNACC_TEST_TMP
/// Fresh empty directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
    const std::filesystem::path dir = std::filesystem::path(ATTNACC_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}
#endif

inline double rel_diff(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace attnacc::testing
