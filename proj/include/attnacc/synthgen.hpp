#pragma once

// Deterministic synthetic inference runs.
//
// Every query row of every (layer, head) starts as seeded uniform noise over
// the C key columns, scaled to sum 1. From the onset layer on, a `gamma`
// share of each row's mass is moved onto the target image, spread evenly
// over its columns:
//
//     row = gamma * 1[c in target] / n_target + (1 - gamma) * noise
//
// so gamma = 0 yields pure noise at every layer and gamma = 1 puts all mass
// on the target image from the onset layer on.
//
// Random numbers come from xorshift64* seeded through splitmix64; see
// docs/formats.md for the exact definition and test vectors.

#include "attnacc/sample.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attnacc {

/// splitmix64 output function applied to `x + 0x9E3779B97F4A7C15`.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for the index-th member of a family derived from `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// xorshift64* (shift triple 12/25/27, multiplier 0x2545F4914F6CDD1D).
class Xorshift64Star {
public:
    explicit Xorshift64Star(std::uint64_t seed) noexcept;

    std::uint64_t next() noexcept;
    /// Uniform double in (0, 1], 53-bit resolution.
    double next_unit() noexcept;
    /// Uniform integer in [0, bound) by modulo reduction.
    std::uint64_t next_below(std::uint64_t bound) noexcept;

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

struct GenSpec {
    std::uint64_t seed = 0;
    std::size_t layers = 1;
    std::size_t heads = 1;
    std::vector<std::size_t> image_widths;
    std::size_t query_rows = 1;
    std::size_t target = 0;
    double gamma = 0.0;
    std::size_t onset_layer = 0;  // 0..layers; layers means "never"
    SampleMode mode = SampleMode::text_image;
    std::vector<std::optional<PatchGrid>> patch_grids;  // empty, or one per image
    std::optional<std::size_t> shuffles;
    std::optional<bool> answer_correct = true;

    std::string sample_id = "synth";
    std::string task = "synthetic";
    Difficulty difficulty = Difficulty::easy;
    std::vector<std::string> tags;
    std::optional<std::string> model_name;

    /// Throws Error when an invariant is violated.
    void validate() const;
};

GenSpec parse_genspec(std::string_view json_text);
std::string serialize_genspec(const GenSpec& spec);

struct GeneratedSample {
    SampleManifest manifest;
    AttentionDump dump;
};

GeneratedSample generate_sample(const GenSpec& spec);

/// Seeded permutation of 0..k-1 (Fisher-Yates driven by xorshift64*).
/// Entry p is the original image shown at position p.
std::vector<std::size_t> shuffle_permutation(std::uint64_t seed, std::size_t shuffle_seed, std::size_t k);

/// One sample per shuffle. Each shuffle reorders the images, carries the
/// target along, and permutes the column blocks of the same noise, so every
/// run is the same underlying sample seen in a different image order.
std::vector<GeneratedSample> generate_shuffle_group(const GenSpec& spec, std::size_t shuffles);

/// `count` independent samples (or shuffle groups when spec.shuffles is set),
/// member j seeded with derive_seed(spec.seed, j).
std::vector<GeneratedSample> generate_dataset(const GenSpec& spec, std::size_t count);

/// Writes `<dir>/<sample_id>.attn` and `<dir>/<sample_id>.manifest.json`.
void write_sample(const GeneratedSample& sample, const std::string& dir);

}  // namespace attnacc
