#pragma once

// Dataset-level evaluation over many recorded runs.
//
// Attention accuracy counts only answer-correct samples: a sample whose
// answer label is false or missing never enters numerator or denominator.
// Empty denominators stay undefined; they are never reported as 0.

#include "attnacc/factors.hpp"
#include "attnacc/metrics.hpp"
#include "attnacc/sample.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace attnacc {

/// hits / total with an explicit undefined state for total == 0.
struct Ratio {
    std::size_t hits = 0;
    std::size_t total = 0;

    std::optional<double> value() const noexcept {
        if (total == 0) return std::nullopt;
        return static_cast<double>(hits) / static_cast<double>(total);
    }
    void add(bool hit) noexcept {
        ++total;
        hits += hit ? 1 : 0;
    }
    friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct SampleRecord {
    SampleManifest manifest;
    std::string manifest_path;
    std::string dump_path;
};

struct DatasetIndex {
    std::string root;
    std::vector<SampleRecord> samples;  // sorted by sample_id
    std::vector<std::string> warnings;

    DatasetIndex filter(const std::function<bool(const SampleManifest&)>& keep) const;
    DatasetIndex with_difficulty(Difficulty difficulty) const;
    DatasetIndex with_task(const std::string& task) const;
    DatasetIndex with_tag(const std::string& tag) const;
    DatasetIndex with_shuffle_group(const std::string& group) const;
};

/// Pairs `X.attn` with `X.manifest.json` under `root` (recursively).
/// Unpaired files become warnings; duplicate sample ids throw DatasetError.
DatasetIndex index_dataset(const std::string& root);

struct AnalyzedSample {
    SampleManifest manifest;
    SigmaTable sigma;
};

/// Validates the dump against the manifest and computes sigma.
/// Throws DatasetError listing the violations when validation fails.
AnalyzedSample analyze_sample(const SampleManifest& manifest, const AttentionDump& dump);

/// Loads and analyzes every sample; `jobs` > 1 analyzes samples in parallel.
/// Output order always matches the index.
std::vector<AnalyzedSample> analyze_dataset(const DatasetIndex& index, int jobs = 1);

struct CellResult {
    MetricConfig config;
    Ratio attention;
};

struct AccuracyTable {
    std::vector<CellResult> cells;    // grid order
    std::optional<std::size_t> best;  // index into cells; empty if every cell is undefined
    Ratio answer;                     // answer accuracy over labeled samples
    std::size_t samples = 0;
    std::size_t labeled = 0;
    std::size_t answer_correct = 0;
};

struct EvalReport {
    AccuracyTable overall;
    std::map<std::string, AccuracyTable> by_difficulty;
    std::map<std::string, AccuracyTable> by_task;
};

/// Best cell: highest value, ties to smaller N, then LND < M-LND < MC-LND.
std::optional<std::size_t> best_cell(const std::vector<CellResult>& cells);

AccuracyTable accuracy_table(std::span<const AnalyzedSample> samples, const std::vector<MetricConfig>& grid);
EvalReport evaluate(std::span<const AnalyzedSample> samples, const std::vector<MetricConfig>& grid);
EvalReport evaluate(const DatasetIndex& index, const std::vector<MetricConfig>& grid, int jobs = 1);

/// Smallest layer count over the samples (0 for an empty set).
std::size_t min_layers(std::span<const AnalyzedSample> samples);

struct SweepReport {
    std::size_t requested_n_max = 0;
    std::size_t n_max = 0;
    LndMode lnd_mode = LndMode::nth_from_last;
    std::vector<MetricKind> metrics;
    std::vector<std::vector<Ratio>> rows;  // rows[N-1][metric]
    std::optional<MetricConfig> best;
    std::vector<std::string> warnings;
};

SweepReport sweep_report(std::span<const AnalyzedSample> samples, const std::vector<MetricKind>& metrics,
                         std::size_t n_max, LndMode lnd_mode = LndMode::nth_from_last);

struct QuadrantReport {
    MetricConfig config;
    std::size_t answer_right_attention_right = 0;
    std::size_t answer_right_attention_wrong = 0;
    std::size_t answer_wrong_attention_right = 0;
    std::size_t answer_wrong_attention_wrong = 0;
    Ratio answer_correct_attention;    // the usual attention accuracy
    Ratio answer_incorrect_attention;  // hallucination signal
    std::size_t labeled = 0;
};

/// Throws DatasetError("no labeled samples") when every label is null.
QuadrantReport quadrant_report(std::span<const AnalyzedSample> samples, const MetricConfig& config);

/// Summary statistics over the defined values of a series. `stddev` is the
/// sample standard deviation and stays empty below two values.
struct SeriesStats {
    std::size_t count = 0;
    std::optional<double> mean;
    std::optional<double> stddev;
    std::optional<double> min;
    std::optional<double> max;
};

SeriesStats series_stats(const std::vector<std::optional<double>>& values);

struct ShuffleRun {
    std::int64_t shuffle_seed = 0;
    std::size_t samples = 0;
    Ratio attention;
    Ratio answer;
};

struct ShuffleGroupReport {
    std::string group;
    std::vector<ShuffleRun> runs;  // ascending shuffle_seed
    SeriesStats attention;
    SeriesStats answer;
};

struct ShuffleReport {
    MetricConfig config;
    std::vector<ShuffleGroupReport> groups;  // ascending group name
};

/// Samples without shuffle_group are ignored; throws DatasetError when no
/// sample carries one or a grouped sample lacks shuffle_seed.
ShuffleReport shuffle_report(std::span<const AnalyzedSample> samples, const MetricConfig& config);

struct SubsetReport {
    std::string tag;
    MetricConfig config;
    Ratio attention;  // over every tagged sample, whatever its answer label
};

SubsetReport subset_report(std::span<const AnalyzedSample> samples, const std::string& tag, const MetricConfig& config);

/// Best cell of the full grid up to the smallest layer count; M-LND@N=1
/// when every cell is undefined.
MetricConfig best_config(std::span<const AnalyzedSample> samples, LndMode lnd_mode = LndMode::nth_from_last);

}  // namespace attnacc
