#include "attnacc/harness.hpp"

#include "attnacc/dump_io.hpp"
#include "attnacc/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <unordered_map>

namespace attnacc {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDumpExt = ".attn";
constexpr std::string_view kManifestExt = ".manifest.json";

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

int metric_rank(MetricKind m) { return static_cast<int>(m); }

bool attention_correct(const AnalyzedSample& s, const MetricConfig& config) {
    return focused_image(s.sigma, config) == s.manifest.target_image_index;
}

void check_grid(std::span<const AnalyzedSample> samples, const std::vector<MetricConfig>& grid) {
    if (grid.empty()) throw std::invalid_argument("metric grid is empty");
    const std::size_t layers = min_layers(samples);
    for (const MetricConfig& c : grid)
        if (c.n == 0 || (!samples.empty() && c.n > layers))
            throw std::out_of_range("grid cell " + describe(c) + " needs N in 1.." + std::to_string(layers));
}

}  // namespace

DatasetIndex DatasetIndex::filter(const std::function<bool(const SampleManifest&)>& keep) const {
    DatasetIndex out{root, {}, warnings};
    for (const auto& s : samples)
        if (keep(s.manifest)) out.samples.push_back(s);
    return out;
}

DatasetIndex DatasetIndex::with_difficulty(Difficulty difficulty) const {
    return filter([&](const SampleManifest& m) { return m.difficulty == difficulty; });
}

DatasetIndex DatasetIndex::with_task(const std::string& task) const {
    return filter([&](const SampleManifest& m) { return m.task == task; });
}

DatasetIndex DatasetIndex::with_tag(const std::string& tag) const {
    return filter([&](const SampleManifest& m) { return m.has_tag(tag); });
}

DatasetIndex DatasetIndex::with_shuffle_group(const std::string& group) const {
    return filter([&](const SampleManifest& m) { return m.shuffle_group == group; });
}

DatasetIndex index_dataset(const std::string& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw DatasetError("dataset root '" + root + "' is not a readable directory");

    std::map<std::string, std::string> dumps, manifests;  // basename path -> file
    for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (!it->is_regular_file()) continue;
        const std::string path = it->path().string();
        if (ends_with(path, kManifestExt))
            manifests[path.substr(0, path.size() - kManifestExt.size())] = path;
        else if (ends_with(path, kDumpExt))
            dumps[path.substr(0, path.size() - kDumpExt.size())] = path;
    }
    if (ec) throw DatasetError("cannot scan '" + root + "': " + ec.message());

    DatasetIndex index;
    index.root = root;
    for (const auto& [base, path] : dumps)
        if (!manifests.count(base)) index.warnings.push_back("dump without manifest: " + path);
    std::unordered_map<std::string, std::string> seen;  // sample_id -> manifest path
    for (const auto& [base, path] : manifests) {
        auto dump = dumps.find(base);
        if (dump == dumps.end()) {
            index.warnings.push_back("manifest without dump: " + path);
            continue;
        }
        SampleRecord rec{read_manifest_file(path), path, dump->second};
        auto [it, inserted] = seen.emplace(rec.manifest.sample_id, path);
        if (!inserted)
            throw DatasetError("duplicate sample_id '" + rec.manifest.sample_id + "' in " + it->second + " and " + path);
        index.samples.push_back(std::move(rec));
    }
    std::sort(index.samples.begin(), index.samples.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.manifest.sample_id < b.manifest.sample_id; });
    return index;
}

AnalyzedSample analyze_sample(const SampleManifest& manifest, const AttentionDump& dump) {
    const ValidationReport report = validate_sample(manifest, dump);
    if (!report.ok()) {
        std::string msg = "sample '" + manifest.sample_id + "' failed validation (" +
                          std::to_string(report.violations.size()) + " violations): " +
                          report.violations.front().message;
        throw DatasetError(msg);
    }
    return AnalyzedSample{manifest, sample_factors(dump, build_column_map(manifest))};
}

std::vector<AnalyzedSample> analyze_dataset(const DatasetIndex& index, int jobs) {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(index.samples.size());
    std::vector<std::optional<AnalyzedSample>> results(index.samples.size());
    std::vector<std::string> errors(index.samples.size());
    const int threads = std::max(1, jobs);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const SampleRecord& rec = index.samples[i];
        try {
            results[i] = analyze_sample(rec.manifest, read_dump_file(rec.dump_path));
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    std::vector<AnalyzedSample> out;
    out.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!errors[i].empty()) throw DatasetError(errors[i]);
        out.push_back(std::move(*results[i]));
    }
    return out;
}

std::optional<std::size_t> best_cell(const std::vector<CellResult>& cells) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto v = cells[i].attention.value();
        if (!v) continue;
        if (!best) {
            best = i;
            continue;
        }
        const CellResult& b = cells[*best];
        const double bv = *b.attention.value();
        const bool better =
            *v > bv || (*v == bv && (cells[i].config.n < b.config.n ||
                                     (cells[i].config.n == b.config.n &&
                                      metric_rank(cells[i].config.metric) < metric_rank(b.config.metric))));
        if (better) best = i;
    }
    return best;
}

AccuracyTable accuracy_table(std::span<const AnalyzedSample> samples, const std::vector<MetricConfig>& grid) {
    check_grid(samples, grid);
    AccuracyTable table;
    table.samples = samples.size();
    for (const MetricConfig& c : grid) table.cells.push_back(CellResult{c, {}});
    for (const AnalyzedSample& s : samples) {
        if (!s.manifest.answer_correct) continue;
        ++table.labeled;
        table.answer.add(*s.manifest.answer_correct);
        if (!*s.manifest.answer_correct) continue;
        ++table.answer_correct;
        for (CellResult& cell : table.cells) cell.attention.add(attention_correct(s, cell.config));
    }
    table.best = best_cell(table.cells);
    return table;
}

EvalReport evaluate(std::span<const AnalyzedSample> samples, const std::vector<MetricConfig>& grid) {
    EvalReport report;
    report.overall = accuracy_table(samples, grid);
    std::map<std::string, std::vector<AnalyzedSample>> by_difficulty, by_task;
    for (const AnalyzedSample& s : samples) {
        by_difficulty[to_string(s.manifest.difficulty)].push_back(s);
        by_task[s.manifest.task].push_back(s);
    }
    for (const auto& [name, group] : by_difficulty) report.by_difficulty[name] = accuracy_table(group, grid);
    for (const auto& [name, group] : by_task) report.by_task[name] = accuracy_table(group, grid);
    return report;
}

EvalReport evaluate(const DatasetIndex& index, const std::vector<MetricConfig>& grid, int jobs) {
    const auto samples = analyze_dataset(index, jobs);
    return evaluate(samples, grid);
}

std::size_t min_layers(std::span<const AnalyzedSample> samples) {
    if (samples.empty()) return 0;
    std::size_t layers = std::numeric_limits<std::size_t>::max();
    for (const AnalyzedSample& s : samples) layers = std::min(layers, s.sigma.layers());
    return layers;
}

SweepReport sweep_report(std::span<const AnalyzedSample> samples, const std::vector<MetricKind>& metrics,
                         std::size_t n_max, LndMode lnd_mode) {
    if (metrics.empty()) throw std::invalid_argument("sweep needs at least one metric");
    if (n_max == 0) throw std::invalid_argument("n_max must be >= 1");
    SweepReport report;
    report.requested_n_max = n_max;
    report.lnd_mode = lnd_mode;
    report.metrics = metrics;

    const std::size_t layers = min_layers(samples);
    report.n_max = n_max;
    if (!samples.empty()) {
        const bool mixed = std::any_of(samples.begin(), samples.end(),
                                       [&](const AnalyzedSample& s) { return s.sigma.layers() != layers; });
        if (mixed)
            report.warnings.push_back("samples have mixed layer counts; N is limited to the minimum (" +
                                      std::to_string(layers) + ")");
        if (n_max > layers) {
            report.warnings.push_back("n_max " + std::to_string(n_max) + " clamped to " + std::to_string(layers));
            report.n_max = layers;
        }
    }

    std::vector<MetricConfig> grid;
    for (std::size_t n = 1; n <= report.n_max; ++n)
        for (MetricKind m : metrics) grid.push_back(MetricConfig{m, n, lnd_mode});
    const AccuracyTable table = accuracy_table(samples, grid);

    report.rows.assign(report.n_max, std::vector<Ratio>(metrics.size()));
    for (std::size_t i = 0; i < table.cells.size(); ++i)
        report.rows[i / metrics.size()][i % metrics.size()] = table.cells[i].attention;
    if (table.best) report.best = table.cells[*table.best].config;
    return report;
}

QuadrantReport quadrant_report(std::span<const AnalyzedSample> samples, const MetricConfig& config) {
    QuadrantReport report;
    report.config = config;
    for (const AnalyzedSample& s : samples) {
        if (!s.manifest.answer_correct) continue;
        ++report.labeled;
        const bool attention = attention_correct(s, config);
        if (*s.manifest.answer_correct) {
            report.answer_correct_attention.add(attention);
            ++(attention ? report.answer_right_attention_right : report.answer_right_attention_wrong);
        } else {
            report.answer_incorrect_attention.add(attention);
            ++(attention ? report.answer_wrong_attention_right : report.answer_wrong_attention_wrong);
        }
    }
    if (report.labeled == 0) throw DatasetError("no labeled samples");
    return report;
}

SeriesStats series_stats(const std::vector<std::optional<double>>& values) {
    SeriesStats stats;
    double sum = 0.0;
    for (const auto& v : values) {
        if (!v) continue;
        ++stats.count;
        sum += *v;
        stats.min = stats.min ? std::min(*stats.min, *v) : *v;
        stats.max = stats.max ? std::max(*stats.max, *v) : *v;
    }
    if (stats.count == 0) return stats;
    // Rounding in the sum must not push the mean outside [min, max].
    const double mean = std::clamp(sum / static_cast<double>(stats.count), *stats.min, *stats.max);
    stats.mean = mean;
    if (stats.count >= 2) {
        double ss = 0.0;
        for (const auto& v : values)
            if (v) ss += (*v - mean) * (*v - mean);
        stats.stddev = std::sqrt(ss / static_cast<double>(stats.count - 1));
    }
    return stats;
}

ShuffleReport shuffle_report(std::span<const AnalyzedSample> samples, const MetricConfig& config) {
    // group -> seed -> run
    std::map<std::string, std::map<std::int64_t, ShuffleRun>> groups;
    for (const AnalyzedSample& s : samples) {
        const SampleManifest& m = s.manifest;
        if (!m.shuffle_group) continue;
        if (!m.shuffle_seed)
            throw DatasetError("sample '" + m.sample_id + "' has shuffle_group but no shuffle_seed");
        ShuffleRun& run = groups[*m.shuffle_group][*m.shuffle_seed];
        run.shuffle_seed = *m.shuffle_seed;
        ++run.samples;
        if (!m.answer_correct) continue;
        run.answer.add(*m.answer_correct);
        if (*m.answer_correct) run.attention.add(attention_correct(s, config));
    }
    if (groups.empty()) throw DatasetError("no samples carry a shuffle_group");

    ShuffleReport report;
    report.config = config;
    for (auto& [name, runs] : groups) {
        ShuffleGroupReport g;
        g.group = name;
        std::vector<std::optional<double>> attention, answer;
        for (auto& [seed, run] : runs) {
            attention.push_back(run.attention.value());
            answer.push_back(run.answer.value());
            g.runs.push_back(run);
        }
        g.attention = series_stats(attention);
        g.answer = series_stats(answer);
        report.groups.push_back(std::move(g));
    }
    return report;
}

SubsetReport subset_report(std::span<const AnalyzedSample> samples, const std::string& tag, const MetricConfig& config) {
    if (tag.empty()) throw std::invalid_argument("subset tag must be non-empty");
    SubsetReport report{tag, config, {}};
    for (const AnalyzedSample& s : samples)
        if (s.manifest.has_tag(tag)) report.attention.add(attention_correct(s, config));
    return report;
}

MetricConfig best_config(std::span<const AnalyzedSample> samples, LndMode lnd_mode) {
    const std::size_t layers = min_layers(samples);
    if (layers == 0) return MetricConfig{MetricKind::m_lnd, 1, lnd_mode};
    const AccuracyTable table = accuracy_table(samples, full_grid(layers, lnd_mode));
    if (!table.best) return MetricConfig{MetricKind::m_lnd, 1, lnd_mode};
    return table.cells[*table.best].config;
}

}  // namespace attnacc
