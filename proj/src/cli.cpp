#include "attnacc/cli.hpp"

#include "attnacc/dump_io.hpp"
#include "attnacc/error.hpp"
#include "attnacc/factors.hpp"
#include "attnacc/harness.hpp"
#include "attnacc/metrics.hpp"
#include "attnacc/render.hpp"
#include "attnacc/synthgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace attnacc {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string format = "json";
    std::string config_path;
    int jobs = 1;

    std::string sample;
    std::string dataset;
    std::string genspec;

    std::string metric;
    std::size_t n = 0;
    std::string lnd_mode = "nth-from-last";
    std::size_t n_max = 0;
    std::vector<std::string> metrics;
    std::string tag;

    std::size_t image = 0;
    std::size_t layer = 0;
    double top_pct = 10.0;
    std::string out;
    std::size_t count = 1;
    std::string kind;
    std::string normalization = "global-minmax";
    std::string output = "csv";
};

struct SamplePaths {
    std::string manifest;
    std::string dump;
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Accepts X, X.attn or X.manifest.json.
SamplePaths resolve_sample(const std::string& arg) {
    std::string base = arg;
    if (ends_with(base, ".manifest.json"))
        base.resize(base.size() - std::string(".manifest.json").size());
    else if (ends_with(base, ".attn"))
        base.resize(base.size() - std::string(".attn").size());
    return {base + ".manifest.json", base + ".attn"};
}

bool is_json(const Options& o) { return o.format == "json"; }

LndMode parse_lnd_mode(const std::string& text) {
    auto mode = lnd_mode_from_string(text);
    if (!mode) throw UsageError("unknown --lnd-mode '" + text + "' (nth-from-last | unanimous-else-last)");
    return *mode;
}

MetricKind parse_metric(const std::string& text) {
    auto m = metric_from_string(text);
    if (!m) throw UsageError("unknown metric '" + text + "' (LND | M-LND | MC-LND)");
    return *m;
}

// Fills options the user did not pass on the command line from --config.
void apply_config(Options& o, const CLI::App& app, const CLI::App& sub) {
    if (o.config_path.empty()) return;
    std::ifstream in(o.config_path);
    if (!in) throw UsageError("cannot read config '" + o.config_path + "'");
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config '" + o.config_path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw UsageError("config must be a JSON object");

    auto given = [&](const std::string& name) {
        const CLI::Option* opt = nullptr;
        try {
            opt = sub.get_option(name);
        } catch (const CLI::OptionNotFound&) {
            try {
                opt = app.get_option(name);
            } catch (const CLI::OptionNotFound&) {
                return false;
            }
        }
        return opt->count() > 0;
    };
    try {
        for (const auto& [key, value] : cfg.items()) {
            if (key == "tie_break") {
                if (value != "lowest-image-index") throw UsageError("tie_break is fixed to lowest-image-index");
            } else if (key == "format") {
                if (!given("--format")) o.format = value.get<std::string>();
            } else if (key == "jobs") {
                if (!given("--jobs")) o.jobs = value.get<int>();
            } else if (key == "metric") {
                if (!given("--metric")) o.metric = value.get<std::string>();
            } else if (key == "n") {
                if (!given("--n")) o.n = value.get<std::size_t>();
            } else if (key == "lnd_mode") {
                if (!given("--lnd-mode")) o.lnd_mode = value.get<std::string>();
            } else if (key == "n_max") {
                if (!given("--n-max")) o.n_max = value.get<std::size_t>();
            } else if (key == "top_pct") {
                if (!given("--top-pct")) o.top_pct = value.get<double>();
            } else if (key == "normalization") {
                if (!given("--normalization")) o.normalization = value.get<std::string>();
            } else if (key == "output") {
                if (!given("--output")) o.output = value.get<std::string>();
            } else {
                throw UsageError("unknown config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config '" + o.config_path + "': " + e.what());
    }
    if (o.format != "json" && o.format != "text") throw UsageError("format must be json or text");
}

std::vector<AnalyzedSample> load_dataset(const Options& o, std::ostream& err) {
    const DatasetIndex index = index_dataset(o.dataset);
    for (const auto& w : index.warnings) err << "warning: " << w << "\n";
    if (index.samples.empty()) throw DatasetError("no samples found under '" + o.dataset + "'");
    return analyze_dataset(index, o.jobs);
}

// --metric/--n given pin the configuration; whatever is missing comes from
// the best-scoring cell among the compatible ones.
MetricConfig resolve_config(const Options& o, std::span<const AnalyzedSample> samples) {
    const LndMode mode = parse_lnd_mode(o.lnd_mode);
    const std::size_t layers = min_layers(samples);
    if (o.n > layers) throw UsageError("--n " + std::to_string(o.n) + " exceeds the layer count (N <= " + std::to_string(layers) + ")");
    std::vector<MetricConfig> grid;
    for (const MetricConfig& c : full_grid(layers, mode)) {
        if (!o.metric.empty() && c.metric != parse_metric(o.metric)) continue;
        if (o.n != 0 && c.n != o.n) continue;
        grid.push_back(c);
    }
    if (grid.size() == 1) return grid.front();
    const AccuracyTable table = accuracy_table(samples, grid);
    return table.best ? table.cells[*table.best].config : grid.front();
}

int cmd_validate(const Options& o, std::ostream& out) {
    const SamplePaths paths = resolve_sample(o.sample);
    const SampleManifest manifest = read_manifest_file(paths.manifest);
    const AttentionDump dump = read_dump_file(paths.dump);
    const ValidationReport report = validate_sample(manifest, dump);
    out << (is_json(o) ? to_json(report, manifest.sample_id) : to_text(report, manifest.sample_id));
    return report.ok() ? kExitOk : kExitInvalid;
}

int cmd_analyze(const Options& o, std::ostream& out) {
    const SamplePaths paths = resolve_sample(o.sample);
    const SampleManifest manifest = read_manifest_file(paths.manifest);
    const LndMode mode = parse_lnd_mode(o.lnd_mode);
    if (o.n > manifest.num_layers)
        throw UsageError("--n " + std::to_string(o.n) + " exceeds the layer count (N <= " +
                         std::to_string(manifest.num_layers) + ")");
    std::optional<MetricKind> metric;
    if (!o.metric.empty()) metric = parse_metric(o.metric);

    const AnalyzedSample sample = analyze_sample(manifest, read_dump_file(paths.dump));
    std::vector<MetricConfig> grid;
    for (const MetricConfig& c : full_grid(manifest.num_layers, mode)) {
        if (metric && c.metric != *metric) continue;
        if (o.n != 0 && c.n != o.n) continue;
        grid.push_back(c);
    }
    const auto verdicts =
        model_focused_verdicts(sample.sigma, manifest.target_image_index, grid, manifest.sample_id, manifest.answer_correct);
    out << (is_json(o) ? analysis_json(manifest, sample.sigma, verdicts) : analysis_text(manifest, sample.sigma, verdicts));
    return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
    const auto samples = load_dataset(o, err);
    std::vector<MetricKind> metrics;
    for (const auto& m : o.metrics) metrics.push_back(parse_metric(m));
    if (metrics.empty()) metrics.assign(std::begin(kAllMetrics), std::end(kAllMetrics));
    const std::size_t n_max = o.n_max ? o.n_max : min_layers(samples);
    const SweepReport report = sweep_report(samples, metrics, n_max, parse_lnd_mode(o.lnd_mode));
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    out << (is_json(o) ? to_json(report) : to_text(report));
    return kExitOk;
}

int cmd_aggregate(const Options& o, std::ostream& out, std::ostream& err) {
    const auto samples = load_dataset(o, err);
    const std::size_t layers = min_layers(samples);
    std::size_t n_max = o.n_max ? o.n_max : layers;
    if (n_max > layers) {
        err << "warning: --n-max " << n_max << " clamped to " << layers << "\n";
        n_max = layers;
    }
    const EvalReport report = evaluate(samples, full_grid(n_max, parse_lnd_mode(o.lnd_mode)));
    out << (is_json(o) ? to_json(report) : to_text(report));
    return kExitOk;
}

int cmd_quadrants(const Options& o, std::ostream& out, std::ostream& err) {
    const auto samples = load_dataset(o, err);
    const QuadrantReport report = quadrant_report(samples, resolve_config(o, samples));
    out << (is_json(o) ? to_json(report) : to_text(report));
    return kExitOk;
}

int cmd_shuffle(const Options& o, std::ostream& out, std::ostream& err) {
    const auto samples = load_dataset(o, err);
    const ShuffleReport report = shuffle_report(samples, resolve_config(o, samples));
    out << (is_json(o) ? to_json(report) : to_text(report));
    return kExitOk;
}

int cmd_subset(const Options& o, std::ostream& out, std::ostream& err) {
    const auto samples = load_dataset(o, err);
    const SubsetReport report = subset_report(samples, o.tag, resolve_config(o, samples));
    out << (is_json(o) ? to_json(report) : to_text(report));
    return kExitOk;
}

RhoTable load_rho(const Options& o, const SampleManifest& manifest) {
    const AttentionDump dump = read_dump_file(resolve_sample(o.sample).dump);
    const ValidationReport report = validate_sample(manifest, dump);
    if (!report.ok()) throw DatasetError("sample '" + manifest.sample_id + "' failed validation: " + report.violations.front().message);
    if (o.image >= manifest.num_images())
        throw UsageError("--image " + std::to_string(o.image) + " out of range (k=" + std::to_string(manifest.num_images()) + ")");
    return patch_attention_factors(dump, build_column_map(manifest), o.image);
}

int cmd_patches(const Options& o, std::ostream& out) {
    const SampleManifest manifest = read_manifest_file(resolve_sample(o.sample).manifest);
    if (o.layer >= manifest.num_layers)
        throw UsageError("--layer " + std::to_string(o.layer) + " out of range (L=" + std::to_string(manifest.num_layers) + ")");
    if (!(o.top_pct > 0.0 && o.top_pct <= 100.0)) throw UsageError("--top-pct must be in (0, 100]");
    const RhoTable rho = load_rho(o, manifest);
    if (!o.out.empty()) render_patch_map(rho, o.layer, o.top_pct, o.out);
    out << patch_highlights_json(rho, o.layer, o.top_pct);
    return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    std::ifstream in(o.genspec);
    if (!in) throw Error("cannot read generator spec '" + o.genspec + "'");
    std::ostringstream text;
    text << in.rdbuf();
    const GenSpec spec = parse_genspec(text.str());
    if (o.count == 0) throw UsageError("--count must be >= 1");
    const auto samples = generate_dataset(spec, o.count);
    for (const auto& s : samples) write_sample(s, o.out);
    nlohmann::ordered_json j;
    j["dir"] = o.out;
    j["samples"] = samples.size();
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (const auto& s : samples) ids.push_back(s.manifest.sample_id);
    j["sample_ids"] = std::move(ids);
    out << j.dump() << "\n";
    return kExitOk;
}

int cmd_render(const Options& o, std::ostream& out) {
    auto norm = normalization_from_string(o.normalization);
    if (!norm) throw UsageError("unknown --normalization '" + o.normalization + "'");
    auto output = heatmap_output_from_string(o.output);
    if (!output) throw UsageError("unknown --output '" + o.output + "' (csv | pgm | both)");
    const HeatmapSpec spec{*norm, *output};
    const SamplePaths paths = resolve_sample(o.sample);
    const SampleManifest manifest = read_manifest_file(paths.manifest);
    const std::string stem = o.out.empty() ? manifest.sample_id + "." + o.kind : o.out;

    std::vector<std::string> files;
    if (o.kind == "sigma") {
        const AnalyzedSample sample = analyze_sample(manifest, read_dump_file(paths.dump));
        files = render_sigma_heatmap(sample.sigma, spec, stem);
    } else if (o.kind == "rho") {
        if (o.layer >= manifest.num_layers)
            throw UsageError("--layer " + std::to_string(o.layer) + " out of range (L=" + std::to_string(manifest.num_layers) + ")");
        if (!(o.top_pct > 0.0 && o.top_pct <= 100.0)) throw UsageError("--top-pct must be in (0, 100]");
        const RhoTable rho = load_rho(o, manifest);
        files = render_rho_heatmap(rho, spec, stem);
        for (auto& f : render_patch_map(rho, o.layer, o.top_pct, stem + ".layer" + std::to_string(o.layer)))
            files.push_back(std::move(f));
    } else {
        throw UsageError("--kind must be sigma or rho");
    }
    nlohmann::ordered_json j;
    j["files"] = files;
    out << j.dump() << "\n";
    return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Attention-accuracy analysis of recorded multimodal attention dumps", "attnacc"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "text"}));
    app.add_option("--config", o.config_path, "JSON file overriding option defaults");
    app.add_option("--jobs", o.jobs, "Samples analyzed in parallel")->check(CLI::PositiveNumber);

    auto add_metric_opts = [&](CLI::App* sub) {
        sub->add_option("--metric", o.metric, "LND, M-LND or MC-LND");
        sub->add_option("--n", o.n, "Number of last layers")->check(CLI::PositiveNumber);
        sub->add_option("--lnd-mode", o.lnd_mode, "nth-from-last or unanimous-else-last");
    };

    auto* validate = app.add_subcommand("validate", "Check a sample's dump against its manifest");
    validate->add_option("sample", o.sample, "Sample path (X, X.attn or X.manifest.json)")->required();

    auto* analyze = app.add_subcommand("analyze", "Sigma table and verdicts for one sample");
    analyze->add_option("sample", o.sample)->required();
    add_metric_opts(analyze);

    auto* sweep = app.add_subcommand("sweep", "Attention accuracy against N for each metric");
    sweep->add_option("dataset", o.dataset)->required();
    sweep->add_option("--n-max", o.n_max)->check(CLI::PositiveNumber);
    sweep->add_option("--metric", o.metrics, "Metrics to include (default: all)");
    sweep->add_option("--lnd-mode", o.lnd_mode);

    auto* aggregate = app.add_subcommand("aggregate", "Attention and answer accuracy over the full grid");
    aggregate->add_option("dataset", o.dataset)->required();
    aggregate->add_option("--n-max", o.n_max)->check(CLI::PositiveNumber);
    aggregate->add_option("--lnd-mode", o.lnd_mode);

    auto* quadrants = app.add_subcommand("quadrants", "Answer x attention correctness counts");
    quadrants->add_option("dataset", o.dataset)->required();
    add_metric_opts(quadrants);

    auto* shuffle = app.add_subcommand("shuffle-stats", "Per-group statistics over image-order shuffles");
    shuffle->add_option("dataset", o.dataset)->required();
    add_metric_opts(shuffle);

    auto* subset = app.add_subcommand("subset", "Attention accuracy over samples with a tag");
    subset->add_option("dataset", o.dataset)->required();
    subset->add_option("--tag", o.tag)->required();
    add_metric_opts(subset);

    auto* patches = app.add_subcommand("patches", "Top patches of one image at one layer");
    patches->add_option("sample", o.sample)->required();
    patches->add_option("--image", o.image)->required();
    patches->add_option("--layer", o.layer)->required();
    patches->add_option("--top-pct", o.top_pct);
    patches->add_option("--out", o.out, "Also write <out>.csv and <out>.top.json");

    auto* synth = app.add_subcommand("synth", "Generate synthetic samples from a generator spec");
    synth->add_option("genspec", o.genspec)->required();
    synth->add_option("--out", o.out)->required();
    synth->add_option("--count", o.count);

    auto* render = app.add_subcommand("render", "Write sigma or rho heatmaps");
    render->add_option("sample", o.sample)->required();
    render->add_option("--kind", o.kind)->required()->check(CLI::IsMember({"sigma", "rho"}));
    render->add_option("--image", o.image);
    render->add_option("--layer", o.layer);
    render->add_option("--top-pct", o.top_pct);
    render->add_option("--normalization", o.normalization);
    render->add_option("--output", o.output);
    render->add_option("--out", o.out, "Output file stem");

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        apply_config(o, app, *sub);
        if (sub == validate) return cmd_validate(o, out);
        if (sub == analyze) return cmd_analyze(o, out);
        if (sub == sweep) return cmd_sweep(o, out, err);
        if (sub == aggregate) return cmd_aggregate(o, out, err);
        if (sub == quadrants) return cmd_quadrants(o, out, err);
        if (sub == shuffle) return cmd_shuffle(o, out, err);
        if (sub == subset) return cmd_subset(o, out, err);
        if (sub == patches) return cmd_patches(o, out);
        if (sub == synth) return cmd_synth(o, out);
        if (sub == render) return cmd_render(o, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n" << sub->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitUsage;
}

}  // namespace attnacc
