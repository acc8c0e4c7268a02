#include "attnacc/render.hpp"

#include "attnacc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace attnacc {

using ojson = nlohmann::ordered_json;

namespace {

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw Error("failed writing '" + path + "'");
}

std::vector<std::string> render_table(const LayerTable& table, const std::string& prefix, const HeatmapSpec& spec,
                                      const std::string& stem) {
    if (table.layers() == 0 || table.cols() == 0) throw std::invalid_argument("cannot render an empty table");
    std::vector<std::string> written;
    if (spec.output != HeatmapOutput::pgm) {
        const std::string path = stem + ".csv";
        auto out = open_output(path);
        write_table_csv(table, prefix, out);
        finish(out, path);
        written.push_back(path);
    }
    if (spec.output != HeatmapOutput::csv) {
        const std::string path = stem + ".pgm";
        auto out = open_output(path);
        write_pgm(table, spec.normalization, out);
        finish(out, path);
        written.push_back(path);
    }
    return written;
}

std::string fixed4(std::optional<double> v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

std::string ratio_text(const Ratio& r) {
    return fixed4(r.value()) + " (" + std::to_string(r.hits) + "/" + std::to_string(r.total) + ")";
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

ojson ratio_json(const Ratio& r) {
    ojson j;
    const auto v = r.value();
    j["value"] = v ? ojson(*v) : ojson(nullptr);
    j["hits"] = r.hits;
    j["total"] = r.total;
    return j;
}

ojson config_json(const MetricConfig& c) {
    return ojson{{"metric", to_string(c.metric)}, {"n", c.n}, {"lnd_mode", to_string(c.lnd_mode)}};
}

ojson stats_json(const SeriesStats& s) {
    auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
    ojson j;
    j["count"] = s.count;
    j["mean"] = opt(s.mean);
    j["stddev"] = s.stddev ? ojson(*s.stddev) : ojson("n/a");
    j["stddev_kind"] = "sample";
    j["min"] = opt(s.min);
    j["max"] = opt(s.max);
    return j;
}

ojson table_json(const AccuracyTable& t) {
    ojson j;
    j["samples"] = t.samples;
    j["labeled"] = t.labeled;
    j["answer_correct"] = t.answer_correct;
    j["answer_accuracy"] = ratio_json(t.answer);
    ojson cells = ojson::array();
    for (const CellResult& c : t.cells) {
        ojson cell = config_json(c.config);
        cell["attention_accuracy"] = ratio_json(c.attention);
        cells.push_back(std::move(cell));
    }
    j["cells"] = std::move(cells);
    if (t.best) {
        const CellResult& b = t.cells[*t.best];
        ojson best = config_json(b.config);
        best["attention_accuracy"] = ratio_json(b.attention);
        j["best"] = std::move(best);
    } else {
        j["best"] = nullptr;
    }
    return j;
}

std::string dump_json(const ojson& j) { return j.dump() + "\n"; }

void table_text(std::ostringstream& out, const AccuracyTable& t, const std::string& indent) {
    out << indent << "samples " << t.samples << ", labeled " << t.labeled << ", answer-correct " << t.answer_correct
        << "\n";
    out << indent << "answer accuracy    " << ratio_text(t.answer) << "\n";
    out << indent << pad("cell", 26) << "attention accuracy\n";
    for (const CellResult& c : t.cells) out << indent << pad(describe(c.config), 26) << ratio_text(c.attention) << "\n";
    if (t.best)
        out << indent << "best               " << describe(t.cells[*t.best].config) << " = "
            << ratio_text(t.cells[*t.best].attention) << "\n";
    else
        out << indent << "best               undefined (no answer-correct samples)\n";
}

}  // namespace

const char* to_string(Normalization n) noexcept {
    return n == Normalization::global_minmax ? "global-minmax" : "per-layer-minmax";
}

std::optional<Normalization> normalization_from_string(std::string_view text) noexcept {
    if (text == "global-minmax" || text == "global") return Normalization::global_minmax;
    if (text == "per-layer-minmax" || text == "per-layer") return Normalization::per_layer_minmax;
    return std::nullopt;
}

std::optional<HeatmapOutput> heatmap_output_from_string(std::string_view text) noexcept {
    if (text == "csv") return HeatmapOutput::csv;
    if (text == "pgm") return HeatmapOutput::pgm;
    if (text == "both") return HeatmapOutput::both;
    return std::nullopt;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, end);
}

LayerTable normalize(const LayerTable& table, Normalization normalization) {
    LayerTable out(table.layers(), table.cols());
    auto map_range = [&](std::size_t first_layer, std::size_t last_layer) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t l = first_layer; l < last_layer; ++l)
            for (double v : table.row(l)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        for (std::size_t l = first_layer; l < last_layer; ++l)
            for (std::size_t c = 0; c < table.cols(); ++c)
                out.at(l, c) = hi > lo ? (table.at(l, c) - lo) / (hi - lo) : 0.5;
    };
    if (normalization == Normalization::global_minmax) {
        map_range(0, table.layers());
    } else {
        for (std::size_t l = 0; l < table.layers(); ++l) map_range(l, l + 1);
    }
    return out;
}

void write_table_csv(const LayerTable& table, const std::string& column_prefix, std::ostream& out) {
    out << "layer";
    for (std::size_t c = 0; c < table.cols(); ++c) out << ',' << column_prefix << '_' << c;
    out << '\n';
    for (std::size_t l = 0; l < table.layers(); ++l) {
        out << l;
        for (double v : table.row(l)) out << ',' << format_double(v);
        out << '\n';
    }
}

LayerTable read_table_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CSV table");
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = line.find(',');
        while (pos != std::string::npos) {
            const std::size_t next = line.find(',', pos + 1);
            const std::string field = line.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size()) throw Error("bad CSV number '" + field + "'");
            row.push_back(v);
            pos = next;
        }
        if (row.size() != cols) throw Error("CSV row has " + std::to_string(row.size()) + " values, expected " + std::to_string(cols));
        rows.push_back(std::move(row));
    }
    LayerTable table(rows.size(), cols);
    for (std::size_t l = 0; l < rows.size(); ++l)
        for (std::size_t c = 0; c < cols; ++c) table.at(l, c) = rows[l][c];
    return table;
}

void write_pgm(const LayerTable& table, Normalization normalization, std::ostream& out) {
    const LayerTable norm = normalize(table, normalization);
    out << "P5\n" << table.cols() << ' ' << table.layers() << "\n255\n";
    for (double v : norm.values()) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
}

std::vector<std::string> render_sigma_heatmap(const SigmaTable& sigma, const HeatmapSpec& spec, const std::string& stem) {
    return render_table(sigma, "image", spec, stem);
}

std::vector<std::string> render_rho_heatmap(const RhoTable& rho, const HeatmapSpec& spec, const std::string& stem) {
    return render_table(rho.values, "patch", spec, stem);
}

void write_patch_grid_csv(const RhoTable& rho, std::size_t layer, std::ostream& out) {
    if (layer >= rho.layers())
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (L=" + std::to_string(rho.layers()) + ")");
    for (std::size_t r = 0; r < rho.grid.rows; ++r) {
        for (std::size_t c = 0; c < rho.grid.cols; ++c) {
            if (c) out << ',';
            out << format_double(rho.at(layer, r * rho.grid.cols + c));
        }
        out << '\n';
    }
}

std::string patch_highlights_json(const RhoTable& rho, std::size_t layer, double top_pct) {
    const auto top = top_patches(rho, layer, top_pct);
    ojson j;
    j["image"] = rho.image;
    j["layer"] = layer;
    j["top_pct"] = top_pct;
    j["grid"] = {{"rows", rho.grid.rows}, {"cols", rho.grid.cols}};
    ojson patches = ojson::array();
    for (const PatchScore& p : top) patches.push_back(ojson{{"row", p.row}, {"col", p.col}, {"rho", p.rho}});
    j["patches"] = std::move(patches);
    return dump_json(j);
}

std::vector<std::string> render_patch_map(const RhoTable& rho, std::size_t layer, double top_pct, const std::string& stem) {
    if (layer >= rho.layers())
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (L=" + std::to_string(rho.layers()) + ")");
    const std::string json_text = patch_highlights_json(rho, layer, top_pct);
    const std::string csv_path = stem + ".csv";
    const std::string json_path = stem + ".top.json";
    {
        auto out = open_output(csv_path);
        write_patch_grid_csv(rho, layer, out);
        finish(out, csv_path);
    }
    {
        auto out = open_output(json_path);
        out << json_text;
        finish(out, json_path);
    }
    return {csv_path, json_path};
}

std::string to_json(const ValidationReport& report, const std::string& sample_id) {
    ojson j;
    j["sample_id"] = sample_id;
    j["ok"] = report.ok();
    ojson list = ojson::array();
    for (const Violation& v : report.violations) {
        ojson e;
        e["kind"] = to_string(v.kind);
        e["message"] = v.message;
        if (v.kind == Violation::Kind::value_range) {
            e["layer"] = v.layer;
            e["head"] = v.head;
            e["row"] = v.row;
            e["col"] = v.col;
            e["value"] = std::isfinite(v.value) ? ojson(v.value) : ojson(format_double(v.value));
        }
        list.push_back(std::move(e));
    }
    j["violations"] = std::move(list);
    return dump_json(j);
}

std::string to_json(const EvalReport& report) {
    ojson j;
    j["overall"] = table_json(report.overall);
    ojson diff = ojson::object();
    for (const auto& [name, t] : report.by_difficulty) diff[name] = table_json(t);
    j["by_difficulty"] = std::move(diff);
    ojson task = ojson::object();
    for (const auto& [name, t] : report.by_task) task[name] = table_json(t);
    j["by_task"] = std::move(task);
    return dump_json(j);
}

std::string to_json(const SweepReport& report) {
    ojson j;
    j["requested_n_max"] = report.requested_n_max;
    j["n_max"] = report.n_max;
    j["lnd_mode"] = to_string(report.lnd_mode);
    ojson metrics = ojson::array();
    for (MetricKind m : report.metrics) metrics.push_back(to_string(m));
    j["metrics"] = std::move(metrics);
    ojson rows = ojson::array();
    for (std::size_t n = 0; n < report.rows.size(); ++n) {
        ojson row;
        row["n"] = n + 1;
        for (std::size_t m = 0; m < report.metrics.size(); ++m)
            row[to_string(report.metrics[m])] = ratio_json(report.rows[n][m]);
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    j["best"] = report.best ? config_json(*report.best) : ojson(nullptr);
    j["warnings"] = report.warnings;
    return dump_json(j);
}

std::string to_json(const QuadrantReport& report) {
    ojson j;
    j["config"] = config_json(report.config);
    j["labeled"] = report.labeled;
    j["quadrants"] = {
        {"answer_correct_attention_correct", report.answer_right_attention_right},
        {"answer_correct_attention_incorrect", report.answer_right_attention_wrong},
        {"answer_incorrect_attention_correct", report.answer_wrong_attention_right},
        {"answer_incorrect_attention_incorrect", report.answer_wrong_attention_wrong},
    };
    j["attention_accuracy_answer_correct"] = ratio_json(report.answer_correct_attention);
    j["attention_accuracy_answer_incorrect"] = ratio_json(report.answer_incorrect_attention);
    return dump_json(j);
}

std::string to_json(const ShuffleReport& report) {
    ojson j;
    j["config"] = config_json(report.config);
    ojson groups = ojson::array();
    for (const ShuffleGroupReport& g : report.groups) {
        ojson jg;
        jg["group"] = g.group;
        ojson runs = ojson::array();
        for (const ShuffleRun& r : g.runs)
            runs.push_back(ojson{{"shuffle_seed", r.shuffle_seed},
                                 {"samples", r.samples},
                                 {"attention_accuracy", ratio_json(r.attention)},
                                 {"answer_accuracy", ratio_json(r.answer)}});
        jg["runs"] = std::move(runs);
        jg["attention_accuracy"] = stats_json(g.attention);
        jg["answer_accuracy"] = stats_json(g.answer);
        groups.push_back(std::move(jg));
    }
    j["groups"] = std::move(groups);
    return dump_json(j);
}

std::string to_json(const SubsetReport& report) {
    ojson j;
    j["tag"] = report.tag;
    j["config"] = config_json(report.config);
    j["attention_accuracy"] = ratio_json(report.attention);
    return dump_json(j);
}

std::string analysis_json(const SampleManifest& manifest, const SigmaTable& sigma,
                          const std::vector<MetricVerdict>& verdicts) {
    ojson j;
    j["sample_id"] = manifest.sample_id;
    j["target_image"] = manifest.target_image_index;
    j["answer_correct"] = manifest.answer_correct ? ojson(*manifest.answer_correct) : ojson(nullptr);
    ojson table = ojson::array();
    for (std::size_t l = 0; l < sigma.layers(); ++l) {
        ojson row = ojson::array();
        for (double v : sigma.row(l)) row.push_back(v);
        table.push_back(std::move(row));
    }
    j["sigma"] = std::move(table);
    ojson focus = ojson::array();
    for (std::size_t l = 0; l < sigma.layers(); ++l) focus.push_back(layer_focused_image(sigma, l));
    j["layer_focused"] = std::move(focus);
    ojson list = ojson::array();
    for (const MetricVerdict& v : verdicts) {
        ojson e = config_json(v.config);
        e["predicted_image"] = v.predicted_image;
        e["attention_correct"] = v.attention_correct;
        list.push_back(std::move(e));
    }
    j["verdicts"] = std::move(list);
    return dump_json(j);
}

std::string to_text(const ValidationReport& report, const std::string& sample_id) {
    std::ostringstream out;
    out << sample_id << ": " << (report.ok() ? "ok" : std::to_string(report.violations.size()) + " violation(s)") << "\n";
    for (const Violation& v : report.violations) out << "  " << v.message << "\n";
    return out.str();
}

std::string to_text(const EvalReport& report) {
    std::ostringstream out;
    out << "overall\n";
    table_text(out, report.overall, "  ");
    for (const auto& [name, t] : report.by_difficulty) {
        out << "difficulty " << name << "\n";
        table_text(out, t, "  ");
    }
    for (const auto& [name, t] : report.by_task) {
        out << "task " << name << "\n";
        table_text(out, t, "  ");
    }
    return out.str();
}

std::string to_text(const SweepReport& report) {
    std::ostringstream out;
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    out << pad("N", 5);
    for (MetricKind m : report.metrics) out << pad(to_string(m), 22);
    out << "\n";
    for (std::size_t n = 0; n < report.rows.size(); ++n) {
        out << pad(std::to_string(n + 1), 5);
        for (std::size_t m = 0; m < report.metrics.size(); ++m) {
            std::string cell = ratio_text(report.rows[n][m]);
            if (report.best && report.best->n == n + 1 && report.best->metric == report.metrics[m]) cell += " *";
            out << pad(cell, 22);
        }
        out << "\n";
    }
    out << "best: " << (report.best ? describe(*report.best) : std::string("undefined")) << "\n";
    return out.str();
}

std::string to_text(const QuadrantReport& report) {
    std::ostringstream out;
    out << "config " << describe(report.config) << ", labeled samples " << report.labeled << "\n";
    out << pad("", 20) << pad("attention ok", 16) << "attention wrong\n";
    out << pad("answer correct", 20) << pad(std::to_string(report.answer_right_attention_right), 16)
        << report.answer_right_attention_wrong << "\n";
    out << pad("answer incorrect", 20) << pad(std::to_string(report.answer_wrong_attention_right), 16)
        << report.answer_wrong_attention_wrong << "\n";
    out << "attention accuracy (answer correct)    " << ratio_text(report.answer_correct_attention) << "\n";
    out << "attention accuracy (answer incorrect)  " << ratio_text(report.answer_incorrect_attention) << "\n";
    return out.str();
}

std::string to_text(const ShuffleReport& report) {
    std::ostringstream out;
    out << "config " << describe(report.config) << "\n";
    auto stats = [](const SeriesStats& s) {
        return "mean " + fixed4(s.mean) + "  sample-std " + (s.stddev ? fixed4(s.stddev) : std::string("n/a")) +
               "  min " + fixed4(s.min) + "  max " + fixed4(s.max);
    };
    for (const ShuffleGroupReport& g : report.groups) {
        out << "group " << g.group << " (" << g.runs.size() << " shuffles)\n";
        for (const ShuffleRun& r : g.runs)
            out << "  seed " << pad(std::to_string(r.shuffle_seed), 6) << "attention " << pad(ratio_text(r.attention), 20)
                << "answer " << ratio_text(r.answer) << "\n";
        out << "  attention  " << stats(g.attention) << "\n";
        out << "  answer     " << stats(g.answer) << "\n";
    }
    return out.str();
}

std::string to_text(const SubsetReport& report) {
    return "tag " + report.tag + ", config " + describe(report.config) + ": attention accuracy " +
           ratio_text(report.attention) + "\n";
}

std::string analysis_text(const SampleManifest& manifest, const SigmaTable& sigma,
                          const std::vector<MetricVerdict>& verdicts) {
    std::ostringstream out;
    out << "sample " << manifest.sample_id << ", target image " << manifest.target_image_index << "\n";
    out << pad("layer", 7);
    for (std::size_t i = 0; i < sigma.images(); ++i) out << pad("image_" + std::to_string(i), 12);
    out << "focus\n";
    for (std::size_t l = 0; l < sigma.layers(); ++l) {
        out << pad(std::to_string(l), 7);
        for (double v : sigma.row(l)) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            out << pad(buf, 12);
        }
        out << layer_focused_image(sigma, l) << "\n";
    }
    for (const MetricVerdict& v : verdicts)
        out << pad(describe(v.config), 26) << "-> image " << v.predicted_image
            << (v.attention_correct ? "  correct" : "  wrong") << "\n";
    return out.str();
}

}  // namespace attnacc
