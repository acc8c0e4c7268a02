#pragma once

// Heatmap and report output. CSV numbers use the shortest decimal form that
// parses back to the same double; PGM output is binary P5 with maxval 255.

#include "attnacc/factors.hpp"
#include "attnacc/harness.hpp"
#include "attnacc/metrics.hpp"
#include "attnacc/sample.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace attnacc {

enum class Normalization { global_minmax, per_layer_minmax };
enum class HeatmapOutput { csv, pgm, both };

const char* to_string(Normalization n) noexcept;
std::optional<Normalization> normalization_from_string(std::string_view text) noexcept;
std::optional<HeatmapOutput> heatmap_output_from_string(std::string_view text) noexcept;

struct HeatmapSpec {
    Normalization normalization = Normalization::global_minmax;
    HeatmapOutput output = HeatmapOutput::csv;
};

/// Shortest round-trip decimal representation.
std::string format_double(double value);

/// Affine map of the table onto [0, 1], globally or per layer.
/// A constant range maps to 0.5.
LayerTable normalize(const LayerTable& table, Normalization normalization);

/// `layer,<prefix>_0,...` header then one row per layer.
void write_table_csv(const LayerTable& table, const std::string& column_prefix, std::ostream& out);
/// Parses a table written by write_table_csv.
LayerTable read_table_csv(std::istream& in);

/// One pixel per (layer, column): width = columns, height = layers.
void write_pgm(const LayerTable& table, Normalization normalization, std::ostream& out);

/// Writes `<stem>.csv` and/or `<stem>.pgm`; returns the paths written.
std::vector<std::string> render_sigma_heatmap(const SigmaTable& sigma, const HeatmapSpec& spec, const std::string& stem);
/// Layers x patches heatmap of one image.
std::vector<std::string> render_rho_heatmap(const RhoTable& rho, const HeatmapSpec& spec, const std::string& stem);

/// grid.rows lines of grid.cols values for one layer.
void write_patch_grid_csv(const RhoTable& rho, std::size_t layer, std::ostream& out);
/// {"image","layer","top_pct","patches":[{"row","col","rho"}...]} sorted by descending rho.
std::string patch_highlights_json(const RhoTable& rho, std::size_t layer, double top_pct);
/// Writes `<stem>.csv` (grid) and `<stem>.top.json`. Throws std::out_of_range for a bad layer.
std::vector<std::string> render_patch_map(const RhoTable& rho, std::size_t layer, double top_pct, const std::string& stem);

// Report serialization. JSON is compact with a fixed field order and a
// trailing newline; text is aligned columns for humans.
std::string to_json(const ValidationReport& report, const std::string& sample_id);
std::string to_json(const EvalReport& report);
std::string to_json(const SweepReport& report);
std::string to_json(const QuadrantReport& report);
std::string to_json(const ShuffleReport& report);
std::string to_json(const SubsetReport& report);
std::string analysis_json(const SampleManifest& manifest, const SigmaTable& sigma,
                          const std::vector<MetricVerdict>& verdicts);

std::string to_text(const ValidationReport& report, const std::string& sample_id);
std::string to_text(const EvalReport& report);
std::string to_text(const SweepReport& report);
std::string to_text(const QuadrantReport& report);
std::string to_text(const ShuffleReport& report);
std::string to_text(const SubsetReport& report);
std::string analysis_text(const SampleManifest& manifest, const SigmaTable& sigma,
                          const std::vector<MetricVerdict>& verdicts);

}  // namespace attnacc
