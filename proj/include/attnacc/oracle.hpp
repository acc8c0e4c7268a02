#pragma once

// Brute-force reference computations for tests and the acceptance suite.
// Deliberately shares no code with the factors or metrics kernels: column
// offsets are recomputed from the manifest spans and every value is indexed
// straight out of the flat dump buffer.

#include "attnacc/sample.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace attnacc::oracle {

using Table = std::vector<std::vector<double>>;  // [layer][image or patch]

/// sigma by a single accumulator over (head, row, column) per (layer, image).
/// `reversed` walks every loop backwards.
Table sigma(const AttentionDump& dump, const SampleManifest& manifest, bool reversed = false);

/// rho for the image with the given image_index.
Table rho(const AttentionDump& dump, const SampleManifest& manifest, std::size_t image);

/// Focused image for metric name "LND", "M-LND" or "MC-LND" over the last n
/// layers; `unanimous` selects the unanimous-else-last LND reading.
std::size_t focus(const Table& sigma, const std::string& metric, std::size_t n, bool unanimous = false);

/// True when the decision behind focus() has more than one maximizing image,
/// so the lowest-index rule picks among equals.
bool tied(const Table& sigma, const std::string& metric, std::size_t n, bool unanimous = false);

/// Patch indices of the top selection by repeated linear max search.
std::vector<std::size_t> top_patches(const std::vector<double>& rho_row, double top_pct);

}  // namespace attnacc::oracle
