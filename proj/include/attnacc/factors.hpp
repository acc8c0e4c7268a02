#pragma once

// Image-attention factors (sigma) and patch-attention factors (rho).
//
// sigma[l][i] is the mean post-softmax attention from every query row onto
// the columns of image i at layer l, averaged over heads:
//
//     sigma[l][i] = 1/H * sum_h  1/(R * n_i) * sum_rows sum_{c in image i} A[l][h][row][c]
//
// rho[l][n] restricts the same mean to the single column of patch n, so
// sigma[l][i] equals the average of rho[l][.] over the patches of image i.
//
// Each kernel has an OpenMP version (parallel over layers) and a serial
// reference. Both sum in the same order inside a layer, so their results are
// bit-identical regardless of thread count.

#include "attnacc/sample.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace attnacc {

/// Dense layers x cols table of doubles.
class LayerTable {
public:
    LayerTable() = default;
    LayerTable(std::size_t layers, std::size_t cols) : layers_(layers), cols_(cols), values_(layers * cols, 0.0) {}

    std::size_t layers() const noexcept { return layers_; }
    std::size_t cols() const noexcept { return cols_; }
    double at(std::size_t layer, std::size_t col) const noexcept { return values_[layer * cols_ + col]; }
    double& at(std::size_t layer, std::size_t col) noexcept { return values_[layer * cols_ + col]; }
    std::span<const double> row(std::size_t layer) const noexcept {
        return std::span<const double>(values_).subspan(layer * cols_, cols_);
    }
    std::span<double> row(std::size_t layer) noexcept { return std::span<double>(values_).subspan(layer * cols_, cols_); }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const LayerTable&, const LayerTable&) = default;

private:
    std::size_t layers_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// sigma per (layer, image).
class SigmaTable : public LayerTable {
public:
    using LayerTable::LayerTable;
    std::size_t images() const noexcept { return cols(); }
};

/// rho per (layer, patch) for one image.
struct RhoTable {
    std::size_t image = 0;
    PatchGrid grid;
    LayerTable values;

    std::size_t layers() const noexcept { return values.layers(); }
    std::size_t patches() const noexcept { return values.cols(); }
    double at(std::size_t layer, std::size_t patch) const noexcept { return values.at(layer, patch); }
};

SigmaTable image_attention_factors(const AttentionDump& dump, const ColumnMap& cmap);
SigmaTable image_attention_factors_serial(const AttentionDump& dump, const ColumnMap& cmap);

/// Throws UnsupportedError when image `image` has no patch grid.
RhoTable patch_attention_factors(const AttentionDump& dump, const ColumnMap& cmap, std::size_t image);
RhoTable patch_attention_factors_serial(const AttentionDump& dump, const ColumnMap& cmap, std::size_t image);

/// Image-to-image variant: anchor-image query rows against candidate images.
/// Same arithmetic as image_attention_factors; throws UnsupportedError unless
/// the column map comes from an image-image manifest.
SigmaTable anchor_image_factors(const AttentionDump& dump, const ColumnMap& cmap);

/// Dispatches to anchor_image_factors or image_attention_factors by mode.
SigmaTable sample_factors(const AttentionDump& dump, const ColumnMap& cmap);

struct PatchScore {
    std::size_t patch = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    double rho = 0.0;

    friend bool operator==(const PatchScore&, const PatchScore&) = default;
};

/// Number of patches selected by a top-percentage cut: ceil(top_pct/100 * n).
std::size_t top_patch_count(std::size_t patches, double top_pct);

/// The ceil(top_pct% of n_i) patches with the largest rho at `layer`, sorted
/// by descending rho, ties to the lower patch index. Requires 0 < top_pct <= 100.
std::vector<PatchScore> top_patches(const RhoTable& rho, std::size_t layer, double top_pct);

}  // namespace attnacc
