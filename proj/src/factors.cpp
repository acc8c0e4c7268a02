#include "attnacc/factors.hpp"

#include "attnacc/error.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace attnacc {

namespace {

void check_shape(const AttentionDump& dump, const ColumnMap& cmap) {
    const DumpShape& s = dump.shape();
    if (s.rows != cmap.rows || s.cols != cmap.cols)
        throw std::invalid_argument("dump shape (" + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                                    ") does not match column map (" + std::to_string(cmap.rows) + "x" +
                                    std::to_string(cmap.cols) + ")");
}

// sigma for one layer. Summation order is fixed: head, row, image, column.
void sigma_layer(const AttentionDump& dump, const ColumnMap& cmap, std::size_t layer, std::span<double> out) {
    const DumpShape& s = dump.shape();
    const std::size_t k = cmap.num_images();
    std::vector<double> head_sum(k);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t h = 0; h < s.heads; ++h) {
        std::fill(head_sum.begin(), head_sum.end(), 0.0);
        const auto m = dump.matrix(layer, h);
        for (std::size_t r = 0; r < s.rows; ++r) {
            const float* row = m.data() + r * s.cols;
            for (std::size_t i = 0; i < k; ++i) {
                const ImageColumns& img = cmap.images[i];
                double acc = 0.0;
                for (std::size_t c = img.first; c < img.end(); ++c) acc += row[c];
                head_sum[i] += acc;
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            assert(cmap.images[i].width > 0);
            out[i] += head_sum[i] / (static_cast<double>(s.rows) * static_cast<double>(cmap.images[i].width));
        }
    }
    for (double& v : out) v /= static_cast<double>(s.heads);
}

// rho for one layer. Summation order is fixed: head, row, patch.
void rho_layer(const AttentionDump& dump, const ImageColumns& img, std::size_t layer, std::span<double> out) {
    const DumpShape& s = dump.shape();
    std::vector<double> head_sum(img.width);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t h = 0; h < s.heads; ++h) {
        std::fill(head_sum.begin(), head_sum.end(), 0.0);
        const auto m = dump.matrix(layer, h);
        for (std::size_t r = 0; r < s.rows; ++r) {
            const float* row = m.data() + r * s.cols + img.first;
            for (std::size_t n = 0; n < img.width; ++n) head_sum[n] += row[n];
        }
        for (std::size_t n = 0; n < img.width; ++n) out[n] += head_sum[n] / static_cast<double>(s.rows);
    }
    for (double& v : out) v /= static_cast<double>(s.heads);
}

const ImageColumns& patch_image(const ColumnMap& cmap, std::size_t image) {
    if (image >= cmap.num_images())
        throw std::out_of_range("image " + std::to_string(image) + " out of range (k=" +
                                std::to_string(cmap.num_images()) + ")");
    const ImageColumns& img = cmap.images[image];
    if (!img.patch_grid)
        throw UnsupportedError("patch factors unsupported: image " + std::to_string(image) + " (span '" +
                               img.span_id + "') has no patch_grid");
    return img;
}

}  // namespace

SigmaTable image_attention_factors(const AttentionDump& dump, const ColumnMap& cmap) {
    check_shape(dump, cmap);
    const std::ptrdiff_t layers = dump.shape().layers;
    SigmaTable sigma(layers, cmap.num_images());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t l = 0; l < layers; ++l) sigma_layer(dump, cmap, l, sigma.row(l));
    return sigma;
}

SigmaTable image_attention_factors_serial(const AttentionDump& dump, const ColumnMap& cmap) {
    check_shape(dump, cmap);
    SigmaTable sigma(dump.shape().layers, cmap.num_images());
    for (std::size_t l = 0; l < dump.shape().layers; ++l) sigma_layer(dump, cmap, l, sigma.row(l));
    return sigma;
}

RhoTable patch_attention_factors(const AttentionDump& dump, const ColumnMap& cmap, std::size_t image) {
    check_shape(dump, cmap);
    const ImageColumns& img = patch_image(cmap, image);
    const std::ptrdiff_t layers = dump.shape().layers;
    RhoTable rho{image, *img.patch_grid, LayerTable(layers, img.width)};
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t l = 0; l < layers; ++l) rho_layer(dump, img, l, rho.values.row(l));
    return rho;
}

RhoTable patch_attention_factors_serial(const AttentionDump& dump, const ColumnMap& cmap, std::size_t image) {
    check_shape(dump, cmap);
    const ImageColumns& img = patch_image(cmap, image);
    RhoTable rho{image, *img.patch_grid, LayerTable(dump.shape().layers, img.width)};
    for (std::size_t l = 0; l < dump.shape().layers; ++l) rho_layer(dump, img, l, rho.values.row(l));
    return rho;
}

SigmaTable anchor_image_factors(const AttentionDump& dump, const ColumnMap& cmap) {
    if (cmap.mode != SampleMode::image_image)
        throw UnsupportedError("anchor image factors require an image-image sample (mode mismatch: got " +
                               std::string(to_string(cmap.mode)) + ")");
    return image_attention_factors(dump, cmap);
}

SigmaTable sample_factors(const AttentionDump& dump, const ColumnMap& cmap) {
    return cmap.mode == SampleMode::image_image ? anchor_image_factors(dump, cmap)
                                                : image_attention_factors(dump, cmap);
}

std::size_t top_patch_count(std::size_t patches, double top_pct) {
    if (!(top_pct > 0.0 && top_pct <= 100.0))
        throw std::invalid_argument("top_pct must be in (0, 100], got " + std::to_string(top_pct));
    // pct * n is exact for integral percentages, so exact multiples of 100 stay integral.
    const double wanted = std::ceil(top_pct * static_cast<double>(patches) / 100.0);
    return std::min(patches, static_cast<std::size_t>(wanted));
}

std::vector<PatchScore> top_patches(const RhoTable& rho, std::size_t layer, double top_pct) {
    if (layer >= rho.layers())
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (L=" +
                                std::to_string(rho.layers()) + ")");
    const std::size_t count = top_patch_count(rho.patches(), top_pct);
    std::vector<PatchScore> scores(rho.patches());
    for (std::size_t n = 0; n < scores.size(); ++n)
        scores[n] = PatchScore{n, n / rho.grid.cols, n % rho.grid.cols, rho.at(layer, n)};
    auto by_rank = [](const PatchScore& a, const PatchScore& b) {
        if (a.rho != b.rho) return a.rho > b.rho;
        return a.patch < b.patch;
    };
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(count), scores.end(), by_rank);
    scores.resize(count);
    return scores;
}

}  // namespace attnacc
