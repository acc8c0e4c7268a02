#include "attnacc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace attnacc::oracle {

namespace {

struct Block {
    std::size_t first;
    std::size_t width;
};

std::vector<Block> key_blocks(const SampleManifest& manifest) {
    std::vector<Block> blocks;
    std::size_t col = 0;
    for (const std::string& id : manifest.key_span_ids)
        for (const Span& s : manifest.spans)
            if (s.id == id) {
                blocks.push_back({col, s.end - s.start});
                col += s.end - s.start;
            }
    return blocks;
}

std::size_t row_count(const SampleManifest& manifest) {
    std::size_t rows = 0;
    for (const std::string& id : manifest.query_span_ids)
        for (const Span& s : manifest.spans)
            if (s.id == id) rows += s.end - s.start;
    return rows;
}

double value(const AttentionDump& dump, std::size_t l, std::size_t h, std::size_t r, std::size_t c) {
    const DumpShape& s = dump.shape();
    return dump.values()[l * s.heads * s.rows * s.cols + h * s.rows * s.cols + r * s.cols + c];
}

// Index for the i-th step of a loop of length n, optionally walked backwards.
std::size_t step(std::size_t i, std::size_t n, bool reversed) { return reversed ? n - 1 - i : i; }

}  // namespace

Table sigma(const AttentionDump& dump, const SampleManifest& manifest, bool reversed) {
    const DumpShape& s = dump.shape();
    const auto blocks = key_blocks(manifest);
    const std::size_t rows = row_count(manifest);
    if (rows != s.rows) throw std::invalid_argument("oracle: row count mismatch");
    Table out(s.layers, std::vector<double>(blocks.size(), 0.0));
    for (std::size_t l = 0; l < s.layers; ++l)
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            double total = 0.0;
            for (std::size_t hi = 0; hi < s.heads; ++hi)
                for (std::size_t ri = 0; ri < rows; ++ri)
                    for (std::size_t ci = 0; ci < blocks[i].width; ++ci)
                        total += value(dump, l, step(hi, s.heads, reversed), step(ri, rows, reversed),
                                       blocks[i].first + step(ci, blocks[i].width, reversed));
            out[l][i] = total / (double(s.heads) * double(rows) * double(blocks[i].width));
        }
    return out;
}

Table rho(const AttentionDump& dump, const SampleManifest& manifest, std::size_t image) {
    const DumpShape& s = dump.shape();
    const auto blocks = key_blocks(manifest);
    const std::size_t rows = row_count(manifest);
    const Block b = blocks.at(image);
    Table out(s.layers, std::vector<double>(b.width, 0.0));
    for (std::size_t l = 0; l < s.layers; ++l)
        for (std::size_t n = 0; n < b.width; ++n) {
            double total = 0.0;
            for (std::size_t h = 0; h < s.heads; ++h)
                for (std::size_t r = 0; r < rows; ++r) total += value(dump, l, h, r, b.first + n);
            out[l][n] = total / (double(s.heads) * double(rows));
        }
    return out;
}

std::size_t focus(const Table& sigma, const std::string& metric, std::size_t n, bool unanimous) {
    const std::size_t layers = sigma.size();
    if (n == 0 || n > layers) throw std::out_of_range("oracle: bad N");
    const std::size_t k = sigma.front().size();

    // Layer winners: first image whose value is not exceeded by any other.
    std::vector<std::size_t> winner(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t i = 0; i < k; ++i) {
            bool is_max = true;
            for (std::size_t j = 0; j < k; ++j)
                if (sigma[l][j] > sigma[l][i]) is_max = false;
            if (is_max) {
                winner[l] = i;
                break;
            }
        }
    }

    if (metric == "LND") {
        if (!unanimous) return winner[layers - n];
        for (std::size_t l = layers - n; l < layers; ++l)
            if (winner[l] != winner[layers - 1]) return winner[layers - 1];
        return winner[layers - n];
    }
    if (metric == "M-LND") {
        std::vector<double> mean(k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t l = layers - n; l < layers; ++l) mean[i] += sigma[l][i];
            mean[i] /= double(n);
        }
        double best = mean[0];
        for (double v : mean) best = std::fmax(best, v);
        for (std::size_t i = 0; i < k; ++i)
            if (mean[i] == best) return i;
    }
    if (metric == "MC-LND") {
        std::size_t best_i = 0, best_count = 0;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t count = 0;
            for (std::size_t l = layers - n; l < layers; ++l) count += winner[l] == i;
            if (count > best_count) {
                best_count = count;
                best_i = i;
            }
        }
        return best_i;
    }
    throw std::invalid_argument("oracle: unknown metric " + metric);
}

namespace {

bool shared_max(const std::vector<double>& scores) {
    std::size_t at_max = 0;
    const double best = *std::max_element(scores.begin(), scores.end());
    for (double v : scores) at_max += v == best;
    return at_max > 1;
}

}  // namespace

bool tied(const Table& sigma, const std::string& metric, std::size_t n, bool unanimous) {
    const std::size_t layers = sigma.size();
    if (n == 0 || n > layers) throw std::out_of_range("oracle: bad N");
    const std::size_t k = sigma.front().size();
    if (metric == "LND") return shared_max(sigma[unanimous ? layers - 1 : layers - n]);
    if (metric == "M-LND") {
        std::vector<double> mean(k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t l = layers - n; l < layers; ++l) mean[i] += sigma[l][i];
            mean[i] /= double(n);
        }
        return shared_max(mean);
    }
    std::vector<double> count(k, 0.0);
    for (std::size_t l = layers - n; l < layers; ++l) {
        if (shared_max(sigma[l])) return true;
        count[focus(sigma, "LND", layers - l)] += 1.0;
    }
    return shared_max(count);
}

std::vector<std::size_t> top_patches(const std::vector<double>& rho_row, double top_pct) {
    const std::size_t n = rho_row.size();
    // Smallest count with count * 100 >= pct * n.
    std::size_t count = 0;
    while (double(count) * 100.0 < top_pct * double(n)) ++count;
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i] && (best == n || rho_row[i] > rho_row[best])) best = i;
        taken[best] = true;
        out.push_back(best);
    }
    return out;
}

}  // namespace attnacc::oracle
