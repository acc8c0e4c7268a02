#include "attnacc/metrics.hpp"

#include <stdexcept>

namespace attnacc {

namespace {

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

void check_n(const SigmaTable& sigma, std::size_t n) {
    if (n == 0 || n > sigma.layers())
        throw std::out_of_range("N must be in 1.." + std::to_string(sigma.layers()) + " (number of layers), got " +
                                std::to_string(n));
    if (sigma.images() == 0) throw std::invalid_argument("sigma table has no images");
}

}  // namespace

const char* to_string(MetricKind metric) noexcept {
    switch (metric) {
        case MetricKind::lnd: return "LND";
        case MetricKind::m_lnd: return "M-LND";
        case MetricKind::mc_lnd: return "MC-LND";
    }
    return "unknown";
}

const char* to_string(LndMode mode) noexcept {
    return mode == LndMode::nth_from_last ? "nth-from-last" : "unanimous-else-last";
}

std::optional<MetricKind> metric_from_string(std::string_view text) noexcept {
    for (MetricKind m : kAllMetrics)
        if (text == to_string(m)) return m;
    return std::nullopt;
}

std::optional<LndMode> lnd_mode_from_string(std::string_view text) noexcept {
    if (text == "nth-from-last") return LndMode::nth_from_last;
    if (text == "unanimous-else-last") return LndMode::unanimous_else_last;
    return std::nullopt;
}

std::string describe(const MetricConfig& config) {
    std::string s = std::string(to_string(config.metric)) + "@N=" + std::to_string(config.n);
    if (config.metric == MetricKind::lnd && config.lnd_mode != LndMode::nth_from_last)
        s += " (" + std::string(to_string(config.lnd_mode)) + ")";
    return s;
}

std::vector<MetricConfig> full_grid(std::size_t n_max, LndMode lnd_mode) {
    std::vector<MetricConfig> grid;
    for (std::size_t n = 1; n <= n_max; ++n)
        for (MetricKind m : kAllMetrics) grid.push_back(MetricConfig{m, n, lnd_mode});
    return grid;
}

std::size_t layer_focused_image(const SigmaTable& sigma, std::size_t layer) {
    if (layer >= sigma.layers())
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (L=" +
                                std::to_string(sigma.layers()) + ")");
    return argmax(sigma.row(layer));
}

std::size_t lnd(const SigmaTable& sigma, std::size_t n, LndMode mode) {
    check_n(sigma, n);
    const std::size_t layers = sigma.layers();
    if (mode == LndMode::nth_from_last) return layer_focused_image(sigma, layers - n);

    // A unanimous choice necessarily equals the last layer's, so both branches
    // of unanimous-else-last resolve to the last layer.
    return layer_focused_image(sigma, layers - 1);
}

std::size_t m_lnd(const SigmaTable& sigma, std::size_t n) {
    check_n(sigma, n);
    std::vector<double> mean(sigma.images(), 0.0);
    for (std::size_t l = sigma.layers() - n; l < sigma.layers(); ++l)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += sigma.at(l, i);
    for (double& v : mean) v /= static_cast<double>(n);
    return argmax(mean);
}

std::size_t mc_lnd(const SigmaTable& sigma, std::size_t n) {
    check_n(sigma, n);
    std::vector<double> count(sigma.images(), 0.0);
    for (std::size_t l = sigma.layers() - n; l < sigma.layers(); ++l) count[layer_focused_image(sigma, l)] += 1.0;
    return argmax(count);
}

std::size_t focused_image(const SigmaTable& sigma, const MetricConfig& config) {
    switch (config.metric) {
        case MetricKind::lnd: return lnd(sigma, config.n, config.lnd_mode);
        case MetricKind::m_lnd: return m_lnd(sigma, config.n);
        case MetricKind::mc_lnd: return mc_lnd(sigma, config.n);
    }
    throw std::invalid_argument("unknown metric");
}

std::vector<MetricVerdict> model_focused_verdicts(const SigmaTable& sigma, std::size_t target_image,
                                                  const std::vector<MetricConfig>& grid,
                                                  const std::string& sample_id, std::optional<bool> answer_correct) {
    if (grid.empty()) throw std::invalid_argument("metric grid is empty");
    std::vector<MetricVerdict> verdicts;
    verdicts.reserve(grid.size());
    for (const MetricConfig& config : grid) {
        const std::size_t predicted = focused_image(sigma, config);
        verdicts.push_back(
            MetricVerdict{sample_id, config, predicted, target_image, predicted == target_image, answer_correct});
    }
    return verdicts;
}

}  // namespace attnacc
