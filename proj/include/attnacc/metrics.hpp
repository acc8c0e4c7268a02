#pragma once

// Focused-image selection over the last N layers of a sigma table.
//
//   LND     layer-focused image of one layer taken from the last N
//   M-LND   argmax of sigma averaged over the last N layers
//   MC-LND  image that is layer-focused most often within the last N layers
//
// Every argmax breaks ties toward the lowest image index.

#include "attnacc/factors.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace attnacc {

enum class MetricKind { lnd, m_lnd, mc_lnd };

/// How LND turns "the last N layers" into one prediction.
enum class LndMode {
    nth_from_last,        // the single layer L-N
    unanimous_else_last,  // the common choice if the last N layers agree, else the last layer's
};

const char* to_string(MetricKind metric) noexcept;
const char* to_string(LndMode mode) noexcept;
std::optional<MetricKind> metric_from_string(std::string_view text) noexcept;
std::optional<LndMode> lnd_mode_from_string(std::string_view text) noexcept;

inline constexpr MetricKind kAllMetrics[] = {MetricKind::lnd, MetricKind::m_lnd, MetricKind::mc_lnd};

struct MetricConfig {
    MetricKind metric = MetricKind::m_lnd;
    std::size_t n = 1;
    LndMode lnd_mode = LndMode::nth_from_last;

    friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

std::string describe(const MetricConfig& config);

/// Every metric for N = 1..n_max, ordered by N then metric.
std::vector<MetricConfig> full_grid(std::size_t n_max, LndMode lnd_mode = LndMode::nth_from_last);

struct MetricVerdict {
    std::string sample_id;
    MetricConfig config;
    std::size_t predicted_image = 0;
    std::size_t target_image = 0;
    bool attention_correct = false;
    std::optional<bool> answer_correct;
};

std::size_t layer_focused_image(const SigmaTable& sigma, std::size_t layer);
std::size_t lnd(const SigmaTable& sigma, std::size_t n, LndMode mode = LndMode::nth_from_last);
std::size_t m_lnd(const SigmaTable& sigma, std::size_t n);
std::size_t mc_lnd(const SigmaTable& sigma, std::size_t n);

/// Predicted image under one configuration. Throws std::out_of_range unless 1 <= N <= L.
std::size_t focused_image(const SigmaTable& sigma, const MetricConfig& config);

/// One verdict per grid cell; attention_correct iff predicted == target.
std::vector<MetricVerdict> model_focused_verdicts(const SigmaTable& sigma, std::size_t target_image,
                                                  const std::vector<MetricConfig>& grid,
                                                  const std::string& sample_id = {},
                                                  std::optional<bool> answer_correct = std::nullopt);

}  // namespace attnacc
