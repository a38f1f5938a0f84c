#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sgnet/attention.hpp"

namespace sgnet {

enum class HeatmapFormat { kCsv, kSvg };

HeatmapFormat heatmap_format_from_string(std::string_view s);

/// head,row,col,weight for every cell of every head.
template <typename T>
std::string heatmap_csv(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens);

/// One grid per head with token labels on both axes. Zero-weight cells are
/// white.
template <typename T>
std::string heatmap_svg(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens);

/// Writes the trace to `path`; throws std::runtime_error on I/O failure.
template <typename T>
void export_heatmap(const AttentionTrace<T>& trace, const std::vector<std::string>& tokens, HeatmapFormat format,
                    const std::string& path);

}  // namespace sgnet
