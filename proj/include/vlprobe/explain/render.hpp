#pragma once

#include <cstddef>
#include <filesystem>

#include "vlprobe/core/visual.hpp"
#include "vlprobe/explain/relevancy.hpp"

namespace vlprobe::explain {

struct HeatmapFiles {
  std::filesystem::path raster;  // binary PPM (P6)
  std::filesystem::path tokens;  // token<TAB>score lines
};

// ROI scores become filled boxes on a black canvas, brighter for higher
// relevancy; where boxes overlap the larger score wins. Text scores go to a
// plain `token<TAB>score` file. Writes `<stem>.ppm` and `<stem>.tsv`.
HeatmapFiles render_heatmap(const RelevancyMap& map, const VisualInput& image, const std::filesystem::path& dir,
                            const std::string& stem, std::size_t width = 256, std::size_t height = 256);

}  // namespace vlprobe::explain
