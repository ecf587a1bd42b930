#include "vlprobe/explain/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <vector>

#include "vlprobe/error.hpp"

namespace vlprobe::explain {

namespace {

// Black -> red -> yellow -> white.
void heat_color(double t, unsigned char* rgb) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [](double v) { return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
  rgb[0] = channel(3.0 * t);
  rgb[1] = channel(3.0 * t - 1.0);
  rgb[2] = channel(3.0 * t - 2.0);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

}  // namespace

HeatmapFiles render_heatmap(const RelevancyMap& map, const VisualInput& image, const std::filesystem::path& dir,
                            const std::string& stem, std::size_t width, std::size_t height) {
  if (map.roi_scores.size() != image.rois.size())
    fail(ErrorKind::ShapeError, "render: relevancy map and image disagree on the ROI count");
  if (width == 0 || height == 0) fail(ErrorKind::UsageError, "render: empty canvas");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

  const double top = map.roi_scores.empty() ? 0.0 : *std::max_element(map.roi_scores.begin(), map.roi_scores.end());
  std::vector<double> level(width * height, 0.0);
  for (std::size_t r = 0; r < image.rois.size(); ++r) {
    const auto& b = image.rois[r].bbox;
    const double v = top > 0.0 ? map.roi_scores[r] / top : 0.0;
    const auto x0 = static_cast<std::size_t>(std::floor(b.x1 * static_cast<double>(width)));
    const auto x1 = std::min(width, static_cast<std::size_t>(std::ceil(b.x2 * static_cast<double>(width))));
    const auto y0 = static_cast<std::size_t>(std::floor(b.y1 * static_cast<double>(height)));
    const auto y1 = std::min(height, static_cast<std::size_t>(std::ceil(b.y2 * static_cast<double>(height))));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) level[y * width + x] = std::max(level[y * width + x], v);
  }

  HeatmapFiles files{dir / (stem + ".ppm"), dir / (stem + ".tsv")};
  {
    auto out = open_out(files.raster);
    out << "P6\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> pixels(width * height * 3);
    for (std::size_t i = 0; i < level.size(); ++i) heat_color(level[i], &pixels[3 * i]);
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out.flush()) fail(ErrorKind::IoError, "write failed for " + files.raster.string());
  }
  {
    auto out = open_out(files.tokens);
    char buf[64];
    auto write_line = [&](const std::string& name, double score) {
      auto [end, ec2] = std::to_chars(buf, buf + sizeof buf, score);
      out << name << '\t' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
    };
    for (std::size_t i = 0; i < map.text_scores.size(); ++i)
      write_line(i < map.text_tokens.size() ? map.text_tokens[i] : "#" + std::to_string(i), map.text_scores[i]);
    for (std::size_t r = 0; r < map.roi_scores.size(); ++r)
      write_line("roi:" + std::to_string(r) + ":" + image.rois[r].label, map.roi_scores[r]);
    if (!out.flush()) fail(ErrorKind::IoError, "write failed for " + files.tokens.string());
  }
  return files;
}

}  // namespace vlprobe::explain
