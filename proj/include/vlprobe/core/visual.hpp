#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vlprobe {

// Normalized box, 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const;
  bool operator==(const BBox&) const = default;
};

// True when the two boxes share a region of positive area. Boxes touching
// only along an edge or at a corner do not intersect.
bool intersects(const BBox& a, const BBox& b);

struct RoiFeature {
  BBox bbox;
  std::vector<float> feature;
  std::string label;
  double score = 0.0;

  bool operator==(const RoiFeature&) const = default;
};

struct VisualInput {
  std::string image_id;
  std::vector<RoiFeature> rois;

  std::size_t feature_dim() const { return rois.empty() ? 0 : rois.front().feature.size(); }
  // Throws SchemaError on an empty ROI set, mixed feature dims, an invalid
  // box, a score outside [0, 1] or a label containing whitespace.
  void validate() const;

  bool operator==(const VisualInput&) const = default;
};

// ROI feature text format:
//   d_v n_rois
//   x1 y1 x2 y2 score label f_1 ... f_{d_v}     (one line per ROI)
// Numbers are parsed and printed with std::from_chars / std::to_chars, so the
// result does not depend on the C locale and printing round-trips exactly.
VisualInput read_roi_features(std::istream& in, std::string image_id);
VisualInput load_roi_features(const std::filesystem::path& path);
void write_roi_features(std::ostream& out, const VisualInput& image);
void save_roi_features(const std::filesystem::path& path, const VisualInput& image);

}  // namespace vlprobe
