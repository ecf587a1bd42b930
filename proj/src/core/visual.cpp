#include "vlprobe/core/visual.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "vlprobe/error.hpp"

namespace vlprobe {

namespace {

class FieldReader {
 public:
  explicit FieldReader(std::string_view line) : line_(line) {}

  std::string_view next() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r')) ++pos_;
    std::size_t start = pos_;
    while (pos_ < line_.size() && line_[pos_] != ' ' && line_[pos_] != '\t' && line_[pos_] != '\r') ++pos_;
    return line_.substr(start, pos_ - start);
  }

  bool done() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r')) ++pos_;
    return pos_ == line_.size();
  }

 private:
  std::string_view line_;
  std::size_t pos_ = 0;
};

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
  T value{};
  if (field.empty()) fail(ErrorKind::SchemaError, where + ": missing field");
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    fail(ErrorKind::SchemaError, where + ": bad number '" + std::string(field) + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) fail(ErrorKind::SchemaError, where + ": non-finite number");
  }
  return value;
}

template <typename T>
void put_number(std::ostream& out, T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.write(buf, ptr - buf);
}

}  // namespace

bool BBox::valid() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 < x2 && y1 < y2;
}

bool intersects(const BBox& a, const BBox& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return w > 0.0 && h > 0.0;
}

void VisualInput::validate() const {
  if (rois.empty()) fail(ErrorKind::SchemaError, "image " + image_id + ": no ROIs");
  const std::size_t dim = rois.front().feature.size();
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const auto& r = rois[i];
    const std::string where = "image " + image_id + " roi " + std::to_string(i);
    if (r.feature.size() != dim) fail(ErrorKind::SchemaError, where + ": feature dim mismatch");
    if (!r.bbox.valid()) fail(ErrorKind::SchemaError, where + ": invalid bbox");
    if (!(r.score >= 0.0 && r.score <= 1.0)) fail(ErrorKind::SchemaError, where + ": score outside [0,1]");
    if (r.label.empty() || std::any_of(r.label.begin(), r.label.end(), [](unsigned char c) { return std::isspace(c); }))
      fail(ErrorKind::SchemaError, where + ": label must be one nonempty token");
  }
}

VisualInput read_roi_features(std::istream& in, std::string image_id) {
  VisualInput image;
  image.image_id = std::move(image_id);
  std::string line;
  const std::string name = "roi file " + image.image_id;
  if (!std::getline(in, line)) fail(ErrorKind::SchemaError, name + ": missing header");
  FieldReader header(line);
  const auto dim = parse_number<std::size_t>(header.next(), name + " header");
  const auto n = parse_number<std::size_t>(header.next(), name + " header");
  if (!header.done()) fail(ErrorKind::SchemaError, name + ": trailing header fields");
  if (dim == 0) fail(ErrorKind::SchemaError, name + ": zero feature dim");
  image.rois.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = name + " roi " + std::to_string(i);
    if (!std::getline(in, line)) fail(ErrorKind::SchemaError, where + ": missing line");
    FieldReader fields(line);
    RoiFeature roi;
    roi.bbox.x1 = parse_number<double>(fields.next(), where);
    roi.bbox.y1 = parse_number<double>(fields.next(), where);
    roi.bbox.x2 = parse_number<double>(fields.next(), where);
    roi.bbox.y2 = parse_number<double>(fields.next(), where);
    roi.score = parse_number<double>(fields.next(), where);
    roi.label = std::string(fields.next());
    if (roi.label.empty()) fail(ErrorKind::SchemaError, where + ": missing label");
    roi.feature.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) roi.feature[k] = parse_number<float>(fields.next(), where);
    if (!fields.done()) fail(ErrorKind::SchemaError, where + ": feature dim mismatch (extra values)");
    image.rois.push_back(std::move(roi));
  }
  while (std::getline(in, line)) {
    if (!FieldReader(line).done()) fail(ErrorKind::SchemaError, name + ": trailing data after " + std::to_string(n) + " ROIs");
  }
  image.validate();
  return image;
}

VisualInput load_roi_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return read_roi_features(in, path.stem().string());
}

void write_roi_features(std::ostream& out, const VisualInput& image) {
  image.validate();
  out << image.feature_dim() << ' ' << image.rois.size() << '\n';
  for (const auto& r : image.rois) {
    for (double v : {r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2, r.score}) {
      put_number(out, v);
      out << ' ';
    }
    out << r.label;
    for (float f : r.feature) {
      out << ' ';
      put_number(out, f);
    }
    out << '\n';
  }
}

void save_roi_features(const std::filesystem::path& path, const VisualInput& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  write_roi_features(out, image);
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace vlprobe
