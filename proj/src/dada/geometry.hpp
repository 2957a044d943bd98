#pragma once

#include <string>
#include <vector>

namespace dada {

/// Axis-aligned rectangle in pixel units, half-open: [x1, x2) x [y1, y2).
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  bool well_formed() const { return x1 < x2 && y1 < y2; }
  bool inside(int height_px, int width_px) const {
    return x1 >= 0 && y1 >= 0 && x2 <= width_px && y2 <= height_px;
  }
  bool operator==(const Box&) const = default;
};

/// Integer pixel rectangle used for annotations, masks and attack regions.
struct PixelBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Box to_box() const { return {double(x1), double(y1), double(x2), double(y2)}; }
  int area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const PixelBox&) const = default;
};

double iou(const Box& a, const Box& b);
inline double iou(const PixelBox& a, const PixelBox& b) { return iou(a.to_box(), b.to_box()); }

/// Throws kInvalidArgument unless 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height.
void validate_box(const PixelBox& b, int height, int width);

std::string to_string(const PixelBox& b);

}  // namespace dada
