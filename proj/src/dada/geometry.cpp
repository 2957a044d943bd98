#include "dada/geometry.hpp"

#include <algorithm>

#include "dada/error.hpp"

namespace dada {

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

void validate_box(const PixelBox& b, int height, int width) {
  if (!(b.x1 < b.x2 && b.y1 < b.y2))
    fail(ErrorKind::kInvalidArgument, "degenerate box " + to_string(b));
  if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height)
    fail(ErrorKind::kInvalidArgument, "box " + to_string(b) + " outside " +
                                          std::to_string(width) + "x" + std::to_string(height));
}

std::string to_string(const PixelBox& b) {
  return "(" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," + std::to_string(b.x2) +
         "," + std::to_string(b.y2) + ")";
}

}  // namespace dada
