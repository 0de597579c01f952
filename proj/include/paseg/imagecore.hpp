#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "paseg/errors.hpp"

namespace paseg {

// Pixel coordinate. x is the column, y is the row; both may be real-valued
// (annotation points land between grid positions after jitter).
struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline bool operator==(const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }
inline bool operator!=(const Point& a, const Point& b) { return !(a == b); }

// H x W grayscale field with intensities in [0,1]. Immutable after
// construction so it can be shared freely across workers.
class ImageGrid {
public:
    ImageGrid(int width, int height, std::vector<double> intensities);
    ImageGrid(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    double at(int x, int y) const { return values_[static_cast<size_t>(y) * width_ + x]; }
    const std::vector<double>& values() const { return values_; }

    double diagonal() const { return std::sqrt(double(width_) * width_ + double(height_) * height_); }
    bool contains(const Point& p) const {
        return p.x >= 0.0 && p.x < width_ && p.y >= 0.0 && p.y < height_;
    }

private:
    int width_;
    int height_;
    std::vector<double> values_;
};

// Row-major boolean field bound to image dimensions.
class BinaryMask {
public:
    BinaryMask(int width, int height, bool fill = false);

    int width() const { return width_; }
    int height() const { return height_; }
    bool at(int x, int y) const { return bits_[static_cast<size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) { bits_[static_cast<size_t>(y) * width_ + x] = v ? 1 : 0; }

    int64_t count() const;
    bool empty() const { return count() == 0; }
    const std::vector<uint8_t>& bits() const { return bits_; }

private:
    int width_;
    int height_;
    std::vector<uint8_t> bits_;
};

bool operator==(const BinaryMask& a, const BinaryMask& b);

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_not(const BinaryMask& a);
// a AND NOT b
BinaryMask mask_minus(const BinaryMask& a, const BinaryMask& b);
bool mask_subset(const BinaryMask& inner, const BinaryMask& outer);

// Axis-aligned integer pixel bounds, inclusive on all four sides.
struct BoxRegion {
    int x_min, y_min, x_max, y_max;

    BoxRegion(int x_min, int y_min, int x_max, int y_max);

    int width() const { return x_max - x_min + 1; }
    int height() const { return y_max - y_min + 1; }
    int64_t area() const { return int64_t(width()) * height(); }
    bool contains(int x, int y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
};

inline bool operator==(const BoxRegion& a, const BoxRegion& b) {
    return a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max && a.y_max == b.y_max;
}

// Exactly four distinct points stored counter-clockwise around their
// centroid (ascending atan2 angle, ties broken by centroid distance), so
// that connecting them in order yields a well-defined quadrilateral for
// convex configurations regardless of the input permutation.
class FourPointAnnotation {
public:
    static FourPointAnnotation canonicalize(const std::vector<Point>& raw);

    const std::array<Point, 4>& points() const { return points_; }
    Point centroid() const;
    bool in_bounds(int width, int height) const;

private:
    FourPointAnnotation() = default;
    std::array<Point, 4> points_{};
};

FourPointAnnotation canonicalize_points(const std::vector<Point>& raw);

// Boundary-inclusive even-odd fill evaluated at integer pixel coordinates.
BinaryMask rasterize_polygon(const FourPointAnnotation& annotation, int width, int height);

// Tight inclusive bounds. Real-valued coordinates are truncated toward
// negative infinity on both ends.
BoxRegion min_bounding_box(const std::vector<Point>& points);
BoxRegion min_bounding_box(const FourPointAnnotation& annotation);
// Bounds of the set pixels; throws EmptyInputError when none are set.
BoxRegion min_bounding_box(const BinaryMask& mask);

BinaryMask box_to_mask(const BoxRegion& box, int width, int height);

// True when (px,py) lies inside or on the quadrilateral (even-odd rule).
bool polygon_contains(const std::array<Point, 4>& poly, double px, double py);

}  // namespace paseg
