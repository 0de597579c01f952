#include "paseg/imagecore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace paseg {

ImageGrid::ImageGrid(int width, int height, std::vector<double> intensities)
    : width_(width), height_(height), values_(std::move(intensities)) {
    if (width_ < 8 || height_ < 8)
        throw InvalidParamError("ImageGrid requires width >= 8 and height >= 8");
    if (values_.size() != static_cast<size_t>(width_) * height_)
        throw DimensionMismatchError("ImageGrid intensity count does not match width*height");
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidParamError("ImageGrid intensities must lie in [0,1]");
    }
}

ImageGrid::ImageGrid(int width, int height, double fill)
    : ImageGrid(width, height, std::vector<double>(static_cast<size_t>(width) * height, fill)) {}

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height),
      bits_(static_cast<size_t>(width) * height, fill ? 1 : 0) {
    if (width_ <= 0 || height_ <= 0)
        throw InvalidParamError("BinaryMask dimensions must be positive");
}

int64_t BinaryMask::count() const {
    return std::accumulate(bits_.begin(), bits_.end(), int64_t{0});
}

bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.width() == b.width() && a.height() == b.height() && a.bits() == b.bits();
}

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw DimensionMismatchError("mask dimensions differ");
}

}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) && b.at(x, y));
    return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) || b.at(x, y));
    return out;
}

BinaryMask mask_not(const BinaryMask& a) {
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, !a.at(x, y));
    return out;
}

BinaryMask mask_minus(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) && !b.at(x, y));
    return out;
}

bool mask_subset(const BinaryMask& inner, const BinaryMask& outer) {
    require_same_dims(inner, outer);
    for (int y = 0; y < inner.height(); ++y)
        for (int x = 0; x < inner.width(); ++x)
            if (inner.at(x, y) && !outer.at(x, y)) return false;
    return true;
}

BoxRegion::BoxRegion(int x_min_, int y_min_, int x_max_, int y_max_)
    : x_min(x_min_), y_min(y_min_), x_max(x_max_), y_max(y_max_) {
    if (x_min > x_max || y_min > y_max)
        throw InvalidParamError("BoxRegion requires x_min <= x_max and y_min <= y_max");
    if (x_min < 0 || y_min < 0)
        throw InvalidParamError("BoxRegion bounds must be non-negative");
}

FourPointAnnotation FourPointAnnotation::canonicalize(const std::vector<Point>& raw) {
    if (raw.size() != 4)
        throw WrongArityError("four-point annotation requires exactly 4 points, got " +
                              std::to_string(raw.size()));
    for (size_t i = 0; i < raw.size(); ++i)
        for (size_t j = i + 1; j < raw.size(); ++j)
            if (raw[i] == raw[j]) throw DuplicatePointsError("annotation points must be distinct");

    double cx = 0.0, cy = 0.0;
    for (const Point& p : raw) {
        cx += p.x;
        cy += p.y;
    }
    cx *= 0.25;
    cy *= 0.25;

    struct Keyed {
        Point p;
        double angle;
        double dist2;
    };
    std::array<Keyed, 4> keyed;
    for (int i = 0; i < 4; ++i) {
        const Point& p = raw[i];
        double dx = p.x - cx, dy = p.y - cy;
        keyed[i] = {p, std::atan2(dy, dx), dx * dx + dy * dy};
    }
    // Ascending angle in (-pi, pi]; collinear-with-centroid ties resolved by
    // centroid distance so the canonical order is a pure function of the set.
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.angle != b.angle) return a.angle < b.angle;
        return a.dist2 < b.dist2;
    });

    FourPointAnnotation out;
    for (int i = 0; i < 4; ++i) out.points_[i] = keyed[i].p;
    return out;
}

Point FourPointAnnotation::centroid() const {
    Point c;
    for (const Point& p : points_) {
        c.x += p.x;
        c.y += p.y;
    }
    c.x *= 0.25;
    c.y *= 0.25;
    return c;
}

bool FourPointAnnotation::in_bounds(int width, int height) const {
    for (const Point& p : points_)
        if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) return false;
    return true;
}

FourPointAnnotation canonicalize_points(const std::vector<Point>& raw) {
    return FourPointAnnotation::canonicalize(raw);
}

namespace {

// Collinearity tolerance scaled to the segment so integer-coordinate
// polygons are classified exactly while real-valued ones stay stable.
bool on_segment(const Point& a, const Point& b, double px, double py) {
    const double abx = b.x - a.x, aby = b.y - a.y;
    const double apx = px - a.x, apy = py - a.y;
    const double cross = abx * apy - aby * apx;
    const double scale = std::max(1.0, std::abs(abx) + std::abs(aby));
    if (std::abs(cross) > 1e-9 * scale) return false;
    const double lo_x = std::min(a.x, b.x) - 1e-9, hi_x = std::max(a.x, b.x) + 1e-9;
    const double lo_y = std::min(a.y, b.y) - 1e-9, hi_y = std::max(a.y, b.y) + 1e-9;
    return px >= lo_x && px <= hi_x && py >= lo_y && py <= hi_y;
}

}  // namespace

bool polygon_contains(const std::array<Point, 4>& poly, double px, double py) {
    for (int i = 0; i < 4; ++i) {
        if (on_segment(poly[i], poly[(i + 1) % 4], px, py)) return true;
    }
    bool inside = false;
    for (int i = 0; i < 4; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % 4];
        if ((a.y > py) != (b.y > py)) {
            double x_at = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
            if (px < x_at) inside = !inside;
        }
    }
    return inside;
}

BinaryMask rasterize_polygon(const FourPointAnnotation& annotation, int width, int height) {
    if (!annotation.in_bounds(width, height))
        throw OutOfBoundsError("annotation point outside raster dimensions");
    const auto& poly = annotation.points();
    BinaryMask out(width, height);
    // A quadrilateral never extends beyond the bounding box of its vertices.
    const BoxRegion box = min_bounding_box(annotation);
    for (int y = box.y_min; y <= box.y_max; ++y)
        for (int x = box.x_min; x <= box.x_max; ++x)
            if (polygon_contains(poly, double(x), double(y))) out.set(x, y, true);
    return out;
}

BoxRegion min_bounding_box(const std::vector<Point>& points) {
    if (points.empty()) throw EmptyInputError("min_bounding_box requires at least one point");
    double x_lo = points[0].x, x_hi = points[0].x;
    double y_lo = points[0].y, y_hi = points[0].y;
    for (const Point& p : points) {
        x_lo = std::min(x_lo, p.x);
        x_hi = std::max(x_hi, p.x);
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
    }
    return BoxRegion(int(std::floor(x_lo)), int(std::floor(y_lo)),
                     int(std::floor(x_hi)), int(std::floor(y_hi)));
}

BoxRegion min_bounding_box(const FourPointAnnotation& annotation) {
    const auto& p = annotation.points();
    return min_bounding_box(std::vector<Point>(p.begin(), p.end()));
}

BoxRegion min_bounding_box(const BinaryMask& mask) {
    int x_lo = mask.width(), x_hi = -1, y_lo = mask.height(), y_hi = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (x_hi < 0) throw EmptyInputError("min_bounding_box on an empty mask");
    return BoxRegion(x_lo, y_lo, x_hi, y_hi);
}

BinaryMask box_to_mask(const BoxRegion& box, int width, int height) {
    if (box.x_max >= width || box.y_max >= height)
        throw OutOfBoundsError("box exceeds raster dimensions");
    BinaryMask out(width, height);
    for (int y = box.y_min; y <= box.y_max; ++y)
        for (int x = box.x_min; x <= box.x_max; ++x) out.set(x, y, true);
    return out;
}

}  // namespace paseg
