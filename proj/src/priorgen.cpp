#include "paseg/priorgen.hpp"

#include <algorithm>
#include <cmath>

namespace paseg {

PriorMap::PriorMap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (values_.size() != static_cast<size_t>(width_) * height_)
        throw DimensionMismatchError("PriorMap value count does not match width*height");
    for (double v : values_) {
        if (!(v > 0.0 && v <= 1.0))
            throw InvalidParamError("PriorMap values must lie in (0,1]");
    }
}

GridPoint snap_to_grid(const Point& p, int width, int height) {
    int gx = static_cast<int>(std::llround(p.x));
    int gy = static_cast<int>(std::llround(p.y));
    gx = std::clamp(gx, 0, width - 1);
    gy = std::clamp(gy, 0, height - 1);
    return {gx, gy};
}

std::vector<double> distance_weight_map(const Point& point, int width, int height, double sigma) {
    if (!(point.x >= 0.0 && point.x < width && point.y >= 0.0 && point.y < height))
        throw OutOfBoundsError("annotated point outside the image");
    if (!(sigma > 0.0)) throw InvalidParamError("sigma must be positive");

    const GridPoint g = snap_to_grid(point, width, height);
    const double diag = std::sqrt(double(width) * width + double(height) * height);
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    std::vector<double> out(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            size_t idx = static_cast<size_t>(y) * width + x;
            if (x == g.x && y == g.y) {
                out[idx] = 1.0;
                continue;
            }
            const double dx = double(g.x - x), dy = double(g.y - y);
            const double d = std::sqrt(dx * dx + dy * dy) / diag;
            out[idx] = std::exp(-(d * d) * inv_two_sigma2);
        }
    }
    return out;
}

std::vector<double> similarity_weight_map(const ImageGrid& image, const Point& point, double theta) {
    if (!image.contains(point)) throw OutOfBoundsError("annotated point outside the image");
    if (!(theta > 0.0)) throw InvalidParamError("theta must be positive");

    const int width = image.width(), height = image.height();
    const GridPoint g = snap_to_grid(point, width, height);
    const double anchor = image.at(g.x, g.y);
    const double inv_two_theta = 1.0 / (2.0 * theta);

    std::vector<double> out(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            size_t idx = static_cast<size_t>(y) * width + x;
            if (x == g.x && y == g.y) {
                out[idx] = 1.0;
                continue;
            }
            const double s = std::abs(anchor - image.at(x, y));
            out[idx] = std::exp(-s * inv_two_theta);
        }
    }
    return out;
}

PriorMap fusion_prior(const ImageGrid& image, const FourPointAnnotation& annotation,
                      const PriorConfig& config) {
    if (!annotation.in_bounds(image.width(), image.height()))
        throw OutOfBoundsError("annotation outside the image");

    const int width = image.width(), height = image.height();
    const size_t n = static_cast<size_t>(width) * height;
    std::vector<double> fused(n, 0.0);

    for (int i = 0; i < 4; ++i) {
        const Point& p = annotation.points()[i];
        const std::vector<double> wd = distance_weight_map(p, width, height, config.sigma);
        const std::vector<double> ws = similarity_weight_map(image, p, config.theta);
        if (config.aggregation == PriorConfig::Aggregation::Max) {
            for (size_t j = 0; j < n; ++j) fused[j] = std::max(fused[j], wd[j] * ws[j]);
        } else {
            for (size_t j = 0; j < n; ++j) fused[j] += 0.25 * wd[j] * ws[j];
        }
    }
    return PriorMap(width, height, std::move(fused));
}

}  // namespace paseg
