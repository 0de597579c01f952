#pragma once

#include <vector>

#include "paseg/imagecore.hpp"

namespace paseg {

// Parameters of the fused distance/similarity prior. sigma is expressed in
// normalized-diagonal units, theta in intensity units (intensities live in
// [0,1]). Four per-point maps are combined with the configured aggregation.
struct PriorConfig {
    double sigma = 0.2;
    double theta = 0.25;
    enum class Aggregation { Max, Mean };
    Aggregation aggregation = Aggregation::Max;
};

// Per-pixel fused relevance in (0,1], exactly 1 at annotated pixels.
class PriorMap {
public:
    PriorMap(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    double at(int x, int y) const { return values_[static_cast<size_t>(y) * width_ + x]; }
    const std::vector<double>& values() const { return values_; }

private:
    int width_;
    int height_;
    std::vector<double> values_;
};

// Annotation points may be real-valued; the grid evaluation snaps each one
// to its nearest pixel (rounded, clamped to the image) for both the
// special-case branch and the intensity lookup.
struct GridPoint {
    int x, y;
};
GridPoint snap_to_grid(const Point& p, int width, int height);

// w_d(j) = 1 at the annotated pixel, exp(-d^2 / (2 sigma^2)) elsewhere,
// where d is the Euclidean distance normalized by the image diagonal.
std::vector<double> distance_weight_map(const Point& point, int width, int height, double sigma);

// w_s(j) = 1 at the annotated pixel, exp(-|I_i - I_j| / (2 theta)) elsewhere.
std::vector<double> similarity_weight_map(const ImageGrid& image, const Point& point, double theta);

// Per point i, D_i(j) = w_d(i,j) * w_s(i,j); aggregated across the four
// points per pixel (default: maximum).
PriorMap fusion_prior(const ImageGrid& image, const FourPointAnnotation& annotation,
                      const PriorConfig& config);

}  // namespace paseg
