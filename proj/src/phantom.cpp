#include "paseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace paseg {

void PhantomConfig::validate() const {
    if (image_size < 8 || image_size % 4 != 0)
        throw ConfigError("image_size must be >= 8 and divisible by 4");
    if (!(radius_min > 0.0) || radius_min > radius_max)
        throw ConfigError("radius range must satisfy 0 < radius_min <= radius_max");
    if (perturb_amplitude < 0.0 || perturb_amplitude >= 0.5)
        throw ConfigError("perturb_amplitude must lie in [0, 0.5)");
    const double margin = radius_max * (1.0 + perturb_amplitude) + 3.0;
    if (2.0 * margin >= double(image_size))
        throw ConfigError("nodule radii do not fit inside the image with margin");
    if (nodule_mean < 0.0 || nodule_mean > 1.0 || background_mean < 0.0 || background_mean > 1.0)
        throw ConfigError("mean intensities must lie in [0,1]");
    if (speckle_strength < 0.0 || blur_radius < 0.0 || jitter_std < 0.0)
        throw ConfigError("speckle, blur, and jitter must be non-negative");
}

namespace {

std::vector<double> gaussian_blur(const std::vector<double>& in, int w, int h, double sigma) {
    if (sigma <= 0.0) return in;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(size_t(radius) + 1);
    double norm = 0.0;
    for (int i = 0; i <= radius; ++i) {
        kernel[size_t(i)] = std::exp(-0.5 * double(i) * i / (sigma * sigma));
        norm += (i == 0) ? kernel[size_t(i)] : 2.0 * kernel[size_t(i)];
    }
    for (double& k : kernel) k /= norm;

    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
    std::vector<double> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = kernel[0] * in[size_t(y) * w + x];
            for (int i = 1; i <= radius; ++i)
                s += kernel[size_t(i)] * (in[size_t(y) * w + clampi(x - i, w)] +
                                          in[size_t(y) * w + clampi(x + i, w)]);
            tmp[size_t(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = kernel[0] * tmp[size_t(y) * w + x];
            for (int i = 1; i <= radius; ++i)
                s += kernel[size_t(i)] * (tmp[size_t(clampi(y - i, h)) * w + x] +
                                          tmp[size_t(clampi(y + i, h)) * w + x]);
            out[size_t(y) * w + x] = s;
        }
    return out;
}

}  // namespace

SampleRecord synth_phantom(uint64_t seed, const PhantomConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int S = cfg.image_size;

    const double margin = cfg.radius_max * (1.0 + cfg.perturb_amplitude) + 3.0;
    std::uniform_real_distribution<double> center(margin, double(S - 1) - margin);
    std::uniform_real_distribution<double> radius(cfg.radius_min, cfg.radius_max);
    const double cx = center(rng), cy = center(rng);
    const double a = radius(rng), b = radius(rng);

    // low-order Fourier boundary perturbation, total amplitude as configured
    double amp[3] = {0.0, 0.0, 0.0}, phase[3] = {0.0, 0.0, 0.0};
    if (cfg.perturb_amplitude > 0.0) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::uniform_real_distribution<double> ph(0.0, 2.0 * M_PI);
        double total = 0.0;
        for (int k = 0; k < 3; ++k) {
            amp[k] = u(rng);
            total += std::abs(amp[k]);
        }
        for (int k = 0; k < 3; ++k) {
            amp[k] = (total > 0.0) ? cfg.perturb_amplitude * amp[k] / total : 0.0;
            phase[k] = ph(rng);
        }
    }

    BinaryMask mask(S, S);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double dx = (double(x) - cx) / a, dy = (double(y) - cy) / b;
            const double rho = std::sqrt(dx * dx + dy * dy);
            double limit = 1.0;
            if (cfg.perturb_amplitude > 0.0) {
                const double phi = std::atan2(dy, dx);
                for (int k = 0; k < 3; ++k) limit += amp[k] * std::cos(double(k + 2) * phi + phase[k]);
            }
            if (rho <= limit) mask.set(x, y, true);
        }
    }

    std::vector<double> img(size_t(S) * S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            img[size_t(y) * S + x] = mask.at(x, y) ? cfg.nodule_mean : cfg.background_mean;

    if (cfg.speckle_strength > 0.0) {
        const double shape = 1.0 / (cfg.speckle_strength * cfg.speckle_strength);
        std::gamma_distribution<double> gamma(shape, 1.0 / shape);  // mean 1
        for (double& v : img) v *= gamma(rng);
    }
    img = gaussian_blur(img, S, S, cfg.blur_radius);
    for (double& v : img) v = std::clamp(v, 0.0, 1.0);

    SampleRecord rec{
        "phantom-" + std::to_string(seed),
        ImageGrid(S, S, std::move(img)),
        extreme_point_annotation(mask, cfg.jitter_std, rng()),
        mask,
        std::nullopt,
    };
    return rec;
}

BinaryMask raster_ellipse_mask(int size, double cx, double cy, double a, double b) {
    BinaryMask mask(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = (double(x) - cx) / a, dy = (double(y) - cy) / b;
            if (dx * dx + dy * dy <= 1.0) mask.set(x, y, true);
        }
    return mask;
}

FourPointAnnotation extreme_point_annotation(const BinaryMask& mask, double jitter_std,
                                             uint64_t seed) {
    if (mask.count() == 0) throw EmptyInputError("extreme points of an empty mask");

    Point left{1e18, 0}, right{-1e18, 0}, top{0, 1e18}, bottom{0, -1e18};
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            if (double(x) < left.x) left = {double(x), double(y)};
            if (double(x) > right.x) right = {double(x), double(y)};
            if (double(y) < top.y) top = {double(x), double(y)};
            if (double(y) > bottom.y) bottom = {double(x), double(y)};
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, jitter_std);
    const double max_x = double(mask.width() - 1), max_y = double(mask.height() - 1);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<Point> pts{left, right, top, bottom};
        if (jitter_std > 0.0) {
            for (Point& p : pts) {
                p.x = std::clamp(p.x + noise(rng), 0.0, max_x);
                p.y = std::clamp(p.y + noise(rng), 0.0, max_y);
            }
        }
        bool distinct = true;
        for (size_t i = 0; i < pts.size() && distinct; ++i)
            for (size_t j = i + 1; j < pts.size() && distinct; ++j)
                if (pts[i] == pts[j]) distinct = false;
        if (distinct) return canonicalize_points(pts);
        if (jitter_std == 0.0) break;  // jitter-free duplicates cannot resolve
    }
    throw DataError("mask extreme points collapse to duplicates");
}

}  // namespace paseg
