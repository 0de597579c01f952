#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "paseg/imagecore.hpp"

namespace paseg {

// Synthetic ultrasound phantom: a hypoechoic nodule (perturbed ellipse) on a
// brighter background, multiplicative gamma speckle, then Gaussian blur.
struct PhantomConfig {
    int image_size = 64;              // divisible by 4
    double radius_min = 10.0;         // semi-axis range in pixels
    double radius_max = 18.0;
    double perturb_amplitude = 0.15;  // radial boundary perturbation, fraction of radius
    double nodule_mean = 0.32;
    double background_mean = 0.62;
    double speckle_strength = 0.25;   // std of the multiplicative noise
    double blur_radius = 1.0;         // gaussian sigma in pixels
    double jitter_std = 0.0;          // annotation point jitter in pixels

    void validate() const;
};

struct SampleRecord {
    std::string id;
    ImageGrid image;
    FourPointAnnotation annotation;
    std::optional<BinaryMask> gt_mask;
    std::optional<double> spacing_mm;
};

// Deterministic per seed: identical (seed, config) produce bit-identical
// images, masks, and annotations.
SampleRecord synth_phantom(uint64_t seed, const PhantomConfig& config);

// Boundary-inclusive exact ellipse: the amplitude-zero special case of the
// phantom nodule.
BinaryMask raster_ellipse_mask(int size, double cx, double cy, double a, double b);

// Left/right/top/bottom-most set pixels (first-index tie-break in row-major
// scan order), displaced by Gaussian jitter clipped inside the image, then
// canonicalized.
FourPointAnnotation extreme_point_annotation(const BinaryMask& mask, double jitter_std,
                                             uint64_t seed);

}  // namespace paseg
