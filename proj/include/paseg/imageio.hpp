#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paseg/imagecore.hpp"
#include "paseg/priorgen.hpp"

namespace paseg {

// 8-bit grayscale currency shared by the PGM and PNG codecs.
struct GrayImage8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;
};

// Format picked by extension: ".png" writes PNG, anything else binary PGM.
void write_gray8(const std::string& path, const GrayImage8& img);
// Format sniffed from the file's magic bytes.
GrayImage8 read_gray8(const std::string& path);

GrayImage8 gray_from_image(const ImageGrid& img);     // round(v * 255)
ImageGrid image_from_gray(const GrayImage8& img);     // v / 255
GrayImage8 gray_from_mask(const BinaryMask& mask);    // 0 / 255
BinaryMask mask_from_gray(const GrayImage8& img);     // > 127 is set

// Prior cache: 16-byte header (8-byte magic, u32 width, u32 height) followed
// by row-major 32-bit floats. Round-trips are bit-exact.
void save_prior_cache(const std::string& path, const PriorMap& prior);
PriorMap load_prior_cache(const std::string& path);

}  // namespace paseg
