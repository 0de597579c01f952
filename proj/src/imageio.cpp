#include "paseg/imageio.hpp"

#include <zlib.h>

#include <cfloat>
#include <cmath>
#include <cstring>
#include <fstream>

namespace paseg {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failure on " + path);
}

// ------------------------------------------------------------------ PGM

std::string encode_pgm(const GrayImage8& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

GrayImage8 decode_pgm(const std::string& bytes, const std::string& path) {
    size_t pos = 2;  // past "P5"
    auto next_int = [&](const char* what) {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw ParseError(path + ": malformed PGM header (" + what + ")");
        return v;
    };
    GrayImage8 img;
    img.width = next_int("width");
    img.height = next_int("height");
    const int maxval = next_int("maxval");
    if (maxval != 255) throw ParseError(path + ": only 8-bit PGM supported");
    ++pos;  // single whitespace after maxval
    const size_t n = size_t(img.width) * size_t(img.height);
    if (bytes.size() - pos < n) throw ParseError(path + ": truncated PGM payload");
    img.pixels.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + n));
    return img;
}

// ------------------------------------------------------------------ PNG

const uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

uint32_t crc32_of(const uint8_t* data, size_t n, uint32_t seed) {
    return uint32_t(::crc32(seed, data, uInt(n)));
}

void put_u32(std::string& out, uint32_t v) {
    out.push_back(char((v >> 24) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char(v & 0xff));
}

uint32_t get_u32(const std::string& b, size_t pos) {
    return (uint32_t(uint8_t(b[pos])) << 24) | (uint32_t(uint8_t(b[pos + 1])) << 16) |
           (uint32_t(uint8_t(b[pos + 2])) << 8) | uint32_t(uint8_t(b[pos + 3]));
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32(out, uint32_t(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    put_u32(out, crc32_of(reinterpret_cast<const uint8_t*>(body.data()), body.size(), 0));
}

std::string encode_png(const GrayImage8& img) {
    std::string out(reinterpret_cast<const char*>(kPngSig), 8);

    std::string ihdr;
    put_u32(ihdr, uint32_t(img.width));
    put_u32(ihdr, uint32_t(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(0);   // color type: grayscale
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    append_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::string raw;
    raw.reserve(size_t(img.height) * (size_t(img.width) + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.append(reinterpret_cast<const char*>(&img.pixels[size_t(y) * img.width]),
                   size_t(img.width));
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::string compressed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK)
        throw IoError("zlib compression failed");
    compressed.resize(bound);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

GrayImage8 decode_png(const std::string& bytes, const std::string& path) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw ParseError(path + ": not a PNG file");

    GrayImage8 img;
    std::string idat;
    size_t pos = 8;
    bool saw_ihdr = false;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = get_u32(bytes, pos);
        const std::string type = bytes.substr(pos + 4, 4);
        if (pos + 12 + len > bytes.size()) throw ParseError(path + ": truncated PNG chunk");
        const std::string payload = bytes.substr(pos + 8, len);
        if (type == "IHDR") {
            if (len != 13) throw ParseError(path + ": bad IHDR");
            img.width = int(get_u32(payload, 0));
            img.height = int(get_u32(payload, 4));
            const uint8_t depth = uint8_t(payload[8]), color = uint8_t(payload[9]);
            const uint8_t interlace = uint8_t(payload[12]);
            if (depth != 8 || color != 0 || interlace != 0)
                throw ParseError(path + ": only 8-bit non-interlaced grayscale PNG supported");
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat += payload;
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || img.width <= 0 || img.height <= 0)
        throw ParseError(path + ": missing PNG header");

    const size_t stride = size_t(img.width) + 1;
    std::vector<uint8_t> raw(stride * size_t(img.height));
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                   uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw ParseError(path + ": PNG payload decompression failed");

    img.pixels.assign(size_t(img.width) * size_t(img.height), 0);
    std::vector<uint8_t> prev(size_t(img.width), 0);
    for (int y = 0; y < img.height; ++y) {
        const uint8_t filter = raw[size_t(y) * stride];
        const uint8_t* src = &raw[size_t(y) * stride + 1];
        uint8_t* dst = &img.pixels[size_t(y) * img.width];
        for (int x = 0; x < img.width; ++x) {
            const int left = x > 0 ? dst[x - 1] : 0;
            const int up = prev[size_t(x)];
            const int ul = x > 0 ? prev[size_t(x) - 1] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, ul); break;
                default: throw ParseError(path + ": unknown PNG filter type");
            }
            dst[x] = uint8_t(v & 0xff);
        }
        std::memcpy(prev.data(), dst, size_t(img.width));
    }
    return img;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_gray8(const std::string& path, const GrayImage8& img) {
    if (img.pixels.size() != size_t(img.width) * size_t(img.height))
        throw DimensionMismatchError("gray image pixel count does not match dimensions");
    write_file(path, has_suffix(path, ".png") ? encode_png(img) : encode_pgm(img));
}

GrayImage8 read_gray8(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes, path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
    throw ParseError(path + ": unsupported image format (expect PGM P5 or 8-bit grayscale PNG)");
}

GrayImage8 gray_from_image(const ImageGrid& img) {
    GrayImage8 g{img.width(), img.height(), {}};
    g.pixels.resize(size_t(img.width()) * img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            g.pixels[size_t(y) * img.width() + x] = uint8_t(std::lround(img.at(x, y) * 255.0));
    return g;
}

ImageGrid image_from_gray(const GrayImage8& g) {
    std::vector<double> v(size_t(g.width) * g.height);
    for (size_t i = 0; i < v.size(); ++i) v[i] = double(g.pixels[i]) / 255.0;
    return ImageGrid(g.width, g.height, std::move(v));
}

GrayImage8 gray_from_mask(const BinaryMask& mask) {
    GrayImage8 g{mask.width(), mask.height(), {}};
    g.pixels.resize(size_t(mask.width()) * mask.height());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            g.pixels[size_t(y) * mask.width() + x] = mask.at(x, y) ? 255 : 0;
    return g;
}

BinaryMask mask_from_gray(const GrayImage8& g) {
    BinaryMask m(g.width, g.height);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) m.set(x, y, g.pixels[size_t(y) * g.width + x] > 127);
    return m;
}

// ---------------------------------------------------------------- prior

namespace {
constexpr char kPriorMagic[8] = {'P', 'S', 'E', 'G', 'D', 'S', 'P', '1'};
}

void save_prior_cache(const std::string& path, const PriorMap& prior) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kPriorMagic, 8);
    const uint32_t w = uint32_t(prior.width()), h = uint32_t(prior.height());
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> vals(prior.values().size());
    for (size_t i = 0; i < vals.size(); ++i) {
        // clamp so float conversion cannot underflow the (0,1] invariant
        vals[i] = std::max(float(prior.values()[i]), FLT_MIN);
    }
    out.write(reinterpret_cast<const char*>(vals.data()),
              std::streamsize(vals.size() * sizeof(float)));
    if (!out) throw IoError("write failure on " + path);
}

PriorMap load_prior_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kPriorMagic, 8) != 0)
        throw ParseError(path + ": not a prior cache file");
    uint32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || w == 0 || h == 0) throw ParseError(path + ": bad prior cache header");
    std::vector<float> vals(size_t(w) * h);
    in.read(reinterpret_cast<char*>(vals.data()), std::streamsize(vals.size() * sizeof(float)));
    if (!in) throw ParseError(path + ": truncated prior cache payload");
    std::vector<double> out(vals.begin(), vals.end());
    return PriorMap(int(w), int(h), std::move(out));
}

}  // namespace paseg
