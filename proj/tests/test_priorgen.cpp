#include <doctest.h>

#include <cmath>
#include <random>

#include "paseg/priorgen.hpp"

using namespace paseg;

namespace {

// Textbook re-evaluation of the distance weight, kept independent of the
// library implementation.
double oracle_distance_weight(double xi, double yi, double xj, double yj, int w, int h,
                              double sigma) {
    if (xi == xj && yi == yj) return 1.0;
    const double d = std::sqrt((xi - xj) * (xi - xj) + (yi - yj) * (yi - yj)) /
                     std::sqrt(double(w) * w + double(h) * h);
    return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double oracle_similarity_weight(double ii, double ij, bool same_pixel, double theta) {
    if (same_pixel) return 1.0;
    return std::exp(-std::abs(ii - ij) / (2.0 * theta));
}

ImageGrid random_image(int w, int h, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(size_t(w) * h);
    for (double& x : v) x = u(rng);
    return ImageGrid(w, h, std::move(v));
}

}  // namespace

TEST_CASE("distance weight matches the worked example") {
    // w=h=100, point (0,0), pixel (30,40): d = 50/sqrt(20000), sigma = 0.25.
    const auto wd = distance_weight_map(Point{0, 0}, 100, 100, 0.25);
    const double got = wd[size_t(40) * 100 + 30];
    CHECK(got == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(wd[0] == 1.0);
}

TEST_CASE("similarity weight matches the worked examples") {
    std::vector<double> v(size_t(16) * 16, 0.8);
    v[size_t(5) * 16 + 5] = 0.3;   // target pixel j
    v[size_t(9) * 16 + 9] = 0.0;   // extreme-contrast pixel
    ImageGrid img(16, 16, std::move(v));

    const auto ws = similarity_weight_map(img, Point{0, 0}, 0.25);
    CHECK(ws[size_t(5) * 16 + 5] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(ws[0] == 1.0);
    // identical intensities at distinct pixels give weight exp(0) = 1
    CHECK(ws[size_t(3) * 16 + 7] == 1.0);

    std::vector<double> v2(size_t(16) * 16, 0.0);
    v2[0] = 1.0;
    ImageGrid img2(16, 16, std::move(v2));
    const auto ws2 = similarity_weight_map(img2, Point{0, 0}, 0.25);
    CHECK(ws2[size_t(9) * 16 + 9] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("distance and similarity maps match direct evaluation on random tuples") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> dim(8, 48);
    std::uniform_real_distribution<double> param(0.05, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = dim(rng), h = dim(rng);
        std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
        const Point p{double(px(rng)), double(py(rng))};
        const double sigma = param(rng), theta = param(rng);
        const ImageGrid img = random_image(w, h, rng());

        const auto wd = distance_weight_map(p, w, h, sigma);
        const auto ws = similarity_weight_map(img, p, theta);
        for (int trial2 = 0; trial2 < 20; ++trial2) {
            const int x = px(rng), y = py(rng);
            const bool same = (x == int(p.x) && y == int(p.y));
            const double wd_ref = oracle_distance_weight(p.x, p.y, x, y, w, h, sigma);
            const double ws_ref =
                oracle_similarity_weight(img.at(int(p.x), int(p.y)), img.at(x, y), same, theta);
            CHECK(std::abs(wd[size_t(y) * w + x] - wd_ref) <= 1e-12);
            CHECK(std::abs(ws[size_t(y) * w + x] - ws_ref) <= 1e-12);
        }
    }
}

TEST_CASE("distance weight is non-increasing along a ray from the point") {
    const auto wd = distance_weight_map(Point{10, 10}, 64, 64, 0.2);
    double prev = 2.0;
    for (int x = 10; x < 64; ++x) {
        const double cur = wd[size_t(10) * 64 + x];
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("prior parameter validation") {
    CHECK_THROWS_AS(distance_weight_map(Point{0, 0}, 32, 32, 0.0), InvalidParamError);
    CHECK_THROWS_AS(distance_weight_map(Point{40, 0}, 32, 32, 0.2), OutOfBoundsError);
    const ImageGrid img(32, 32, 0.5);
    CHECK_THROWS_AS(similarity_weight_map(img, Point{0, 0}, -1.0), InvalidParamError);
    CHECK_THROWS_AS(similarity_weight_map(img, Point{0, 40}, 0.25), OutOfBoundsError);
}

TEST_CASE("fusion prior on a uniform image reduces to the distance maximum") {
    const ImageGrid img(64, 64, 0.5);
    const auto ann = canonicalize_points({{20, 20}, {40, 20}, {40, 40}, {20, 40}});
    PriorConfig cfg;
    const PriorMap prior = fusion_prior(img, ann, cfg);

    for (int y = 0; y < 64; y += 5) {
        for (int x = 0; x < 64; x += 5) {
            double expect = 0.0;
            for (const Point& p : ann.points())
                expect = std::max(expect,
                                  oracle_distance_weight(p.x, p.y, x, y, 64, 64, cfg.sigma));
            CHECK(prior.at(x, y) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("fusion prior is exactly 1 at annotated pixels and within (0,1]") {
    const ImageGrid img = random_image(64, 64, 7);
    const auto ann = canonicalize_points({{12, 30}, {50, 28}, {33, 10}, {31, 52}});
    const PriorMap prior = fusion_prior(img, ann, PriorConfig{});
    for (const Point& p : ann.points()) CHECK(prior.at(int(p.x), int(p.y)) == 1.0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            CHECK(prior.at(x, y) > 0.0);
            CHECK(prior.at(x, y) <= 1.0);
        }
}

TEST_CASE("per-point factors multiply: product of the two worked examples") {
    // Uniform intensity except one contrasting pixel at the example distance.
    std::vector<double> v(size_t(100) * 100, 0.8);
    v[size_t(40) * 100 + 30] = 0.3;
    ImageGrid img(100, 100, std::move(v));
    const auto wd = distance_weight_map(Point{0, 0}, 100, 100, 0.25);
    const auto ws = similarity_weight_map(img, Point{0, 0}, 0.25);
    const size_t idx = size_t(40) * 100 + 30;
    CHECK(wd[idx] * ws[idx] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("distance weight is invariant to doubling image and point coordinates") {
    const Point p{12, 20};
    const auto wd1 = distance_weight_map(p, 64, 48, 0.2);
    const auto wd2 = distance_weight_map(Point{24, 40}, 128, 96, 0.2);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x) {
            if (x == 12 && y == 20) continue;  // special-case pixel only exists once
            CHECK(wd1[size_t(y) * 64 + x] == wd2[size_t(2 * y) * 128 + 2 * x]);
        }
}

TEST_CASE("uniform-image fusion prior is non-increasing along an outward ray") {
    const ImageGrid img(64, 64, 0.4);
    // clustered points; the ray leaves all of them monotonically
    const auto ann = canonicalize_points({{20, 20}, {24, 20}, {24, 24}, {20, 24}});
    const PriorMap prior = fusion_prior(img, ann, PriorConfig{});
    double prev = 2.0;
    for (int x = 24; x < 64; ++x) {  // ray from the rightmost point along +x
        const double cur = prior.at(x, 22);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("fusion prior is deterministic") {
    const ImageGrid img = random_image(48, 48, 11);
    const auto ann = canonicalize_points({{10, 24}, {38, 22}, {25, 8}, {23, 40}});
    const PriorMap a = fusion_prior(img, ann, PriorConfig{});
    const PriorMap b = fusion_prior(img, ann, PriorConfig{});
    CHECK(a.values() == b.values());
}
