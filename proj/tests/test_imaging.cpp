#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lesiondet/errors.hpp"
#include "lesiondet/imaging.hpp"
#include "lesiondet/rng.hpp"

#include "support.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

using namespace lesiondet;
using testutil::TempDir;

// ---- oracles (independent reimplementations, written before the tests) ----

// Direct (non-separable) 2-D Gaussian convolution with edge replication.
static Image blur_oracle(const Image& img, float sigma_mm) {
    const double sp = double(sigma_mm) / img.spacing_mm;
    const int r = int(std::ceil(3.0 * sigma_mm / img.spacing_mm));
    std::vector<double> k(2 * r + 1);
    double ksum = 0.0;
    for (int d = -r; d <= r; ++d) {
        k[d + r] = std::exp(-0.5 * d * d / (sp * sp));
        ksum += k[d + r];
    }
    for (double& v : k) v /= ksum;

    Image out(img.width, img.height, img.spacing_mm);
    for (int row = 0; row < img.height; ++row) {
        for (int col = 0; col < img.width; ++col) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int rr = std::clamp(row + dy, 0, img.height - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int cc = std::clamp(col + dx, 0, img.width - 1);
                    acc += k[dy + r] * k[dx + r] * img.at(rr, cc);
                }
            }
            out.at(row, col) = float(acc);
        }
    }
    return out;
}

// Reference band normalization: decompose, divide each band by its in-mask
// population std (skip below 1e-8), re-sum. Uses only the public
// decompose_bands and its own statistics.
static Image band_normalize_oracle(const Image& img, const BreastMask& mask,
                                   const std::vector<float>& sigmas) {
    auto bands = decompose_bands(img, sigmas);
    Image out(img.width, img.height, img.spacing_mm);
    std::vector<double> scale(bands.size(), 1.0);
    for (std::size_t i = 0; i < bands.size(); ++i) {
        double sum = 0.0, sum2 = 0.0;
        for (int r = 0; r < img.height; ++r) {
            for (int c = 0; c < img.width; ++c) {
                if (!mask.at(r, c)) continue;
                const double v = bands[i].at(r, c);
                sum += v;
                sum2 += v * v;
            }
        }
        const double n = double(mask.area_px);
        const double mean = sum / n;
        const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
        if (sd >= 1e-8) scale[i] = 1.0 / sd;
    }
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < bands.size(); ++i) {
            acc += float(bands[i].pixels[p] * float(scale[i]));
        }
        out.pixels[p] = acc;
    }
    return out;
}

static double in_mask_std(const Image& img, const BreastMask& mask) {
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            if (!mask.at(r, c)) continue;
            sum += img.at(r, c);
            sum2 += double(img.at(r, c)) * img.at(r, c);
        }
    }
    const double n = double(mask.area_px);
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, sum2 / n - mean * mean));
}

static Image random_image(int w, int h, float spacing, Rng& rng, float lo = 0.0f, float hi = 1.0f) {
    Image img(w, h, spacing);
    for (auto& p : img.pixels) p = float(rng.uniform(lo, hi));
    return img;
}

static double max_abs_diff(const Image& a, const Image& b) {
    REQUIRE(a.width == b.width);
    REQUIRE(a.height == b.height);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        worst = std::max(worst, std::fabs(double(a.pixels[i]) - b.pixels[i]));
    }
    return worst;
}

static BreastMask full_mask(int w, int h) {
    BreastMask m(w, h, true);
    return m;
}

// Minimal libpng 16-bit grayscale writer with a pHYs chunk, used to build
// PNG fixtures for the reader.
static void write_png16_fixture(const Image& img, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(png != nullptr);
    REQUIRE(info != nullptr);
    REQUIRE(setjmp(png_jmpbuf(png)) == 0);
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    const auto ppm = png_uint_32(std::lround(1000.0 / img.spacing_mm));
    png_set_pHYs(png, info, ppm, ppm, PNG_RESOLUTION_METER);
    png_write_info(png, info);
    std::vector<png_byte> row(std::size_t(img.width) * 2);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const long v = std::lround(std::clamp(double(img.at(r, c)), 0.0, 65535.0));
            row[2 * c] = png_byte((v >> 8) & 0xff);
            row[2 * c + 1] = png_byte(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---- gaussian_blur ---------------------------------------------------------

TEST_CASE("gaussian_blur kernel radius is ceil(3 sigma / spacing)") {
    CHECK(gaussian_kernel_radius(0.2f, 0.2f) == 3);
    CHECK(gaussian_kernel_radius(0.1f, 0.2f) == 2);  // ceil(1.5)
    CHECK(gaussian_kernel_radius(0.5f, 0.2f) == 8);  // ceil(7.5)
}

TEST_CASE("gaussian_blur preserves constant images") {
    Image img(31, 17, 0.2f, 0.7f);
    Image out = gaussian_blur(img, 0.5f);
    CHECK(out.width == 31);
    CHECK(out.height == 17);
    CHECK(out.spacing_mm == 0.2f);
    CHECK(max_abs_diff(out, img) < 1e-5);
}

TEST_CASE("gaussian_blur matches the direct 2-D convolution oracle") {
    Rng rng(11);
    SUBCASE("unit impulse, sigma = spacing") {
        Image img(15, 15, 0.2f, 0.0f);
        img.at(7, 7) = 1.0f;
        Image out = gaussian_blur(img, 0.2f);
        Image ref = blur_oracle(img, 0.2f);
        CHECK(max_abs_diff(out, ref) < 1e-6);
        // center value equals the normalized kernel's center weight
        CHECK(out.at(7, 7) == doctest::Approx(ref.at(7, 7)).epsilon(1e-6));
        double total = 0.0;
        for (float p : out.pixels) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("random image incl. replicated borders") {
        Image img = random_image(24, 17, 0.2f, rng);
        Image out = gaussian_blur(img, 0.3f);
        Image ref = blur_oracle(img, 0.3f);
        CHECK(max_abs_diff(out, ref) < 1e-5);
    }
    SUBCASE("sum preservation on interior-dominated images") {
        Image img = random_image(64, 64, 0.2f, rng);
        Image out = gaussian_blur(img, 0.2f);
        double s0 = 0.0, s1 = 0.0;
        for (float p : img.pixels) s0 += p;
        for (float p : out.pixels) s1 += p;
        CHECK(std::fabs(s1 - s0) / s0 < 1e-4);
    }
}

TEST_CASE("gaussian_blur rejects non-positive sigma") {
    Image img(8, 8, 0.2f, 0.0f);
    CHECK_THROWS_AS(gaussian_blur(img, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur(img, -1.0f), std::invalid_argument);
}

// ---- resample_to_spacing ----------------------------------------------------

TEST_CASE("resample_to_spacing factor-2 geometry") {
    Image img(2000, 2000, 0.1f, 0.25f);
    Image out = resample_to_spacing(img, 0.2f);
    CHECK(out.width == 1000);
    CHECK(out.height == 1000);
    CHECK(out.spacing_mm == 0.2f);
}

TEST_CASE("resample_to_spacing at the current spacing is the identity") {
    Rng rng(3);
    Image img = random_image(37, 21, 0.2f, rng);
    Image out = resample_to_spacing(img, 0.2f);
    CHECK(out.width == img.width);
    CHECK(out.height == img.height);
    CHECK(out.pixels == img.pixels); // bitwise
}

TEST_CASE("resample_to_spacing matches the analytic ramp in the interior") {
    // Bilinear interpolation reproduces an affine image exactly away from
    // the clamped borders.
    const int w = 200, h = 120;
    Image img(w, h, 0.1f);
    const double a = 0.3, bx = 0.05, by = 0.02;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) img.at(r, c) = float(a + bx * c + by * r);
    }
    SUBCASE("integer factor 2") {
        Image out = resample_to_spacing(img, 0.2f);
        CHECK(out.width == 100);
        CHECK(out.height == 60);
        const double ratio = 2.0;
        for (int r = 1; r + 1 < out.height; ++r) {
            for (int c = 1; c + 1 < out.width; ++c) {
                const double xs = (c + 0.5) * ratio - 0.5;
                const double ys = (r + 0.5) * ratio - 0.5;
                const double want = a + bx * xs + by * ys;
                CHECK(std::fabs(out.at(r, c) - want) < 1e-5);
            }
        }
    }
    SUBCASE("non-integer factor 2.5") {
        Image out = resample_to_spacing(img, 0.25f);
        CHECK(out.width == 80);
        CHECK(out.height == 48);
        const double ratio = 2.5;
        for (int r = 1; r + 1 < out.height; ++r) {
            for (int c = 1; c + 1 < out.width; ++c) {
                const double xs = (c + 0.5) * ratio - 0.5;
                const double ys = (r + 0.5) * ratio - 0.5;
                const double want = a + bx * xs + by * ys;
                CHECK(std::fabs(out.at(r, c) - want) < 1e-5);
            }
        }
    }
}

TEST_CASE("resample_to_spacing rejects upscaling") {
    Image img(16, 16, 0.2f, 0.0f);
    CHECK_THROWS_AS(resample_to_spacing(img, 0.1f), std::invalid_argument);
}

TEST_CASE("resample_mask_nearest follows the resampling geometry") {
    BinaryMask m(40, 30, false);
    for (int r = 0; r < 30; ++r) {
        for (int c = 0; c < 20; ++c) m.set(r, c, true); // left half set
    }
    BinaryMask out = resample_mask_nearest(m, 0.1f, 0.2f);
    CHECK(out.width == 20);
    CHECK(out.height == 15);
    // left half still set, right half clear (nearest of an aligned edge)
    CHECK(out.at(7, 2));
    CHECK_FALSE(out.at(7, 17));
    std::int64_t n = 0;
    for (auto b : out.bits) n += b;
    CHECK(n == out.area_px);

    BinaryMask same = resample_mask_nearest(m, 0.1f, 0.1f);
    CHECK(same.bits == m.bits);
}

// ---- band decomposition and normalization ------------------------------------

TEST_CASE("decompose_bands returns K+1 bands that sum back to the input") {
    Rng rng(17);
    Image img = random_image(48, 40, 0.2f, rng);
    const std::vector<float> sigmas = {0.4f, 0.8f, 1.6f};
    auto bands = decompose_bands(img, sigmas);
    REQUIRE(bands.size() == 4);
    Image sum(img.width, img.height, img.spacing_mm);
    for (auto& b : bands) {
        for (std::size_t p = 0; p < sum.pixel_count(); ++p) sum.pixels[p] += b.pixels[p];
    }
    CHECK(max_abs_diff(sum, img) < 1e-5);
}

TEST_CASE("decompose_bands validates its sigmas") {
    Image img(8, 8, 0.2f, 0.0f);
    CHECK_THROWS_AS(decompose_bands(img, {}), std::invalid_argument);
    CHECK_THROWS_AS(decompose_bands(img, {0.8f, 0.4f}), std::invalid_argument);
    CHECK_THROWS_AS(decompose_bands(img, {-0.4f, 0.8f}), std::invalid_argument);
}

TEST_CASE("band_normalize equals the reference construction") {
    Rng rng(21);
    Image img = random_image(40, 32, 0.2f, rng, 0.0f, 4.0f);
    BreastMask mask(40, 32, false);
    for (int r = 4; r < 28; ++r) {
        for (int c = 6; c < 34; ++c) mask.set(r, c, true);
    }
    const std::vector<float> sigmas = {0.4f, 0.8f, 1.6f, 3.2f};
    Image out = band_normalize(img, mask, sigmas);
    Image ref = band_normalize_oracle(img, mask, sigmas);
    CHECK(max_abs_diff(out, ref) < 1e-5);

    // each non-degenerate band of the result of dividing by the in-mask std
    // has unit std, measured with the same decomposition
    auto bands = decompose_bands(img, sigmas);
    for (auto& b : bands) {
        const double sd = in_mask_std(b, mask);
        if (sd < 1e-8) continue;
        Image scaled = b;
        for (auto& p : scaled.pixels) p = float(p / sd);
        CHECK(in_mask_std(scaled, mask) == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("band_normalize is invariant under positive input scaling") {
    Rng rng(23);
    Image img = random_image(36, 36, 0.2f, rng, 0.0f, 2.0f);
    BreastMask mask = full_mask(36, 36);
    const std::vector<float> sigmas = {0.4f, 0.8f, 1.6f, 3.2f};
    Image base = band_normalize(img, mask, sigmas);

    SUBCASE("power-of-two scale (exact in float)") {
        Image scaled = img;
        for (auto& p : scaled.pixels) p *= 2.0f;
        Image out = band_normalize(scaled, mask, sigmas);
        CHECK(max_abs_diff(out, base) < 1e-6);
    }
    SUBCASE("arbitrary positive scale") {
        Image scaled = img;
        for (auto& p : scaled.pixels) p *= 7.3f;
        Image out = band_normalize(scaled, mask, sigmas);
        CHECK(max_abs_diff(out, base) < 1e-4);
    }
}

TEST_CASE("band_normalize leaves constant images as their low-pass residual") {
    Image img(24, 24, 0.2f, 3.25f);
    BreastMask mask = full_mask(24, 24);
    Image out = band_normalize(img, mask, {0.4f, 0.8f});
    // all difference bands are ~0 and skipped; the residual is the constant
    CHECK(max_abs_diff(out, img) < 1e-5);
}

TEST_CASE("band_normalize rejects an empty mask") {
    Image img(8, 8, 0.2f, 1.0f);
    BreastMask mask(8, 8, false);
    CHECK_THROWS_AS(band_normalize(img, mask, {0.4f}), std::invalid_argument);
}

// ---- scale_to_unit -----------------------------------------------------------

TEST_CASE("scale_to_unit maps the in-mask range onto [0,1]") {
    SUBCASE("values {2,4,6} -> {0,0.5,1}") {
        Image img(3, 1, 1.0f);
        img.at(0, 0) = 2.0f;
        img.at(0, 1) = 4.0f;
        img.at(0, 2) = 6.0f;
        BreastMask mask = full_mask(3, 1);
        Image out = scale_to_unit(img, mask);
        CHECK(out.at(0, 0) == doctest::Approx(0.0));
        CHECK(out.at(0, 1) == doctest::Approx(0.5));
        CHECK(out.at(0, 2) == doctest::Approx(1.0));
    }
    SUBCASE("constant image -> all zeros") {
        Image img(5, 4, 1.0f, 2.5f);
        Image out = scale_to_unit(img, full_mask(5, 4));
        for (float p : out.pixels) CHECK(p == 0.0f);
    }
    SUBCASE("random input -> min 0, max 1, range within [0,1]") {
        Rng rng(29);
        Image img = random_image(32, 32, 0.2f, rng, -3.0f, 5.0f);
        BreastMask mask(32, 32, false);
        for (int r = 8; r < 24; ++r) {
            for (int c = 8; c < 24; ++c) mask.set(r, c, true);
        }
        Image out = scale_to_unit(img, mask);
        float lo = 1e9f, hi = -1e9f;
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 32; ++c) {
                CHECK(out.at(r, c) >= 0.0f);
                CHECK(out.at(r, c) <= 1.0f);
                if (mask.at(r, c)) {
                    lo = std::min(lo, out.at(r, c));
                    hi = std::max(hi, out.at(r, c));
                }
            }
        }
        CHECK(lo == doctest::Approx(0.0));
        CHECK(hi == doctest::Approx(1.0));
    }
}

// ---- estimate_breast_mask ------------------------------------------------------

TEST_CASE("estimate_breast_mask recovers a disk support") {
    Image img(200, 200, 0.2f, 0.0f);
    BinaryMask disk(200, 200, false);
    const double cx = 100.0, cy = 100.0, rad = 60.0;
    Rng rng(37);
    for (int r = 0; r < 200; ++r) {
        for (int c = 0; c < 200; ++c) {
            const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
            if (d2 <= rad * rad) {
                img.at(r, c) = float(0.5 + 0.1 * rng.uniform01());
                disk.set(r, c, true);
            }
        }
    }
    BreastMask mask = estimate_breast_mask(img);
    std::int64_t inter = 0, uni = 0;
    for (int r = 0; r < 200; ++r) {
        for (int c = 0; c < 200; ++c) {
            const bool a = mask.at(r, c), b = disk.at(r, c);
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
    }
    CHECK(double(inter) / double(uni) >= 0.95);
}

TEST_CASE("estimate_breast_mask fills holes and keeps the largest component") {
    Image img(100, 100, 0.2f, 0.0f);
    // big square with an interior hole
    for (int r = 10; r < 60; ++r) {
        for (int c = 10; c < 60; ++c) img.at(r, c) = 1.0f;
    }
    for (int r = 30; r < 35; ++r) {
        for (int c = 30; c < 35; ++c) img.at(r, c) = 0.0f;
    }
    // much smaller separate square
    for (int r = 80; r < 90; ++r) {
        for (int c = 80; c < 90; ++c) img.at(r, c) = 1.0f;
    }
    BreastMask mask = estimate_breast_mask(img);
    CHECK(mask.at(32, 32));       // hole filled
    CHECK(mask.at(20, 20));       // main component kept
    CHECK_FALSE(mask.at(85, 85)); // smaller component dropped
    CHECK(mask.area_px == 50 * 50);
}

TEST_CASE("estimate_breast_mask rejects an all-zero image") {
    Image img(16, 16, 0.2f, 0.0f);
    CHECK_THROWS_AS(estimate_breast_mask(img), DataError);
}

// ---- file formats --------------------------------------------------------------

TEST_CASE("F32I round-trips images exactly") {
    TempDir tmp("f32i");
    Rng rng(41);
    Image img = random_image(33, 21, 0.2f, rng, -2.0f, 3.0f);
    const std::string path = tmp.file("img.f32i");
    write_f32i(img, path);
    Image back = read_f32i(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.spacing_mm == img.spacing_mm);
    CHECK(back.pixels == img.pixels); // bitwise

    // byte-deterministic writer
    write_f32i(img, tmp.file("img2.f32i"));
    CHECK(testutil::slurp(path) == testutil::slurp(tmp.file("img2.f32i")));
}

TEST_CASE("PGM16 round-trips through the intensity scale") {
    TempDir tmp("pgm");
    Rng rng(43);
    Image img = random_image(19, 23, 0.3f, rng, 0.0f, 1.2f);
    const std::string path = tmp.file("img.pgm");
    write_pgm16(img, path, 40000.0f);
    Image back = read_pgm16(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.spacing_mm == doctest::Approx(0.3f));
    CHECK(max_abs_diff(back, img) <= 0.5 / 40000.0 + 1e-7);
}

TEST_CASE("mask PGM round-trips bits and spacing") {
    TempDir tmp("maskpgm");
    BinaryMask m(17, 11, false);
    Rng rng(47);
    for (int r = 0; r < 11; ++r) {
        for (int c = 0; c < 17; ++c) m.set(r, c, rng.bernoulli(0.4));
    }
    const std::string path = tmp.file("m.pgm");
    write_mask_pgm(m, path, 0.2f);
    float spacing = 0.0f;
    BinaryMask back = read_mask_pgm(path, &spacing);
    CHECK(back.bits == m.bits);
    CHECK(back.area_px == m.area_px);
    CHECK(spacing == doctest::Approx(0.2f));
}

TEST_CASE("read_png16 decodes 16-bit grayscale PNG with pHYs spacing") {
    TempDir tmp("png");
    Image img(21, 14, 0.2f);
    Rng rng(53);
    for (auto& p : img.pixels) p = float(rng.uniform_below(65536)); // raw counts
    const std::string path = tmp.file("img.png");
    write_png16_fixture(img, path);
    Image back = read_png16(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.spacing_mm == doctest::Approx(0.2f));
    CHECK(max_abs_diff(back, img) == 0.0); // integral values survive exactly
}

TEST_CASE("read_image dispatches on the file magic") {
    TempDir tmp("sniff");
    Rng rng(59);
    Image img = random_image(12, 9, 0.2f, rng);

    write_f32i(img, tmp.file("a.dat"));
    CHECK(read_image(tmp.file("a.dat")).pixels == img.pixels);

    write_pgm16(img, tmp.file("b.dat"), 10000.0f);
    CHECK(read_image(tmp.file("b.dat")).width == 12);

    Image counts(12, 9, 0.2f);
    for (auto& p : counts.pixels) p = float(rng.uniform_below(65536));
    write_png16_fixture(counts, tmp.file("c.dat"));
    CHECK(read_image(tmp.file("c.dat")).pixels == counts.pixels);
}

TEST_CASE("image readers signal I/O problems") {
    TempDir tmp("ioerr");
    CHECK_THROWS_AS(read_image(tmp.file("missing.f32i")), IoError);
    std::ofstream(tmp.file("garbage.bin")) << "not an image at all";
    CHECK_THROWS_AS(read_image(tmp.file("garbage.bin")), IoError);
    // truncated F32I payload
    Image img(8, 8, 0.2f, 1.0f);
    write_f32i(img, tmp.file("trunc.f32i"));
    std::string bytes = testutil::slurp(tmp.file("trunc.f32i"));
    std::ofstream(tmp.file("trunc2.f32i"), std::ios::binary)
        << bytes.substr(0, bytes.size() - 17);
    CHECK_THROWS_AS(read_f32i(tmp.file("trunc2.f32i")), IoError);
}
