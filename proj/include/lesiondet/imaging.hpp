#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lesiondet {

// 2-D floating-point image with isotropic physical pixel spacing.
// Pixels are stored row-major; pixel (row, col) has physical position
// (x, y) = (col * spacing_mm, row * spacing_mm).
struct Image {
    int width = 0;
    int height = 0;
    float spacing_mm = 1.0f;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h, float spacing, float fill = 0.0f);

    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::size_t pixel_count() const { return pixels.size(); }
};

// Binary grid congruent with an image. area_px caches the set-bit count and
// is kept consistent by all producers in this library.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // 0 or 1 per pixel, row-major
    std::int64_t area_px = 0;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false);

    bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool v);
    void recount();
};

// The breast region of an image; defines "within the breast" for sampling
// and normalization.
using BreastMask = BinaryMask;

// Kernel radius used by gaussian_blur: ceil(3 * sigma / spacing) pixels.
int gaussian_kernel_radius(float sigma_mm, float spacing_mm);

// Separable Gaussian convolution with edge replication at the borders.
// Throws std::invalid_argument for non-positive sigma.
Image gaussian_blur(const Image& img, float sigma_mm);

// Bilinear resampling onto a coarser grid (downscale only). The output grid
// has floor(extent_mm / target_mm) pixels per axis and spacing target_mm.
// Callers are expected to anti-alias with gaussian_blur(0.5 * target_mm)
// beforehand when actually downscaling.
Image resample_to_spacing(const Image& img, float target_mm);

// Nearest-neighbour mask resampling matching resample_to_spacing geometry.
BinaryMask resample_mask_nearest(const BinaryMask& mask, float spacing_mm, float target_mm);

// Difference-of-Gaussians band decomposition. Returns sigmas.size() + 1
// images: img - blur(s_1), blur(s_i) - blur(s_{i+1}) ..., and the residual
// low-pass blur(s_K). The bands sum back to the input.
std::vector<Image> decompose_bands(const Image& img, const std::vector<float>& sigmas_mm);

// Energy band normalization: each band of decompose_bands is divided by its
// standard deviation measured inside the mask (skipped when std < 1e-8),
// then the bands are re-summed.
Image band_normalize(const Image& img, const BreastMask& mask, const std::vector<float>& sigmas_mm);

// Affine map sending the in-mask minimum to 0 and maximum to 1; all pixels
// (including out-of-mask) are clamped to [0, 1]. A constant in-mask image
// maps to all zeros.
Image scale_to_unit(const Image& img, const BreastMask& mask);

// Threshold at 5% of the image maximum, keep the largest 8-connected
// component, fill enclosed holes. Input must be a raw (pre-normalization)
// intensity image. Throws DataError on an all-zero image.
BreastMask estimate_breast_mask(const Image& img);

// ---- file I/O -------------------------------------------------------------
//
// Formats: "F32I" (internal interchange: magic `F32I\n`, ASCII header
// `width height spacing_mm\n`, little-endian float32 pixels row-major),
// 16-bit PGM (P5), and 16-bit grayscale PNG (read only). PGM files written
// here carry `# spacing_mm` / `# intensity_scale` comments so raw pixel
// values and geometry round-trip.

Image read_image(const std::string& path); // dispatches on file magic

Image read_f32i(const std::string& path);
void write_f32i(const Image& img, const std::string& path);

Image read_pgm16(const std::string& path);
void write_pgm16(const Image& img, const std::string& path, float intensity_scale);

Image read_png16(const std::string& path);

// Masks are stored as 0/255 8-bit PGM. spacing_out, when non-null, receives
// the `# spacing_mm` comment value (or 0 when absent).
BinaryMask read_mask_pgm(const std::string& path, float* spacing_out = nullptr);
void write_mask_pgm(const BinaryMask& mask, const std::string& path, float spacing_mm);

} // namespace lesiondet
