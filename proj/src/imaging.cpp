#include "lesiondet/imaging.hpp"

#include "lesiondet/errors.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <png.h>

namespace lesiondet {

namespace {

int clampi(int v, int lo, int hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

void require_mask_congruent(const Image& img, const BinaryMask& mask, const char* who) {
    if (mask.width != img.width || mask.height != img.height) {
        throw std::invalid_argument(std::string(who) + ": mask dimensions (" +
                                    std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                    ") do not match image (" + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + ")");
    }
}

} // namespace

Image::Image(int w, int h, float spacing, float fill)
    : width(w), height(h), spacing_mm(spacing),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w <= 0 || h <= 0 || !(spacing > 0.0f)) {
        throw std::invalid_argument("Image: width, height and spacing_mm must be positive");
    }
}

BinaryMask::BinaryMask(int w, int h, bool fill)
    : width(w), height(h),
      bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0),
      area_px(fill ? static_cast<std::int64_t>(w) * h : 0) {
    if (w <= 0 || h <= 0) {
        throw std::invalid_argument("BinaryMask: dimensions must be positive");
    }
}

void BinaryMask::set(int row, int col, bool v) {
    std::uint8_t& b = bits[static_cast<std::size_t>(row) * width + col];
    area_px += (v ? 1 : 0) - (b ? 1 : 0);
    b = v ? 1 : 0;
}

void BinaryMask::recount() {
    area_px = 0;
    for (std::uint8_t b : bits) area_px += b ? 1 : 0;
}

int gaussian_kernel_radius(float sigma_mm, float spacing_mm) {
    return static_cast<int>(std::ceil(3.0 * static_cast<double>(sigma_mm) / spacing_mm));
}

Image gaussian_blur(const Image& img, float sigma_mm) {
    if (!(sigma_mm > 0.0f)) {
        throw std::invalid_argument("gaussian_blur: sigma_mm must be positive");
    }

    const double sigma_px = static_cast<double>(sigma_mm) / img.spacing_mm;
    const int radius = gaussian_kernel_radius(sigma_mm, img.spacing_mm);

    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i / sigma_px) * (i / sigma_px));
        kernel[i + radius] = v;
        ksum += v;
    }
    for (double& v : kernel) v /= ksum;

    const int w = img.width, h = img.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);

    // horizontal pass, edge replication
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * img.at(r, clampi(c + i, 0, w - 1));
            }
            tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
    }
    // vertical pass
    Image out(w, h, img.spacing_mm);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(clampi(r + i, 0, h - 1)) * w + c];
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

Image resample_to_spacing(const Image& img, float target_mm) {
    if (!(target_mm > 0.0f)) {
        throw std::invalid_argument("resample_to_spacing: target_mm must be positive");
    }
    if (target_mm < img.spacing_mm) {
        throw std::invalid_argument("resample_to_spacing: upscaling requested (target " +
                                    std::to_string(target_mm) + " mm < spacing " +
                                    std::to_string(img.spacing_mm) + " mm)");
    }
    if (target_mm == img.spacing_mm) return img;

    const double ratio = static_cast<double>(target_mm) / img.spacing_mm;
    const int out_w = static_cast<int>(std::floor(img.width * static_cast<double>(img.spacing_mm) / target_mm));
    const int out_h = static_cast<int>(std::floor(img.height * static_cast<double>(img.spacing_mm) / target_mm));
    if (out_w < 1 || out_h < 1) {
        throw std::invalid_argument("resample_to_spacing: image extent smaller than one target pixel");
    }

    Image out(out_w, out_h, target_mm);
    for (int i = 0; i < out_h; ++i) {
        const double y = (i + 0.5) * ratio - 0.5;
        const int y0 = clampi(static_cast<int>(std::floor(y)), 0, img.height - 1);
        const int y1 = clampi(y0 + 1, 0, img.height - 1);
        const double fy = std::min(std::max(y - y0, 0.0), 1.0);
        for (int j = 0; j < out_w; ++j) {
            const double x = (j + 0.5) * ratio - 0.5;
            const int x0 = clampi(static_cast<int>(std::floor(x)), 0, img.width - 1);
            const int x1 = clampi(x0 + 1, 0, img.width - 1);
            const double fx = std::min(std::max(x - x0, 0.0), 1.0);
            const double v = (1.0 - fy) * ((1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                             fy * ((1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
            out.at(i, j) = static_cast<float>(v);
        }
    }
    return out;
}

BinaryMask resample_mask_nearest(const BinaryMask& mask, float spacing_mm, float target_mm) {
    if (!(spacing_mm > 0.0f) || !(target_mm > 0.0f)) {
        throw std::invalid_argument("resample_mask_nearest: spacings must be positive");
    }
    if (target_mm < spacing_mm) {
        throw std::invalid_argument("resample_mask_nearest: upscaling requested");
    }
    if (target_mm == spacing_mm) return mask;

    const double ratio = static_cast<double>(target_mm) / spacing_mm;
    const int out_w = static_cast<int>(std::floor(mask.width * static_cast<double>(spacing_mm) / target_mm));
    const int out_h = static_cast<int>(std::floor(mask.height * static_cast<double>(spacing_mm) / target_mm));
    if (out_w < 1 || out_h < 1) {
        throw std::invalid_argument("resample_mask_nearest: mask extent smaller than one target pixel");
    }
    BinaryMask out(out_w, out_h);
    for (int i = 0; i < out_h; ++i) {
        const int si = clampi(static_cast<int>(std::lround((i + 0.5) * ratio - 0.5)), 0, mask.height - 1);
        for (int j = 0; j < out_w; ++j) {
            const int sj = clampi(static_cast<int>(std::lround((j + 0.5) * ratio - 0.5)), 0, mask.width - 1);
            if (mask.at(si, sj)) out.set(i, j, true);
        }
    }
    return out;
}

std::vector<Image> decompose_bands(const Image& img, const std::vector<float>& sigmas_mm) {
    if (sigmas_mm.empty()) {
        throw std::invalid_argument("decompose_bands: need at least one sigma");
    }
    for (std::size_t i = 0; i < sigmas_mm.size(); ++i) {
        if (!(sigmas_mm[i] > 0.0f)) {
            throw std::invalid_argument("decompose_bands: sigmas must be positive");
        }
        if (i > 0 && !(sigmas_mm[i] > sigmas_mm[i - 1])) {
            throw std::invalid_argument("decompose_bands: sigmas must be strictly increasing");
        }
    }

    std::vector<Image> blurred;
    blurred.reserve(sigmas_mm.size());
    for (float s : sigmas_mm) blurred.push_back(gaussian_blur(img, s));

    std::vector<Image> bands;
    bands.reserve(sigmas_mm.size() + 1);

    Image b0(img.width, img.height, img.spacing_mm);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) b0.pixels[p] = img.pixels[p] - blurred[0].pixels[p];
    bands.push_back(std::move(b0));

    for (std::size_t k = 0; k + 1 < blurred.size(); ++k) {
        Image b(img.width, img.height, img.spacing_mm);
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            b.pixels[p] = blurred[k].pixels[p] - blurred[k + 1].pixels[p];
        }
        bands.push_back(std::move(b));
    }
    bands.push_back(std::move(blurred.back())); // residual low-pass
    return bands;
}

Image band_normalize(const Image& img, const BreastMask& mask, const std::vector<float>& sigmas_mm) {
    require_mask_congruent(img, mask, "band_normalize");
    if (mask.area_px <= 0) {
        throw std::invalid_argument("band_normalize: mask is empty");
    }

    std::vector<Image> bands = decompose_bands(img, sigmas_mm);

    for (Image& band : bands) {
        double sum = 0.0, sum2 = 0.0;
        for (int r = 0; r < band.height; ++r) {
            for (int c = 0; c < band.width; ++c) {
                if (!mask.at(r, c)) continue;
                const double v = band.at(r, c);
                sum += v;
                sum2 += v * v;
            }
        }
        const double n = static_cast<double>(mask.area_px);
        const double mean = sum / n;
        const double var = std::max(0.0, sum2 / n - mean * mean);
        const double sd = std::sqrt(var);
        if (sd < 1e-8) continue; // degenerate band left untouched
        const float inv = static_cast<float>(1.0 / sd);
        for (float& v : band.pixels) v *= inv;
    }

    Image out(img.width, img.height, img.spacing_mm);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        float acc = 0.0f;
        for (const Image& band : bands) acc += band.pixels[p];
        out.pixels[p] = acc;
    }
    return out;
}

Image scale_to_unit(const Image& img, const BreastMask& mask) {
    require_mask_congruent(img, mask, "scale_to_unit");

    float lo = 0.0f, hi = 0.0f;
    bool seen = false;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            if (!mask.at(r, c)) continue;
            const float v = img.at(r, c);
            if (!seen) {
                lo = hi = v;
                seen = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }

    Image out(img.width, img.height, img.spacing_mm);
    if (!seen || !(hi > lo)) {
        return out; // empty mask or constant in-mask values: all zeros
    }
    const float scale = 1.0f / (hi - lo);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const float v = (img.pixels[p] - lo) * scale;
        out.pixels[p] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

namespace {

// Iterative flood fill over a byte grid; labels pixels where
// grid[p] == from with `to`. Used for the breast-mask cleanup only; the
// general-purpose labeling operation lives in the candidates module.
void flood_fill(std::vector<std::uint8_t>& grid, int w, int h, int sr, int sc,
                std::uint8_t from, std::uint8_t to, bool eight_conn) {
    std::vector<std::pair<int, int>> stack;
    stack.emplace_back(sr, sc);
    grid[static_cast<std::size_t>(sr) * w + sc] = to;
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                if (!eight_conn && dr != 0 && dc != 0) continue;
                const int nr = r + dr, nc = c + dc;
                if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                std::uint8_t& g = grid[static_cast<std::size_t>(nr) * w + nc];
                if (g != from) continue;
                g = to;
                stack.emplace_back(nr, nc);
            }
        }
    }
}

} // namespace

BreastMask estimate_breast_mask(const Image& img) {
    float maxv = 0.0f;
    for (float v : img.pixels) maxv = std::max(maxv, v);
    if (!(maxv > 0.0f)) {
        throw DataError("estimate_breast_mask: image is all zero, breast mask is empty");
    }
    const float thr = 0.05f * maxv;

    const int w = img.width, h = img.height;
    // 0 = background, 1 = above threshold (unvisited), 2 = current component,
    // 3 = largest component so far, 4 = outside-region marker.
    std::vector<std::uint8_t> grid(img.pixel_count(), 0);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        if (img.pixels[p] > thr) grid[p] = 1;
    }

    std::int64_t best_area = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (grid[static_cast<std::size_t>(r) * w + c] != 1) continue;
            flood_fill(grid, w, h, r, c, 1, 2, /*eight_conn=*/true);
            std::int64_t area = 0;
            for (std::uint8_t g : grid) area += (g == 2) ? 1 : 0;
            if (area > best_area) {
                best_area = area;
                for (std::uint8_t& g : grid) {
                    if (g == 3) g = 0; // previous winner demoted to background
                    else if (g == 2) g = 3;
                }
            } else {
                for (std::uint8_t& g : grid) {
                    if (g == 2) g = 0;
                }
            }
        }
    }

    // Fill holes: flood the background from the border (4-connectivity over
    // non-component pixels); anything unreached is enclosed by the component.
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (r != 0 && r != h - 1 && c != 0 && c != w - 1) continue;
            if (grid[static_cast<std::size_t>(r) * w + c] == 0) {
                flood_fill(grid, w, h, r, c, 0, 4, /*eight_conn=*/false);
            }
        }
    }

    BreastMask mask(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::uint8_t g = grid[static_cast<std::size_t>(r) * w + c];
            if (g == 3 || g == 0) mask.set(r, c, true); // component or enclosed hole
        }
    }
    return mask;
}

// ---- file I/O --------------------------------------------------------------

namespace {

std::string format_float(float v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

// Reads one PGM header token, skipping whitespace and harvesting
// `# key value` comments into the provided hooks.
std::string next_pgm_token(std::istream& in, float* spacing, float* intensity_scale) {
    while (true) {
        int ch = in.peek();
        if (ch == EOF) throw IoError("PGM: truncated header");
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            std::istringstream ls(line.substr(1));
            std::string key;
            double value = 0.0;
            if (ls >> key >> value) {
                if (key == "spacing_mm" && spacing) *spacing = static_cast<float>(value);
                if (key == "intensity_scale" && intensity_scale) *intensity_scale = static_cast<float>(value);
            }
            continue;
        }
        std::string tok;
        while (in.peek() != EOF && !std::isspace(in.peek())) tok.push_back(static_cast<char>(in.get()));
        return tok;
    }
}

struct PgmRaw {
    int width = 0, height = 0, maxval = 0;
    float spacing_mm = 0.0f;
    float intensity_scale = 0.0f;
    std::vector<std::uint32_t> samples;
};

PgmRaw read_pgm_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    PgmRaw raw;
    if (next_pgm_token(in, &raw.spacing_mm, &raw.intensity_scale) != "P5") {
        throw IoError(path + ": not a binary PGM (P5) file");
    }
    try {
        raw.width = std::stoi(next_pgm_token(in, &raw.spacing_mm, &raw.intensity_scale));
        raw.height = std::stoi(next_pgm_token(in, &raw.spacing_mm, &raw.intensity_scale));
        raw.maxval = std::stoi(next_pgm_token(in, &raw.spacing_mm, &raw.intensity_scale));
    } catch (const std::exception&) {
        throw IoError(path + ": malformed PGM header");
    }
    if (raw.width <= 0 || raw.height <= 0 || raw.maxval <= 0 || raw.maxval > 65535) {
        throw IoError(path + ": unsupported PGM geometry");
    }
    in.get(); // single whitespace after maxval

    const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
    raw.samples.resize(n);
    if (raw.maxval < 256) {
        std::vector<std::uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!in) throw IoError(path + ": truncated PGM pixel data");
        for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buf[i];
    } else {
        std::vector<std::uint8_t> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(2 * n));
        if (!in) throw IoError(path + ": truncated PGM pixel data");
        for (std::size_t i = 0; i < n; ++i) {
            raw.samples[i] = (static_cast<std::uint32_t>(buf[2 * i]) << 8) | buf[2 * i + 1];
        }
    }
    return raw;
}

} // namespace

Image read_f32i(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string magic;
    std::getline(in, magic);
    if (magic != "F32I") throw IoError(path + ": bad F32I magic");

    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    int w = 0, h = 0;
    float spacing = 0.0f;
    if (!(hs >> w >> h >> spacing) || w <= 0 || h <= 0 || !(spacing > 0.0f)) {
        throw IoError(path + ": malformed F32I header");
    }

    Image img(w, h, spacing);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixel_count() * sizeof(float)));
    if (!in) throw IoError(path + ": truncated F32I pixel data");
    return img;
}

void write_f32i(const Image& img, const std::string& path) {
    static_assert(std::endian::native == std::endian::little, "F32I writer assumes little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "F32I\n" << img.width << " " << img.height << " " << format_float(img.spacing_mm) << "\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixel_count() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
}

Image read_pgm16(const std::string& path) {
    PgmRaw raw = read_pgm_raw(path);
    Image img(raw.width, raw.height, raw.spacing_mm > 0.0f ? raw.spacing_mm : 1.0f);
    const float scale = raw.intensity_scale > 0.0f ? 1.0f / raw.intensity_scale : 1.0f;
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
        img.pixels[i] = static_cast<float>(raw.samples[i]) * scale;
    }
    return img;
}

void write_pgm16(const Image& img, const std::string& path, float intensity_scale) {
    if (!(intensity_scale > 0.0f)) {
        throw std::invalid_argument("write_pgm16: intensity_scale must be positive");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "P5\n# spacing_mm " << format_float(img.spacing_mm)
        << "\n# intensity_scale " << format_float(intensity_scale)
        << "\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<std::uint8_t> buf(img.pixel_count() * 2);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double v = std::lround(std::min(65535.0, std::max(0.0, static_cast<double>(img.pixels[i]) * intensity_scale)));
        const std::uint16_t s = static_cast<std::uint16_t>(v);
        buf[2 * i] = static_cast<std::uint8_t>(s >> 8);
        buf[2 * i + 1] = static_cast<std::uint8_t>(s & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

Image read_png16(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError(path + ": libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError(path + ": PNG decode error");
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError(path + ": only grayscale PNG input is supported");
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    png_read_update_info(png, info);

    float spacing = 1.0f;
    png_uint_32 res_x = 0, res_y = 0;
    int unit = 0;
    if (png_get_pHYs(png, info, &res_x, &res_y, &unit) && unit == PNG_RESOLUTION_METER && res_x > 0) {
        spacing = 1000.0f / static_cast<float>(res_x);
    }

    std::vector<std::uint8_t> rowbuf(png_get_rowbytes(png, info));
    Image img(static_cast<int>(w), static_cast<int>(h), spacing);
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, rowbuf.data(), nullptr);
        if (depth == 16) {
            for (png_uint_32 c = 0; c < w; ++c) {
                img.at(static_cast<int>(r), static_cast<int>(c)) =
                    static_cast<float>((static_cast<std::uint32_t>(rowbuf[2 * c]) << 8) | rowbuf[2 * c + 1]);
            }
        } else {
            for (png_uint_32 c = 0; c < w; ++c) {
                img.at(static_cast<int>(r), static_cast<int>(c)) = static_cast<float>(rowbuf[c]);
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

Image read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    in.close();

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (std::memcmp(magic, "F32I", 4) == 0) return read_f32i(path);
    if (std::memcmp(magic, png_sig, 8) == 0) return read_png16(path);
    if (std::memcmp(magic, "P5", 2) == 0) return read_pgm16(path);
    throw IoError(path + ": unrecognized image format (expected F32I, PNG, or PGM)");
}

BinaryMask read_mask_pgm(const std::string& path, float* spacing_out) {
    PgmRaw raw = read_pgm_raw(path);
    if (spacing_out) *spacing_out = raw.spacing_mm;
    BinaryMask mask(raw.width, raw.height);
    const std::uint32_t half = static_cast<std::uint32_t>(raw.maxval) / 2;
    for (int r = 0; r < raw.height; ++r) {
        for (int c = 0; c < raw.width; ++c) {
            if (raw.samples[static_cast<std::size_t>(r) * raw.width + c] > half) mask.set(r, c, true);
        }
    }
    return mask;
}

void write_mask_pgm(const BinaryMask& mask, const std::string& path, float spacing_mm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "P5\n# spacing_mm " << format_float(spacing_mm) << "\n"
        << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> buf(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) buf[i] = mask.bits[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

} // namespace lesiondet
