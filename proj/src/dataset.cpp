#include "lesiondet/dataset.hpp"

#include "lesiondet/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace lesiondet {

using nlohmann::json;

// ---- enums -------------------------------------------------------------------

std::string to_string(View v) { return v == View::CC ? "CC" : "MLO"; }
std::string to_string(Laterality l) { return l == Laterality::L ? "L" : "R"; }
std::string to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
    }
}

View view_from_string(const std::string& s) {
    if (s == "CC") return View::CC;
    if (s == "MLO") return View::MLO;
    throw DataError("unknown view \"" + s + "\" (expected CC or MLO)");
}

Laterality laterality_from_string(const std::string& s) {
    if (s == "L") return Laterality::L;
    if (s == "R") return Laterality::R;
    throw DataError("unknown laterality \"" + s + "\" (expected L or R)");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("unknown split \"" + s + "\" (expected train, val, or test)");
}

// ---- records ------------------------------------------------------------------

std::string ImageRecord::image_id() const {
    return std::filesystem::path(path).stem().string();
}

bool ExamRecord::malignant() const {
    for (const auto& img : images) {
        if (!img.lesions.empty()) return true;
    }
    return false;
}

// ---- manifest ------------------------------------------------------------------

std::vector<ExamRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);

    std::vector<ExamRecord> exams;
    std::unordered_map<std::string, std::size_t> exam_index;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("manifest " + path + " line " + std::to_string(line_no) +
                            ": invalid JSON (" + e.what() + ")");
        }
        ImageRecord rec;
        try {
            rec.exam_id = j.at("exam_id").get<std::string>();
            rec.path = j.at("path").get<std::string>();
            rec.view = view_from_string(j.at("view").get<std::string>());
            rec.laterality = laterality_from_string(j.at("laterality").get<std::string>());
            rec.breast_mask_path = j.value("breast_mask", std::string());
            if (j.contains("lesions")) {
                int k = 0;
                for (const auto& lj : j.at("lesions")) {
                    LesionAnnotation les;
                    les.mask_path = lj.at("mask_path").get<std::string>();
                    les.id = lj.value("id", rec.image_id() + "_lesion" + std::to_string(k));
                    const auto& com = lj.at("com_mm");
                    les.com_x_mm = com.at(0).get<double>();
                    les.com_y_mm = com.at(1).get<double>();
                    rec.lesions.push_back(std::move(les));
                    ++k;
                }
            }
        } catch (const json::exception& e) {
            throw DataError("manifest " + path + " line " + std::to_string(line_no) +
                            ": missing or malformed field (" + std::string(e.what()) + ")");
        }
        auto it = exam_index.find(rec.exam_id);
        if (it == exam_index.end()) {
            exam_index.emplace(rec.exam_id, exams.size());
            exams.push_back(ExamRecord{rec.exam_id, {std::move(rec)}});
        } else {
            exams[it->second].images.push_back(std::move(rec));
        }
    }
    return exams;
}

void write_manifest(const std::vector<ExamRecord>& exams, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path);
    for (const auto& exam : exams) {
        for (const auto& rec : exam.images) {
            json j;
            j["exam_id"] = rec.exam_id;
            j["path"] = rec.path;
            j["view"] = to_string(rec.view);
            j["laterality"] = to_string(rec.laterality);
            if (!rec.breast_mask_path.empty()) j["breast_mask"] = rec.breast_mask_path;
            json lesions = json::array();
            for (const auto& les : rec.lesions) {
                lesions.push_back(json{{"com_mm", {les.com_x_mm, les.com_y_mm}},
                                       {"id", les.id},
                                       {"mask_path", les.mask_path}});
            }
            j["lesions"] = std::move(lesions);
            out << j.dump() << '\n';
        }
    }
    if (!out) throw IoError("short write on manifest " + path);
}

// ---- splitting -----------------------------------------------------------------

Split SplitAssignment::at(const std::string& exam_id) const {
    auto it = by_exam.find(exam_id);
    if (it == by_exam.end()) throw DataError("exam \"" + exam_id + "\" missing from split");
    return it->second;
}

namespace {

// 50/10/40 per class by largest remainder; remainder ties go train > val > test.
std::array<std::size_t, 3> split_counts(std::size_t n) {
    const double fractions[3] = {0.5, 0.1, 0.4};
    std::array<std::size_t, 3> counts{};
    double remainders[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double quota = fractions[s] * static_cast<double>(n);
        counts[s] = static_cast<std::size_t>(quota);
        remainders[s] = quota - static_cast<double>(counts[s]);
        assigned += counts[s];
    }
    while (assigned < n) {
        int best = 0;
        for (int s = 1; s < 3; ++s) {
            if (remainders[s] > remainders[best]) best = s;
        }
        ++counts[best];
        remainders[best] = -1.0;
        ++assigned;
    }
    return counts;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

} // namespace

SplitAssignment split_exams(const std::vector<ExamRecord>& exams, std::uint64_t seed) {
    if (exams.size() < 3) {
        throw DataError("split requires at least 3 exams, got " + std::to_string(exams.size()));
    }
    std::vector<std::size_t> malignant, normal;
    for (std::size_t i = 0; i < exams.size(); ++i) {
        (exams[i].malignant() ? malignant : normal).push_back(i);
    }
    Rng rng(seed);
    shuffle_indices(malignant, rng);
    shuffle_indices(normal, rng);

    // Assignment order within each split is recorded so the nonempty fixup
    // below can move a deterministic exam.
    std::array<std::vector<std::size_t>, 3> members;
    for (const auto* cls : {&malignant, &normal}) {
        const auto counts = split_counts(cls->size());
        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < counts[s]; ++k) members[s].push_back((*cls)[pos++]);
        }
    }
    for (int s = 0; s < 3; ++s) {
        if (!members[s].empty()) continue;
        int donor = 0;
        for (int d = 1; d < 3; ++d) {
            if (members[d].size() > members[donor].size()) donor = d;
        }
        members[s].push_back(members[donor].back());
        members[donor].pop_back();
    }

    SplitAssignment out;
    const Split split_of[3] = {Split::train, Split::val, Split::test};
    for (int s = 0; s < 3; ++s) {
        for (std::size_t idx : members[s]) out.by_exam[exams[idx].exam_id] = split_of[s];
    }
    return out;
}

SplitAssignment read_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("split file " + path + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError("split file " + path + ": expected a JSON object");
    SplitAssignment out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        out.by_exam[it.key()] = split_from_string(it.value().get<std::string>());
    }
    return out;
}

void write_split(const SplitAssignment& split, const std::string& path) {
    json j = json::object();
    for (const auto& [exam_id, s] : split.by_exam) j[exam_id] = to_string(s);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write split file " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("short write on split file " + path);
}

// ---- patch sampling -------------------------------------------------------------

std::pair<double, double> mask_centroid(const BinaryMask& mask) {
    if (mask.area_px == 0) throw DataError("mask_centroid: empty mask");
    double row_sum = 0.0, col_sum = 0.0;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (mask.at(r, c)) {
                row_sum += r;
                col_sum += c;
            }
        }
    }
    const double n = static_cast<double>(mask.area_px);
    return {row_sum / n, col_sum / n};
}

PatchWindow patch_window(int center_row, int center_col, int patch_px) {
    if (patch_px < 1) throw std::invalid_argument("patch_window: patch_px must be positive");
    return PatchWindow{center_row - patch_px / 2, center_col - patch_px / 2, patch_px};
}

namespace {

// Copies the in-bounds part of the window from src (row-major width x height
// grid) into dst (size x size, already zero-filled).
template <typename Fill>
void for_window_overlap(const PatchWindow& win, int width, int height, Fill&& fill) {
    const int r_begin = std::max(0, -win.row0);
    const int r_end = std::min(win.size, height - win.row0);
    const int c_begin = std::max(0, -win.col0);
    const int c_end = std::min(win.size, width - win.col0);
    for (int r = r_begin; r < r_end; ++r) {
        for (int c = c_begin; c < c_end; ++c) {
            fill(r, c, win.row0 + r, win.col0 + c);
        }
    }
}

void copy_patch_pixels(const Image& img, const PatchWindow& win, std::vector<float>& dst) {
    for_window_overlap(win, img.width, img.height, [&](int pr, int pc, int ir, int ic) {
        dst[static_cast<std::size_t>(pr) * win.size + pc] = img.at(ir, ic);
    });
}

} // namespace

Sample sample_positive_patch(const Image& img, const std::vector<BinaryMask>& lesion_masks,
                             std::size_t lesion_index, int patch_px) {
    if (lesion_index >= lesion_masks.size()) {
        throw std::invalid_argument("sample_positive_patch: lesion index out of range");
    }
    if (patch_px < 1) throw std::invalid_argument("sample_positive_patch: patch_px must be positive");
    for (const auto& m : lesion_masks) {
        if (m.width != img.width || m.height != img.height) {
            throw std::invalid_argument("sample_positive_patch: lesion mask dims do not match image");
        }
    }
    const auto [crow, ccol] = mask_centroid(lesion_masks[lesion_index]);
    const PatchWindow win = patch_window(static_cast<int>(std::lround(crow)),
                                         static_cast<int>(std::lround(ccol)), patch_px);
    Sample s;
    s.patch_px = patch_px;
    s.patch.assign(static_cast<std::size_t>(patch_px) * patch_px, 0.0f);
    s.target.assign(static_cast<std::size_t>(patch_px) * patch_px, 0.0f);
    copy_patch_pixels(img, win, s.patch);
    for (const auto& m : lesion_masks) {
        for_window_overlap(win, img.width, img.height, [&](int pr, int pc, int ir, int ic) {
            if (m.at(ir, ic)) s.target[static_cast<std::size_t>(pr) * win.size + pc] = 1.0f;
        });
    }
    return s;
}

Sample sample_negative_patch(const ExamRecord& exam, const Image& img, const BreastMask& mask,
                             Rng& rng, int patch_px) {
    if (exam.malignant()) {
        throw std::invalid_argument("sample_negative_patch: exam " + exam.exam_id +
                                    " is malignant; negatives come from normal exams only");
    }
    if (patch_px < 1) throw std::invalid_argument("sample_negative_patch: patch_px must be positive");
    if (mask.width != img.width || mask.height != img.height) {
        throw std::invalid_argument("sample_negative_patch: breast mask dims do not match image");
    }
    if (mask.area_px == 0) throw DataError("sample_negative_patch: empty breast mask");

    int row = 0, col = 0;
    do {
        row = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(img.height)));
        col = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(img.width)));
    } while (!mask.at(row, col));

    const PatchWindow win = patch_window(row, col, patch_px);
    Sample s;
    s.patch_px = patch_px;
    s.patch.assign(static_cast<std::size_t>(patch_px) * patch_px, 0.0f);
    s.target.assign(static_cast<std::size_t>(patch_px) * patch_px, 0.0f);
    copy_patch_pixels(img, win, s.patch);
    return s;
}

namespace {

void flip_grid(std::vector<float>& grid, int size, bool up_down, bool left_right) {
    if (up_down) {
        for (int r = 0; r < size / 2; ++r) {
            float* top = grid.data() + static_cast<std::size_t>(r) * size;
            float* bot = grid.data() + static_cast<std::size_t>(size - 1 - r) * size;
            std::swap_ranges(top, top + size, bot);
        }
    }
    if (left_right) {
        for (int r = 0; r < size; ++r) {
            float* row = grid.data() + static_cast<std::size_t>(r) * size;
            std::reverse(row, row + size);
        }
    }
}

} // namespace

void flip_sample(Sample& s, bool up_down, bool left_right) {
    flip_grid(s.patch, s.patch_px, up_down, left_right);
    flip_grid(s.target, s.patch_px, up_down, left_right);
}

void augment_flip(Sample& s, Rng& rng) {
    const bool up_down = rng.bernoulli(0.5);
    const bool left_right = rng.bernoulli(0.5);
    flip_sample(s, up_down, left_right);
}

// ---- epoch composition ------------------------------------------------------------

std::vector<SampleRef> compose_epoch(const std::vector<PositiveRef>& positives,
                                     const std::vector<int>& normal_images, Rng& rng) {
    if (positives.empty()) throw DataError("compose_epoch: no positive samples available");
    if (normal_images.empty()) throw DataError("compose_epoch: no normal images available");

    std::vector<SampleRef> refs;
    refs.reserve(2 * positives.size());
    for (const auto& p : positives) {
        refs.push_back(SampleRef{true, p.image_index, p.lesion_index, rng.next_u64()});
    }
    for (std::size_t k = 0; k < positives.size(); ++k) {
        const auto pick = rng.uniform_below(normal_images.size());
        refs.push_back(SampleRef{false, normal_images[static_cast<std::size_t>(pick)], 0,
                                 rng.next_u64()});
    }
    for (std::size_t i = refs.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
        std::swap(refs[i - 1], refs[j]);
    }
    return refs;
}

// ---- phantoms -----------------------------------------------------------------------

void add_phantom_lesion(Image& img, BinaryMask& mask_out, double center_row, double center_col,
                        double diameter_mm, double aspect, double angle_rad, double contrast,
                        const BinaryMask* support) {
    if (diameter_mm <= 0.0) throw std::invalid_argument("add_phantom_lesion: diameter must be positive");
    if (aspect <= 0.0) throw std::invalid_argument("add_phantom_lesion: aspect must be positive");
    if (img.spacing_mm <= 0.0f) throw std::invalid_argument("add_phantom_lesion: image needs spacing");
    if (mask_out.width != img.width || mask_out.height != img.height) {
        mask_out = BinaryMask(img.width, img.height);
    }
    const double spacing = img.spacing_mm;
    // Half-maximum contour: ellipse with semi-axes rx, ry (the annotation).
    const double rx = 0.5 * diameter_mm * aspect;
    const double ry = 0.5 * diameter_mm / aspect;
    const double cos_a = std::cos(angle_rad), sin_a = std::sin(angle_rad);
    const double reach = 3.0 * std::max(rx, ry); // profile < 0.2% of peak beyond 3 radii
    const int r0 = std::max(0, static_cast<int>(std::floor(center_row - reach / spacing)));
    const int r1 = std::min(img.height - 1, static_cast<int>(std::ceil(center_row + reach / spacing)));
    const int c0 = std::max(0, static_cast<int>(std::floor(center_col - reach / spacing)));
    const int c1 = std::min(img.width - 1, static_cast<int>(std::ceil(center_col + reach / spacing)));
    const double ln2 = std::log(2.0);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (support && !support->at(r, c)) continue;
            const double dx = (c - center_col) * spacing;
            const double dy = (r - center_row) * spacing;
            const double xr = dx * cos_a + dy * sin_a;
            const double yr = -dx * sin_a + dy * cos_a;
            const double rho2 = (xr / rx) * (xr / rx) + (yr / ry) * (yr / ry);
            if (rho2 > 9.0) continue;
            img.at(r, c) += static_cast<float>(contrast * std::exp(-ln2 * rho2));
            if (rho2 <= 1.0) mask_out.set(r, c, true);
        }
    }
}

namespace {

struct PlacedLesion {
    double row = 0.0, col = 0.0;
    double diameter_mm = 0.0;
};

// The lesion (with a 2 mm margin) must sit inside the support: checked at
// the center and on an 8-point ring of its bounding radius.
bool placement_fits(const BinaryMask& support, double row, double col, double reach_px) {
    const double diag = reach_px / std::sqrt(2.0);
    const double probes[9][2] = {{0, 0},        {reach_px, 0},  {-reach_px, 0},
                                 {0, reach_px}, {0, -reach_px}, {diag, diag},
                                 {diag, -diag}, {-diag, diag},  {-diag, -diag}};
    for (const auto& p : probes) {
        const int r = static_cast<int>(std::lround(row + p[0]));
        const int c = static_cast<int>(std::lround(col + p[1]));
        if (r < 0 || r >= support.height || c < 0 || c >= support.width || !support.at(r, c)) {
            return false;
        }
    }
    return true;
}

} // namespace

PhantomImage generate_phantom_image(Rng& rng, const PhantomSpec& spec, int lesion_count) {
    if (spec.width < 8 || spec.height < 8) {
        throw std::invalid_argument("generate_phantom_image: image too small");
    }
    if (spec.spacing_mm <= 0.0f) {
        throw std::invalid_argument("generate_phantom_image: spacing must be positive");
    }
    if (lesion_count < 0) {
        throw std::invalid_argument("generate_phantom_image: negative lesion count");
    }

    const int w = spec.width, h = spec.height;
    PhantomImage out;
    out.image = Image(w, h, spec.spacing_mm);
    out.support = BinaryMask(w, h);

    // Elliptical breast support, slightly off-center and randomly sized.
    const double cx = w * (0.5 + rng.uniform(-0.03, 0.03));
    const double cy = h * (0.5 + rng.uniform(-0.03, 0.03));
    const double rx = w * rng.uniform(0.33, 0.42);
    const double ry = h * rng.uniform(0.36, 0.46);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double u = (c - cx) / rx, v = (r - cy) / ry;
            if (u * u + v * v <= 1.0) out.support.set(r, c, true);
        }
    }

    const double base = rng.uniform(0.3, 0.4);
    const double grad_angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);

    // Band-limited texture: white noise blurred to the correlation length,
    // then rescaled to the requested amplitude.
    Image noise(w, h, spec.spacing_mm);
    for (auto& p : noise.pixels) p = static_cast<float>(rng.gaussian());
    Image smooth = gaussian_blur(noise, spec.noise_corr_mm);
    double nsum = 0.0, nsq = 0.0;
    for (float p : smooth.pixels) {
        nsum += p;
        nsq += static_cast<double>(p) * p;
    }
    const double nmean = nsum / smooth.pixels.size();
    const double nvar = std::max(nsq / smooth.pixels.size() - nmean * nmean, 1e-12);
    const double nscale = spec.noise_sigma / std::sqrt(nvar);

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!out.support.at(r, c)) continue;
            const double u = (c - cx) / w, v = (r - cy) / h;
            double val = base + 0.24 * (u * gx + v * gy);
            val += nscale * (smooth.at(r, c) - nmean);
            out.image.at(r, c) = static_cast<float>(std::clamp(val, 0.08, 1.5));
        }
    }

    // Lesions: rejection placement with a 2 mm support margin and pairwise
    // center spacing of the mean diameter plus 5 mm; after 200 misses the
    // diameter shrinks so crowded supports still converge.
    const double spacing = spec.spacing_mm;
    std::vector<PlacedLesion> placed;
    for (int k = 0; k < lesion_count; ++k) {
        double diameter = rng.uniform(spec.min_diameter_mm, spec.max_diameter_mm);
        const double aspect = rng.uniform(0.92, 1.08);
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double contrast = rng.uniform(spec.min_contrast, spec.max_contrast);

        bool found = false;
        double row = cy, col = cx;
        for (int round = 0; round < 8 && !found; ++round) {
            const double reach_px =
                (0.5 * diameter * std::max(aspect, 1.0 / aspect) + 2.0) / spacing;
            for (int attempt = 0; attempt < 200; ++attempt) {
                row = static_cast<double>(rng.uniform_below(static_cast<std::uint64_t>(h)));
                col = static_cast<double>(rng.uniform_below(static_cast<std::uint64_t>(w)));
                if (!placement_fits(out.support, row, col, reach_px)) continue;
                bool clear = true;
                for (const auto& pl : placed) {
                    const double dr = (row - pl.row) * spacing, dc = (col - pl.col) * spacing;
                    const double min_sep = 0.5 * (diameter + pl.diameter_mm) + 5.0;
                    if (dr * dr + dc * dc < min_sep * min_sep) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    found = true;
                    break;
                }
            }
            if (!found) diameter *= 0.8;
        }
        if (!found) continue; // support too crowded; plant fewer lesions

        BinaryMask mask;
        add_phantom_lesion(out.image, mask, row, col, diameter, aspect, angle, contrast,
                           &out.support);
        if (mask.area_px == 0) continue;
        placed.push_back(PlacedLesion{row, col, diameter});
        out.lesion_masks.push_back(std::move(mask));
    }
    return out;
}

ExamRecord generate_phantom_exam(Rng& rng, const PhantomSpec& spec, const std::string& exam_id,
                                 bool malignant, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    const bool two_lateralities = rng.bernoulli(0.8);
    const int single_lat = static_cast<int>(rng.uniform_below(2)); // 0=L, 1=R
    const bool both_views = rng.bernoulli(0.85);
    const int single_view = static_cast<int>(rng.uniform_below(2)); // 0=CC, 1=MLO

    std::vector<Laterality> lats;
    if (two_lateralities) {
        lats = {Laterality::L, Laterality::R};
    } else {
        lats = {single_lat == 0 ? Laterality::L : Laterality::R};
    }
    std::vector<View> views;
    if (both_views) {
        views = {View::CC, View::MLO};
    } else {
        views = {single_view == 0 ? View::CC : View::MLO};
    }
    const std::size_t diseased =
        static_cast<std::size_t>(rng.uniform_below(static_cast<std::uint64_t>(lats.size())));

    ExamRecord exam;
    exam.exam_id = exam_id;
    for (std::size_t li = 0; li < lats.size(); ++li) {
        for (View view : views) {
            int lesion_count = 0;
            if (malignant && li == diseased) {
                lesion_count = 1 + (rng.bernoulli(0.3) ? 1 : 0);
            }
            const std::uint64_t image_seed = rng.next_u64();
            Rng image_rng(image_seed);
            PhantomImage phantom = generate_phantom_image(image_rng, spec, lesion_count);

            const std::string stem = exam_id + "_" + to_string(lats[li]) + to_string(view);
            const std::string img_path = (std::filesystem::path(out_dir) / (stem + ".pgm")).string();
            write_pgm16(phantom.image, img_path, 40000.0f);

            ImageRecord rec;
            rec.exam_id = exam_id;
            rec.path = img_path;
            rec.view = view;
            rec.laterality = lats[li];
            for (std::size_t k = 0; k < phantom.lesion_masks.size(); ++k) {
                const std::string mask_name = stem + "_lesion" + std::to_string(k) + ".pgm";
                const std::string mask_path =
                    (std::filesystem::path(out_dir) / mask_name).string();
                write_mask_pgm(phantom.lesion_masks[k], mask_path, spec.spacing_mm);
                const auto [crow, ccol] = mask_centroid(phantom.lesion_masks[k]);
                LesionAnnotation les;
                les.id = stem + "_lesion" + std::to_string(k);
                les.mask_path = mask_path;
                les.com_x_mm = ccol * spec.spacing_mm;
                les.com_y_mm = crow * spec.spacing_mm;
                rec.lesions.push_back(std::move(les));
            }
            exam.images.push_back(std::move(rec));
        }
    }
    return exam;
}

} // namespace lesiondet
