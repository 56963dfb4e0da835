#pragma once

#include "lesiondet/imaging.hpp"
#include "lesiondet/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lesiondet {

enum class View { CC, MLO };
enum class Laterality { L, R };
enum class Split { train, val, test };

std::string to_string(View v);
std::string to_string(Laterality l);
std::string to_string(Split s);
View view_from_string(const std::string& s);
Laterality laterality_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// One annotated lesion: a mask file congruent with its image, plus the
// center of mass in physical mm (recomputable from the mask).
struct LesionAnnotation {
    std::string id;
    std::string mask_path;
    double com_x_mm = 0.0;
    double com_y_mm = 0.0;
};

struct ImageRecord {
    std::string exam_id;
    std::string path;
    View view = View::CC;
    Laterality laterality = Laterality::L;
    std::string breast_mask_path; // optional, filled by preprocessing
    std::vector<LesionAnnotation> lesions;

    bool is_normal() const { return lesions.empty(); }
    std::string image_id() const; // file stem of path, unique within a dataset
};

struct ExamRecord {
    std::string exam_id;
    std::vector<ImageRecord> images;

    // An exam is malignant iff any of its images has at least one lesion.
    bool malignant() const;
};

// JSON-lines manifest: one ImageRecord per line with fields
// {exam_id, path, view, laterality, lesions: [{id, mask_path, com_mm:[x,y]}]}
// plus the optional breast_mask field. Lines are grouped into exams by
// exam_id in order of first appearance.
std::vector<ExamRecord> read_manifest(const std::string& path);
void write_manifest(const std::vector<ExamRecord>& exams, const std::string& path);

struct SplitAssignment {
    std::map<std::string, Split> by_exam;
    Split at(const std::string& exam_id) const;
};

// Deterministic stratified split: 50% train / 10% val / 40% test by exam,
// stratified by exam label, largest-remainder rounding, and a fixup that
// keeps every split nonempty.
SplitAssignment split_exams(const std::vector<ExamRecord>& exams, std::uint64_t seed);

SplitAssignment read_split(const std::string& path);
void write_split(const SplitAssignment& split, const std::string& path);

// Unweighted centroid of set pixels as (row, col); DataError when empty.
std::pair<double, double> mask_centroid(const BinaryMask& mask);

// ---- patch sampling ---------------------------------------------------------

// One training sample: patch pixels and a binary target, both patch_px
// square, row-major.
struct Sample {
    int patch_px = 0;
    std::vector<float> patch;
    std::vector<float> target;
};

// The patch window covering rows [row0, row0 + size) and columns
// [col0, col0 + size); a center c maps to start c - size/2.
struct PatchWindow {
    int row0 = 0;
    int col0 = 0;
    int size = 0;
};
PatchWindow patch_window(int center_row, int center_col, int patch_px);

// Positive sample centered on the center of mass of lesion_masks[index];
// out-of-image regions are zero in both patch and target. The target is the
// union of every lesion mask intersecting the window.
Sample sample_positive_patch(const Image& img, const std::vector<BinaryMask>& lesion_masks,
                             std::size_t lesion_index, int patch_px);

// Negative sample with its center drawn uniformly from the breast mask.
// Only images of normal exams qualify; the target is all zeros.
Sample sample_negative_patch(const ExamRecord& exam, const Image& img, const BreastMask& mask,
                             Rng& rng, int patch_px);

// Deterministic flip core: mirrors patch and target together.
void flip_sample(Sample& s, bool up_down, bool left_right);

// Independent 50% up-down and 50% left-right flips (up-down drawn first).
void augment_flip(Sample& s, Rng& rng);

// ---- epoch composition --------------------------------------------------------

struct PositiveRef {
    int image_index = 0;  // caller's image table
    int lesion_index = 0;
};

// One scheduled sample of an epoch. Negatives carry the index of the normal
// image to sample from; both kinds carry a per-sample seed that drives any
// later randomness (negative center, flips), which keeps replays exact even
// when samples are prepared out of order.
struct SampleRef {
    bool positive = false;
    int image_index = 0;
    int lesion_index = 0;
    std::uint64_t seed = 0;
};

// Every positive exactly once plus an equal number of freshly drawn
// negatives from the given normal images, shuffled.
std::vector<SampleRef> compose_epoch(const std::vector<PositiveRef>& positives,
                                     const std::vector<int>& normal_images, Rng& rng);

// ---- synthetic phantoms ---------------------------------------------------------

struct PhantomSpec {
    int width = 512;
    int height = 512;
    float spacing_mm = 0.2f;
    float min_diameter_mm = 6.0f;   // lesion diameter range; 40 mm stays well
    float max_diameter_mm = 40.0f;  // under the 57 mm annotation maximum
    float min_contrast = 0.25f;
    float max_contrast = 0.5f;
    float noise_sigma = 0.05f;      // background texture amplitude
    float noise_corr_mm = 0.6f;     // band-limit of the background texture
};

// In-memory phantom with its ground truth (support used for synthesis plus
// one mask per planted lesion).
struct PhantomImage {
    Image image;
    BinaryMask support;
    std::vector<BinaryMask> lesion_masks;
};

PhantomImage generate_phantom_image(Rng& rng, const PhantomSpec& spec, int lesion_count);

// Plants one soft blob with a Gaussian radial profile whose half-maximum
// contour (the annotation mask) is an ellipse of the given diameter and
// aspect. When support is non-null the blob is confined to it.
void add_phantom_lesion(Image& img, BinaryMask& mask_out, double center_row, double center_col,
                        double diameter_mm, double aspect, double angle_rad, double contrast,
                        const BinaryMask* support = nullptr);

// Generates 1-4 view images (PGM, plus lesion mask PGMs) under out_dir and
// returns the exam record. Malignant exams get lesions planted in every
// view of one laterality; normal exams get none.
ExamRecord generate_phantom_exam(Rng& rng, const PhantomSpec& spec, const std::string& exam_id,
                                 bool malignant, const std::string& out_dir);

} // namespace lesiondet
