#pragma once

#include "lesiondet/candidates.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lesiondet {

// Matching outcome for one image. A lesion is hit at threshold T iff its
// matched_score exists and is >= T. false_positive_scores is populated only
// for normal images: the paper counts false positives on the normals alone.
struct LesionMatch {
    std::string lesion_id;
    std::optional<float> matched_score;
};

struct ImageMatch {
    std::string image_id;
    std::string exam_id;
    bool normal = true;
    std::vector<LesionMatch> lesions;
    std::vector<float> false_positive_scores;
};

// Per-lesion max-score matching within hit_radius_mm. One candidate may
// credit several lesions; candidates on lesion-bearing images are never
// counted as false positives.
ImageMatch match_image(const std::vector<Candidate>& cands, const std::vector<LesionPoint>& lesions,
                       double hit_radius_mm = 15.0);

struct FrocPoint {
    double threshold = 0.0;
    double fp_per_image = 0.0;
    double sensitivity = 0.0;
};

enum class FrocKind { image, exam };

struct FrocCurve {
    FrocKind kind = FrocKind::image;
    std::vector<FrocPoint> points; // ascending threshold
};

// Threshold grid shared by both curves: the sorted distinct values of
// all_candidate_scores plus a +infinity sentinel.
std::vector<double> froc_thresholds(const std::vector<float>& all_candidate_scores);

// sensitivity(T) = mean over lesion-bearing images of (lesions hit at T /
// lesions in the image); fp_per_image(T) = false positives >= T / number of
// normal images. Requires >= 1 normal image and >= 1 lesion overall.
FrocCurve froc_image_based(const std::vector<ImageMatch>& matches,
                           const std::vector<float>& all_candidate_scores);

// sensitivity(T) = fraction of malignant exams (grouped by exam_id) with at
// least one hit lesion at T; fp_per_image as in the image-based curve.
FrocCurve froc_exam_based(const std::vector<ImageMatch>& matches,
                          const std::vector<float>& all_candidate_scores);

// Step-function readout: highest sensitivity among points with
// fp_per_image <= the query; 0 when no point qualifies.
double sensitivity_at_fp(const FrocCurve& curve, double fp_per_image);

// The reporting operating point: maximum sensitivity, at the lowest
// threshold achieving it (the paper's convention).
FrocPoint max_sensitivity_point(const FrocCurve& curve);

// CSV with header kind,threshold,fp_per_image,sensitivity; one row per
// curve point, image curve first.
void write_froc_csv(const std::string& path, const std::vector<FrocCurve>& curves);
std::vector<FrocCurve> read_froc_csv(const std::string& path);

// Self-contained SVG with both curves (image solid, exam dashed);
// log_fp switches the x axis to log10 scale.
std::string froc_svg(const std::vector<FrocCurve>& curves, bool log_fp);

} // namespace lesiondet
