#pragma once

#include "lesiondet/dataset.hpp"
#include "lesiondet/imaging.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lesiondet {

// Per-pixel lesion-probability image; all values in [0, 1].
struct ProbabilityMap {
    int width = 0;
    int height = 0;
    float spacing_mm = 1.0f;
    std::vector<float> values;

    float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

// Strict validation against the [0,1] range invariant (used when loading
// maps from disk); returns the map or throws DataError.
ProbabilityMap probability_map_from_image(const Image& img);

// A candidate detection: the source pixel (row, col), its physical
// position, and the map value at that pixel.
struct Candidate {
    double x_mm = 0.0;
    double y_mm = 0.0;
    float score = 0.0f;
    int row = 0;
    int col = 0;
};

// Pixel true iff value > threshold (strict).
BinaryMask binarize(const ProbabilityMap& map, float threshold);

// 8-connectivity labeling; labels 1..count assigned in raster order of each
// component's first pixel; 0 is background.
struct Labeling {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;
    int count = 0;
};
Labeling connected_components(const BinaryMask& bits);

// Raw candidates are all pixels above base_threshold; greedy clustering in
// descending score order (ties broken by raster order) suppresses every raw
// candidate within cluster_radius_mm of a retained one. Returned sorted by
// descending score. The FROC threshold sweep filters this list by score,
// which makes candidate sets nested across thresholds by construction.
std::vector<Candidate> extract_candidates(const ProbabilityMap& map, float base_threshold = 0.5f,
                                          float cluster_radius_mm = 15.0f);

// Ground-truth lesion coordinate: unweighted mask centroid in physical mm.
struct LesionPoint {
    double x_mm = 0.0;
    double y_mm = 0.0;
    std::string lesion_id;
    std::string image_id;
};

// Loads each annotation mask of the record and converts it to a LesionPoint.
// Masks must carry their pixel spacing; empty masks are an error.
std::vector<LesionPoint> lesion_points(const ImageRecord& record);

// CSV export: header image_id,x_mm,y_mm,score; 6 decimal places.
void write_candidates_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<Candidate>>>& by_image);

} // namespace lesiondet
