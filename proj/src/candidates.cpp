#include "lesiondet/candidates.hpp"

#include "lesiondet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace lesiondet {

ProbabilityMap probability_map_from_image(const Image& img) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float v = img.pixels[i];
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw DataError("probability map value " + std::to_string(v) + " at pixel " +
                            std::to_string(i) + " is outside [0,1]");
        }
    }
    ProbabilityMap map;
    map.width = img.width;
    map.height = img.height;
    map.spacing_mm = img.spacing_mm;
    map.values = img.pixels;
    return map;
}

BinaryMask binarize(const ProbabilityMap& map, float threshold) {
    if (!(threshold >= 0.0f && threshold <= 1.0f)) {
        throw std::invalid_argument("binarize: threshold must be in [0,1]");
    }
    BinaryMask mask(map.width, map.height);
    for (int r = 0; r < map.height; ++r) {
        for (int c = 0; c < map.width; ++c) {
            if (map.at(r, c) > threshold) mask.set(r, c, true);
        }
    }
    return mask;
}

namespace {

std::int32_t uf_find(std::vector<std::int32_t>& parent, std::int32_t x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] =
            parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

void uf_union(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
    a = uf_find(parent, a);
    b = uf_find(parent, b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
}

} // namespace

Labeling connected_components(const BinaryMask& bits) {
    Labeling out;
    out.width = bits.width;
    out.height = bits.height;
    out.labels.assign(static_cast<std::size_t>(bits.width) * bits.height, 0);
    if (bits.width == 0 || bits.height == 0) return out;

    // Two-pass union-find: provisional labels from already-scanned
    // neighbors, then roots renumbered in raster order of first occurrence.
    std::vector<std::int32_t> parent;
    parent.push_back(0); // dummy so provisional labels start at 1
    const int w = bits.width, h = bits.height;
    auto lab = [&out, w](int r, int c) -> std::int32_t& {
        return out.labels[static_cast<std::size_t>(r) * w + c];
    };
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!bits.at(r, c)) continue;
            std::int32_t best = 0;
            const int nr[4] = {r - 1, r - 1, r - 1, r};
            const int nc[4] = {c - 1, c, c + 1, c - 1};
            std::int32_t neigh[4];
            int n_neigh = 0;
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nc[k] < 0 || nc[k] >= w) continue;
                const std::int32_t l = lab(nr[k], nc[k]);
                if (l > 0) {
                    neigh[n_neigh++] = l;
                    if (best == 0 || l < best) best = l;
                }
            }
            if (best == 0) {
                best = static_cast<std::int32_t>(parent.size());
                parent.push_back(best);
            } else {
                for (int k = 0; k < n_neigh; ++k) uf_union(parent, best, neigh[k]);
            }
            lab(r, c) = best;
        }
    }

    std::unordered_map<std::int32_t, std::int32_t> final_label;
    for (auto& l : out.labels) {
        if (l == 0) continue;
        const std::int32_t root = uf_find(parent, l);
        auto it = final_label.find(root);
        if (it == final_label.end()) {
            it = final_label.emplace(root, static_cast<std::int32_t>(final_label.size()) + 1).first;
        }
        l = it->second;
    }
    out.count = static_cast<int>(final_label.size());
    return out;
}

std::vector<Candidate> extract_candidates(const ProbabilityMap& map, float base_threshold,
                                          float cluster_radius_mm) {
    if (!(base_threshold >= 0.0f && base_threshold <= 1.0f)) {
        throw std::invalid_argument("extract_candidates: base_threshold must be in [0,1]");
    }
    if (!(cluster_radius_mm > 0.0f)) {
        throw std::invalid_argument("extract_candidates: cluster_radius_mm must be positive");
    }
    if (!(map.spacing_mm > 0.0f)) {
        throw std::invalid_argument("extract_candidates: map needs a positive spacing");
    }

    struct Raw {
        float score;
        int row, col;
    };
    std::vector<Raw> raw;
    for (int r = 0; r < map.height; ++r) {
        for (int c = 0; c < map.width; ++c) {
            const float v = map.at(r, c);
            if (v > base_threshold) raw.push_back(Raw{v, r, c});
        }
    }
    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // raw is raster-ordered, so a stable sort by descending score breaks
    // ties in raster order.
    std::stable_sort(order.begin(), order.end(), [&raw](std::size_t a, std::size_t b) {
        return raw[a].score > raw[b].score;
    });

    // Greedy suppression with a uniform grid of bucket edge = radius (px),
    // so each retained candidate only scans its 3x3 bucket neighborhood.
    const double radius_px = static_cast<double>(cluster_radius_mm) / map.spacing_mm;
    const int bucket_px = std::max(1, static_cast<int>(std::ceil(radius_px)));
    const int buckets_w = map.width / bucket_px + 1;
    const int buckets_h = map.height / bucket_px + 1;
    std::vector<std::vector<std::uint32_t>> buckets(
        static_cast<std::size_t>(buckets_w) * buckets_h);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::size_t key = static_cast<std::size_t>(raw[i].row / bucket_px) * buckets_w +
                                static_cast<std::size_t>(raw[i].col / bucket_px);
        buckets[key].push_back(static_cast<std::uint32_t>(i));
    }

    const double radius2 =
        static_cast<double>(cluster_radius_mm) * static_cast<double>(cluster_radius_mm);
    std::vector<char> suppressed(raw.size(), 0);
    std::vector<Candidate> retained;
    for (std::size_t idx : order) {
        if (suppressed[idx]) continue;
        const Raw& win = raw[idx];
        retained.push_back(Candidate{win.col * static_cast<double>(map.spacing_mm),
                                     win.row * static_cast<double>(map.spacing_mm), win.score,
                                     win.row, win.col});
        const int brow = win.row / bucket_px, bcol = win.col / bucket_px;
        for (int br = std::max(0, brow - 1); br <= std::min(buckets_h - 1, brow + 1); ++br) {
            for (int bc = std::max(0, bcol - 1); bc <= std::min(buckets_w - 1, bcol + 1); ++bc) {
                for (std::uint32_t other : buckets[static_cast<std::size_t>(br) * buckets_w + bc]) {
                    if (suppressed[other]) continue;
                    const double dr = (raw[other].row - win.row) * static_cast<double>(map.spacing_mm);
                    const double dc = (raw[other].col - win.col) * static_cast<double>(map.spacing_mm);
                    if (dr * dr + dc * dc <= radius2) suppressed[other] = 1;
                }
            }
        }
    }
    return retained;
}

std::vector<LesionPoint> lesion_points(const ImageRecord& record) {
    std::vector<LesionPoint> points;
    points.reserve(record.lesions.size());
    for (const auto& les : record.lesions) {
        float spacing = 0.0f;
        BinaryMask mask = read_mask_pgm(les.mask_path, &spacing);
        if (!(spacing > 0.0f)) {
            throw DataError("lesion mask " + les.mask_path + " lacks a pixel spacing");
        }
        if (mask.area_px == 0) {
            throw DataError("lesion mask " + les.mask_path + " is empty");
        }
        const auto [crow, ccol] = mask_centroid(mask);
        points.push_back(LesionPoint{ccol * spacing, crow * spacing, les.id, record.image_id()});
    }
    return points;
}

void write_candidates_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<Candidate>>>& by_image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "image_id,x_mm,y_mm,score\n";
    char buf[128];
    for (const auto& [image_id, cands] : by_image) {
        for (const auto& c : cands) {
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", c.x_mm, c.y_mm,
                          static_cast<double>(c.score));
            out << image_id << buf;
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

} // namespace lesiondet
