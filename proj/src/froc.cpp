#include "lesiondet/froc.hpp"

#include "lesiondet/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lesiondet {

ImageMatch match_image(const std::vector<Candidate>& cands, const std::vector<LesionPoint>& lesions,
                       double hit_radius_mm) {
    if (!(hit_radius_mm > 0.0)) {
        throw std::invalid_argument("match_image: hit_radius_mm must be positive");
    }
    ImageMatch out;
    out.normal = lesions.empty();
    if (!lesions.empty()) out.image_id = lesions.front().image_id;

    const double radius2 = hit_radius_mm * hit_radius_mm;
    for (const auto& les : lesions) {
        LesionMatch lm;
        lm.lesion_id = les.lesion_id;
        for (const auto& c : cands) {
            const double dx = c.x_mm - les.x_mm, dy = c.y_mm - les.y_mm;
            if (dx * dx + dy * dy > radius2) continue;
            if (!lm.matched_score || c.score > *lm.matched_score) lm.matched_score = c.score;
        }
        out.lesions.push_back(std::move(lm));
    }
    if (out.normal) {
        out.false_positive_scores.reserve(cands.size());
        for (const auto& c : cands) out.false_positive_scores.push_back(c.score);
    }
    return out;
}

std::vector<double> froc_thresholds(const std::vector<float>& all_candidate_scores) {
    std::vector<double> t(all_candidate_scores.begin(), all_candidate_scores.end());
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    t.push_back(std::numeric_limits<double>::infinity());
    return t;
}

namespace {

// Count of scores >= T, via binary search over an ascending-sorted list.
std::size_t count_at_least(const std::vector<double>& sorted_scores, double threshold) {
    return static_cast<std::size_t>(
        sorted_scores.end() - std::lower_bound(sorted_scores.begin(), sorted_scores.end(), threshold));
}

std::vector<double> sorted_fp_scores(const std::vector<ImageMatch>& matches) {
    std::vector<double> fp;
    for (const auto& m : matches) {
        for (float s : m.false_positive_scores) fp.push_back(static_cast<double>(s));
    }
    std::sort(fp.begin(), fp.end());
    return fp;
}

std::size_t count_normals(const std::vector<ImageMatch>& matches) {
    std::size_t n = 0;
    for (const auto& m : matches) n += m.normal ? 1 : 0;
    return n;
}

} // namespace

FrocCurve froc_image_based(const std::vector<ImageMatch>& matches,
                           const std::vector<float>& all_candidate_scores) {
    const std::size_t n_normal = count_normals(matches);
    if (n_normal == 0) {
        throw DataError("image FROC: no normal images, false-positive rate undefined");
    }
    std::size_t n_lesion_images = 0;
    for (const auto& m : matches) n_lesion_images += m.lesions.empty() ? 0 : 1;
    if (n_lesion_images == 0) {
        throw DataError("image FROC: no lesions anywhere, sensitivity undefined");
    }

    const std::vector<double> fp = sorted_fp_scores(matches);
    FrocCurve curve;
    curve.kind = FrocKind::image;
    for (double t : froc_thresholds(all_candidate_scores)) {
        double sens_sum = 0.0;
        for (const auto& m : matches) {
            if (m.lesions.empty()) continue;
            std::size_t hits = 0;
            for (const auto& lm : m.lesions) {
                if (lm.matched_score && static_cast<double>(*lm.matched_score) >= t) ++hits;
            }
            sens_sum += static_cast<double>(hits) / static_cast<double>(m.lesions.size());
        }
        curve.points.push_back(FrocPoint{
            t, static_cast<double>(count_at_least(fp, t)) / static_cast<double>(n_normal),
            sens_sum / static_cast<double>(n_lesion_images)});
    }
    return curve;
}

FrocCurve froc_exam_based(const std::vector<ImageMatch>& matches,
                          const std::vector<float>& all_candidate_scores) {
    const std::size_t n_normal = count_normals(matches);
    if (n_normal == 0) {
        throw DataError("exam FROC: no normal images, false-positive rate undefined");
    }
    // Group lesion matches by exam; an exam is malignant iff it has lesions.
    std::map<std::string, std::vector<const LesionMatch*>> by_exam;
    for (const auto& m : matches) {
        if (m.lesions.empty()) continue;
        auto& bucket = by_exam[m.exam_id];
        for (const auto& lm : m.lesions) bucket.push_back(&lm);
    }
    if (by_exam.empty()) {
        throw DataError("exam FROC: no malignant exams, sensitivity undefined");
    }

    const std::vector<double> fp = sorted_fp_scores(matches);
    FrocCurve curve;
    curve.kind = FrocKind::exam;
    for (double t : froc_thresholds(all_candidate_scores)) {
        std::size_t exams_hit = 0;
        for (const auto& [exam_id, lesions] : by_exam) {
            for (const auto* lm : lesions) {
                if (lm->matched_score && static_cast<double>(*lm->matched_score) >= t) {
                    ++exams_hit;
                    break;
                }
            }
        }
        curve.points.push_back(FrocPoint{
            t, static_cast<double>(count_at_least(fp, t)) / static_cast<double>(n_normal),
            static_cast<double>(exams_hit) / static_cast<double>(by_exam.size())});
    }
    return curve;
}

double sensitivity_at_fp(const FrocCurve& curve, double fp_per_image) {
    if (curve.points.empty()) throw std::invalid_argument("sensitivity_at_fp: empty curve");
    if (fp_per_image < 0.0) {
        throw std::invalid_argument("sensitivity_at_fp: fp_per_image must be non-negative");
    }
    double best = 0.0;
    for (const auto& p : curve.points) {
        if (p.fp_per_image <= fp_per_image) best = std::max(best, p.sensitivity);
    }
    return best;
}

FrocPoint max_sensitivity_point(const FrocCurve& curve) {
    if (curve.points.empty()) throw std::invalid_argument("max_sensitivity_point: empty curve");
    double max_sens = 0.0;
    for (const auto& p : curve.points) max_sens = std::max(max_sens, p.sensitivity);
    // Points are sorted by ascending threshold, so the first point at the
    // maximum is the lowest threshold achieving it.
    for (const auto& p : curve.points) {
        if (p.sensitivity == max_sens) return p;
    }
    return curve.points.front();
}

// ---- CSV ---------------------------------------------------------------------

namespace {

std::string kind_name(FrocKind k) { return k == FrocKind::image ? "image" : "exam"; }

FrocKind kind_from_name(const std::string& s) {
    if (s == "image") return FrocKind::image;
    if (s == "exam") return FrocKind::exam;
    throw DataError("FROC CSV: unknown curve kind \"" + s + "\"");
}

// Shortest round-trip formatting; infinity prints as "inf".
std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& path) {
    double v = 0.0;
    const char* begin = s.c_str();
    const char* end = begin + s.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw DataError("FROC CSV " + path + ": bad number \"" + s + "\"");
    }
    return v;
}

} // namespace

void write_froc_csv(const std::string& path, const std::vector<FrocCurve>& curves) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out << "kind,threshold,fp_per_image,sensitivity\n";
    for (const auto& curve : curves) {
        for (const auto& p : curve.points) {
            out << kind_name(curve.kind) << ',' << format_double(p.threshold) << ','
                << format_double(p.fp_per_image) << ',' << format_double(p.sensitivity) << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<FrocCurve> read_froc_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "kind,threshold,fp_per_image,sensitivity") {
        throw DataError("FROC CSV " + path + ": missing or wrong header");
    }
    std::vector<FrocCurve> curves;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string kind, t, fp, sens;
        if (!std::getline(row, kind, ',') || !std::getline(row, t, ',') ||
            !std::getline(row, fp, ',') || !std::getline(row, sens)) {
            throw DataError("FROC CSV " + path + ": malformed row \"" + line + "\"");
        }
        const FrocKind k = kind_from_name(kind);
        if (curves.empty() || curves.back().kind != k) {
            curves.push_back(FrocCurve{k, {}});
        }
        curves.back().points.push_back(FrocPoint{parse_double(t, path), parse_double(fp, path),
                                                 parse_double(sens, path)});
    }
    return curves;
}

// ---- SVG ---------------------------------------------------------------------

std::string froc_svg(const std::vector<FrocCurve>& curves, bool log_fp) {
    const double width = 640.0, height = 480.0;
    const double ml = 70.0, mr = 20.0, mt = 20.0, mb = 60.0;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;

    double max_fp = 0.0;
    double min_pos_fp = std::numeric_limits<double>::infinity();
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            max_fp = std::max(max_fp, p.fp_per_image);
            if (p.fp_per_image > 0.0) min_pos_fp = std::min(min_pos_fp, p.fp_per_image);
        }
    }
    if (max_fp <= 0.0) {
        max_fp = 1.0;
        min_pos_fp = 0.1;
    }
    if (!std::isfinite(min_pos_fp)) min_pos_fp = max_fp / 10.0;

    double x_lo, x_hi; // data range of the x axis
    if (log_fp) {
        x_lo = std::pow(10.0, std::floor(std::log10(min_pos_fp)));
        x_hi = std::pow(10.0, std::ceil(std::log10(std::max(max_fp, min_pos_fp * 1.01))));
        if (x_hi <= x_lo) x_hi = x_lo * 10.0;
    } else {
        x_lo = 0.0;
        x_hi = max_fp * 1.05;
    }

    auto x_of = [&](double fp) {
        if (log_fp) {
            const double clamped = std::max(fp, x_lo);
            return ml + plot_w * (std::log10(clamped) - std::log10(x_lo)) /
                            (std::log10(x_hi) - std::log10(x_lo));
        }
        return ml + plot_w * (fp - x_lo) / (x_hi - x_lo);
    };
    auto y_of = [&](double sens) { return mt + plot_h * (1.0 - sens); };
    auto fmt = [](double v) {
        std::ostringstream s;
        s << v;
        return s.str();
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << plot_w << "\" height=\""
        << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";

    // y ticks at 0, 0.2, ..., 1.
    for (int i = 0; i <= 5; ++i) {
        const double sens = i / 5.0;
        const double y = y_of(sens);
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
            << "\" stroke=\"#333\"/>\n";
        svg << "<text x=\"" << ml - 10 << "\" y=\"" << y + 4
            << "\" font-size=\"12\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(sens)
            << "</text>\n";
    }
    // x ticks: decades for log, five divisions for linear.
    std::vector<double> xticks;
    if (log_fp) {
        for (double t = x_lo; t <= x_hi * 1.0001; t *= 10.0) xticks.push_back(t);
    } else {
        for (int i = 0; i <= 5; ++i) xticks.push_back(x_lo + (x_hi - x_lo) * i / 5.0);
    }
    for (double t : xticks) {
        const double x = x_of(t);
        svg << "<line x1=\"" << x << "\" y1=\"" << mt + plot_h << "\" x2=\"" << x << "\" y2=\""
            << mt + plot_h + 5 << "\" stroke=\"#333\"/>\n";
        svg << "<text x=\"" << x << "\" y=\"" << mt + plot_h + 20
            << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">" << fmt(t)
            << "</text>\n";
    }
    svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 15
        << "\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << "false positives per image" << (log_fp ? " (log)" : "") << "</text>\n";
    svg << "<text x=\"18\" y=\"" << mt + plot_h / 2
        << "\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "transform=\"rotate(-90 18 " << mt + plot_h / 2 << ")\">sensitivity</text>\n";

    const char* colors[2] = {"#1f6fb4", "#c23b22"};
    int idx = 0;
    for (const auto& curve : curves) {
        // Plot in ascending fp order (descending threshold).
        std::vector<FrocPoint> pts = curve.points;
        std::sort(pts.begin(), pts.end(), [](const FrocPoint& a, const FrocPoint& b) {
            return a.fp_per_image < b.fp_per_image;
        });
        std::ostringstream poly;
        for (const auto& p : pts) {
            poly << x_of(p.fp_per_image) << "," << y_of(p.sensitivity) << " ";
        }
        const bool is_image = curve.kind == FrocKind::image;
        svg << "<polyline points=\"" << poly.str() << "\" fill=\"none\" stroke=\""
            << colors[idx % 2] << "\" stroke-width=\"2\""
            << (is_image ? "" : " stroke-dasharray=\"6,4\"") << "/>\n";
        const double ly = mt + 20 + 18 * idx;
        svg << "<line x1=\"" << ml + 15 << "\" y1=\"" << ly << "\" x2=\"" << ml + 45 << "\" y2=\""
            << ly << "\" stroke=\"" << colors[idx % 2] << "\" stroke-width=\"2\""
            << (is_image ? "" : " stroke-dasharray=\"6,4\"") << "/>\n";
        svg << "<text x=\"" << ml + 52 << "\" y=\"" << ly + 4
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << kind_name(curve.kind)
            << "-based</text>\n";
        ++idx;
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace lesiondet
