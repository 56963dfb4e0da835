#include "lesiondet/pipeline.hpp"

#include "lesiondet/autodiff.hpp"
#include "lesiondet/candidates.hpp"
#include "lesiondet/errors.hpp"
#include "lesiondet/froc.hpp"
#include "lesiondet/imaging.hpp"
#include "lesiondet/rng.hpp"
#include "lesiondet/unet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace lesiondet {

namespace fs = std::filesystem;

namespace {

// Stream tags for per-purpose random substreams derived from the master seed.
constexpr std::uint64_t kTagSynthLabels = 1;
constexpr std::uint64_t kTagModelInit = 2;
constexpr std::uint64_t kTagValSet = 3;
constexpr std::uint64_t kTagEpoch = 4;

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string format_float9(float v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

} // namespace

// ---- synth -------------------------------------------------------------------

std::string cmd_synth(const SynthOptions& opts, const RunConfig& config) {
    if (opts.n_exams < 3) {
        throw std::invalid_argument("synth: need at least 3 exams, got " +
                                    std::to_string(opts.n_exams));
    }
    if (!(opts.malignant_fraction >= 0.0 && opts.malignant_fraction <= 1.0)) {
        throw std::invalid_argument("synth: malignant fraction must be in [0,1]");
    }
    if (opts.out_dir.empty()) throw std::invalid_argument("synth: output directory required");
    ensure_directory(opts.out_dir);

    const int n = opts.n_exams;
    const int n_malignant =
        static_cast<int>(std::lround(opts.malignant_fraction * static_cast<double>(n)));

    // Shuffle the label assignment so exam ids carry no order information.
    Rng label_rng(derive_seed(config.seed, kTagSynthLabels));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(label_rng.uniform_below(i))]);
    }
    std::vector<bool> malignant(static_cast<std::size_t>(n), false);
    for (int k = 0; k < n_malignant; ++k) malignant[static_cast<std::size_t>(order[k])] = true;

    std::size_t digits = 3;
    for (int v = 1000; v <= n; v *= 10) ++digits;

    Rng rng(config.seed);
    std::vector<ExamRecord> exams;
    exams.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::string num = std::to_string(i);
        if (num.size() < digits) num.insert(0, digits - num.size(), '0');
        exams.push_back(generate_phantom_exam(rng, opts.phantom, "exam" + num,
                                              malignant[static_cast<std::size_t>(i)], opts.out_dir));
    }

    const std::string manifest = (fs::path(opts.out_dir) / "manifest.jsonl").string();
    write_manifest(exams, manifest);
    return manifest;
}

// ---- preprocess ----------------------------------------------------------------

std::string cmd_preprocess(const std::string& manifest_path, const std::string& out_dir,
                           const RunConfig& config) {
    std::vector<ExamRecord> exams = read_manifest(manifest_path);
    if (exams.empty()) throw DataError("preprocess: manifest " + manifest_path + " is empty");
    ensure_directory(out_dir);

    const float target = config.preprocessing.target_spacing_mm;
    if (!(target > 0.0f)) throw std::invalid_argument("preprocess: target spacing must be positive");

    for (auto& exam : exams) {
        for (auto& rec : exam.images) {
            try {
                const Image raw = read_image(rec.path);
                const BreastMask raw_mask = estimate_breast_mask(raw);
                Image normalized = band_normalize(raw, raw_mask, config.preprocessing.band_sigmas_mm);
                if (target > raw.spacing_mm) {
                    normalized = gaussian_blur(normalized, 0.5f * target);
                }
                Image small = resample_to_spacing(normalized, target);
                BreastMask small_mask = resample_mask_nearest(raw_mask, raw.spacing_mm, target);
                Image scaled = scale_to_unit(small, small_mask);

                const std::string stem = rec.image_id();
                const std::string img_path = (fs::path(out_dir) / (stem + ".f32i")).string();
                write_f32i(scaled, img_path);
                const std::string mask_path = (fs::path(out_dir) / (stem + "_breast.pgm")).string();
                write_mask_pgm(small_mask, mask_path, target);

                std::vector<LesionAnnotation> new_lesions;
                for (std::size_t k = 0; k < rec.lesions.size(); ++k) {
                    float mask_spacing = 0.0f;
                    BinaryMask lm = read_mask_pgm(rec.lesions[k].mask_path, &mask_spacing);
                    if (lm.width != raw.width || lm.height != raw.height) {
                        throw DataError("lesion mask " + rec.lesions[k].mask_path +
                                        " does not match image dimensions");
                    }
                    const float ls = mask_spacing > 0.0f ? mask_spacing : raw.spacing_mm;
                    BinaryMask small_lm = resample_mask_nearest(lm, ls, target);
                    if (small_lm.area_px == 0) {
                        throw DataError("lesion mask " + rec.lesions[k].mask_path +
                                        " vanished during resampling");
                    }
                    const std::string lm_path =
                        (fs::path(out_dir) / (stem + "_lesion" + std::to_string(k) + ".pgm")).string();
                    write_mask_pgm(small_lm, lm_path, target);
                    const auto [crow, ccol] = mask_centroid(small_lm);
                    LesionAnnotation les = rec.lesions[k];
                    les.mask_path = lm_path;
                    les.com_x_mm = ccol * target;
                    les.com_y_mm = crow * target;
                    new_lesions.push_back(std::move(les));
                }
                rec.path = img_path;
                rec.breast_mask_path = mask_path;
                rec.lesions = std::move(new_lesions);
            } catch (const std::invalid_argument& e) {
                throw DataError("preprocess " + rec.path + ": " + e.what());
            }
        }
    }

    const std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(exams, manifest);
    return manifest;
}

// ---- training -------------------------------------------------------------------

namespace {

struct TrainImage {
    const ExamRecord* exam = nullptr;
    Image image;
    BreastMask breast;
    bool has_breast = false;
    std::vector<BinaryMask> lesion_masks;
};

// In-memory table of every train/val image, with sample index lists.
struct TrainData {
    std::vector<TrainImage> images;
    std::vector<PositiveRef> train_positives, val_positives;
    std::vector<int> train_normals, val_normals;
};

TrainData load_train_data(const std::vector<ExamRecord>& exams, const SplitAssignment& split) {
    TrainData data;
    for (const auto& exam : exams) {
        const Split s = split.at(exam.exam_id);
        if (s == Split::test) continue;
        const bool malignant = exam.malignant();
        for (const auto& rec : exam.images) {
            TrainImage ti;
            ti.exam = &exam;
            ti.image = read_image(rec.path);
            if (!rec.breast_mask_path.empty()) {
                BinaryMask m = read_mask_pgm(rec.breast_mask_path);
                if (m.width != ti.image.width || m.height != ti.image.height) {
                    throw DataError("breast mask " + rec.breast_mask_path +
                                    " does not match image dimensions");
                }
                ti.breast = std::move(m);
                ti.has_breast = true;
            }
            for (const auto& les : rec.lesions) {
                BinaryMask lm = read_mask_pgm(les.mask_path);
                if (lm.width != ti.image.width || lm.height != ti.image.height) {
                    throw DataError("lesion mask " + les.mask_path +
                                    " does not match image dimensions");
                }
                if (lm.area_px == 0) throw DataError("lesion mask " + les.mask_path + " is empty");
                ti.lesion_masks.push_back(std::move(lm));
            }
            const int index = static_cast<int>(data.images.size());
            auto& positives = (s == Split::train) ? data.train_positives : data.val_positives;
            auto& normals = (s == Split::train) ? data.train_normals : data.val_normals;
            for (std::size_t k = 0; k < ti.lesion_masks.size(); ++k) {
                positives.push_back(PositiveRef{index, static_cast<int>(k)});
            }
            if (!malignant) {
                if (!ti.has_breast) {
                    throw DataError("image " + rec.path +
                                    " of a normal exam has no breast mask; run preprocess first");
                }
                normals.push_back(index);
            }
            data.images.push_back(std::move(ti));
        }
    }
    if (data.train_positives.empty()) {
        throw DataError("degenerate split: train split has no lesions to learn from");
    }
    if (data.train_normals.empty()) {
        throw DataError("degenerate split: train split has no normal exams for negatives");
    }
    if (data.val_positives.empty()) {
        throw DataError("degenerate split: validation split has no lesions");
    }
    if (data.val_normals.empty()) {
        throw DataError("degenerate split: validation split has no normal exams");
    }
    return data;
}

Sample make_sample(const TrainData& data, const SampleRef& ref, int patch_px, bool augment) {
    const TrainImage& ti = data.images[static_cast<std::size_t>(ref.image_index)];
    Rng rng(ref.seed);
    Sample s;
    if (ref.positive) {
        s = sample_positive_patch(ti.image, ti.lesion_masks,
                                  static_cast<std::size_t>(ref.lesion_index), patch_px);
    } else {
        s = sample_negative_patch(*ti.exam, ti.image, ti.breast, rng, patch_px);
    }
    if (augment) augment_flip(s, rng);
    return s;
}

// Weighted pixel count of a target buffer — the denominator the loss uses —
// so per-batch losses recombine into the exact whole-set loss.
double target_weight_sum(const std::vector<float>& target, float negative_weight) {
    double w = 0.0;
    for (float t : target) w += (t == 1.0f) ? 1.0 : static_cast<double>(negative_weight);
    return w;
}

struct SchedState {
    float lr = 0.0f;
    float best_loss = std::numeric_limits<float>::infinity();
    float epochs_since_improve = 0.0f;
    float next_epoch = 0.0f;
    float best_val = std::numeric_limits<float>::infinity();
};

void save_checkpoint_with_sidecar(const std::string& path, const UnetModel& model,
                                  const SgdMomentum<float>& opt, const SchedState& sched,
                                  const RunConfig& config) {
    std::vector<NamedBuffer> buffers = model.state_buffers();
    const auto& names = model.parameter_names();
    const auto& vel = opt.velocities();
    for (std::size_t i = 0; i < vel.size(); ++i) {
        Shape shape = buffers[i].shape; // parameters come first in state_buffers
        buffers.push_back(NamedBuffer{"opt.velocity." + names[i], shape, vel[i]});
    }
    buffers.push_back(NamedBuffer{"_sched", Shape{1, 1, 1, 5},
                                  {sched.lr, sched.best_loss, sched.epochs_since_improve,
                                   sched.next_epoch, sched.best_val}});
    write_checkpoint(path, buffers);
    std::ofstream sidecar(path + ".json", std::ios::binary);
    if (!sidecar) throw IoError("cannot create sidecar " + path + ".json");
    sidecar << run_config_to_json(config);
    if (!sidecar) throw IoError("write failed: " + path + ".json");
}

} // namespace

TrainResult cmd_train(const std::string& manifest_path, const RunConfig& config,
                      const std::string& out_model, const std::string& resume_from) {
    const auto& tr = config.training;
    if (tr.batch_size < 1 || tr.max_epochs < 1 || tr.patch_px < 1) {
        throw std::invalid_argument("train: batch_size, max_epochs and patch_px must be positive");
    }
    const int multiple = 1 << config.unet.depth;
    if (tr.patch_px % multiple != 0) {
        throw std::invalid_argument("train: patch_px " + std::to_string(tr.patch_px) +
                                    " must be a multiple of " + std::to_string(multiple) +
                                    " (unet depth " + std::to_string(config.unet.depth) + ")");
    }

    const std::vector<ExamRecord> exams = read_manifest(manifest_path);
    const SplitAssignment split = split_exams(exams, config.seed);
    const std::string split_path = out_model + ".split.json";
    write_split(split, split_path);

    const TrainData data = load_train_data(exams, split);

    UnetModel model = UnetModel::build(
        UnetConfig{config.unet.depth, config.unet.base_filters, 1},
        derive_seed(config.seed, kTagModelInit));
    SgdMomentum<float> opt(tr.learning_rate, tr.momentum);
    opt.register_params(model.parameters());

    PlateauSchedule sched;
    sched.factor = tr.lr_factor;
    sched.patience = tr.patience;

    // The validation set is composed once from its own substream, so every
    // epoch (and every resumed run) scores the same fixed sample list.
    Rng val_rng(derive_seed(config.seed, kTagValSet));
    const std::vector<SampleRef> val_refs =
        compose_epoch(data.val_positives, data.val_normals, val_rng);

    float lr = tr.learning_rate;
    float best_val = std::numeric_limits<float>::infinity();
    int start_epoch = 0;

    if (!resume_from.empty()) {
        const std::vector<NamedBuffer> buffers = read_checkpoint(resume_from);
        model.load_state_buffers(buffers);
        std::unordered_map<std::string, const NamedBuffer*> by_name;
        for (const auto& b : buffers) by_name.emplace(b.name, &b);
        const auto& names = model.parameter_names();
        auto& vel = opt.velocities();
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto it = by_name.find("opt.velocity." + names[i]);
            if (it == by_name.end()) {
                throw DataError("checkpoint " + resume_from + " lacks optimizer state for " +
                                names[i]);
            }
            if (it->second->values.size() != vel[i].size()) {
                throw DataError("checkpoint velocity for " + names[i] + " has wrong size");
            }
            vel[i] = it->second->values;
        }
        auto it = by_name.find("_sched");
        if (it == by_name.end() || it->second->values.size() != 5) {
            throw DataError("checkpoint " + resume_from + " lacks schedule state");
        }
        const auto& sv = it->second->values;
        lr = sv[0];
        sched.best_loss = sv[1];
        sched.epochs_since_improve = static_cast<int>(sv[2]);
        start_epoch = static_cast<int>(sv[3]);
        best_val = sv[4];
        opt.set_learning_rate(lr);
    }

    const std::string log_path = out_model + ".log.csv";
    std::ofstream log(log_path, resume_from.empty() ? std::ios::binary
                                                    : (std::ios::binary | std::ios::app));
    if (!log) throw IoError("cannot create training log " + log_path);
    if (resume_from.empty()) log << "epoch,train_loss,val_loss,lr\n";

    const std::size_t batch = static_cast<std::size_t>(tr.batch_size);
    const std::size_t pixels = static_cast<std::size_t>(tr.patch_px) * tr.patch_px;

    auto run_batches = [&](const std::vector<SampleRef>& refs, Mode mode, bool augment,
                           double* weight_sum_out) -> double {
        // Returns: train mode — mean of per-batch losses (after stepping);
        // eval mode — exact weighted loss over the whole list.
        double loss_acc = 0.0, weight_acc = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t begin = 0; begin < refs.size(); begin += batch) {
            const std::size_t count = std::min(batch, refs.size() - begin);
            Shape shape{static_cast<int>(count), 1, tr.patch_px, tr.patch_px};
            std::vector<float> xs(count * pixels), ys(count * pixels);
            for (std::size_t k = 0; k < count; ++k) {
                Sample s = make_sample(data, refs[begin + k], tr.patch_px, augment);
                std::copy(s.patch.begin(), s.patch.end(), xs.begin() + k * pixels);
                std::copy(s.target.begin(), s.target.end(), ys.begin() + k * pixels);
            }
            Tensor<float> x(shape, std::move(xs));
            Tensor<float> y(shape, std::move(ys));
            Tensor<float> logits = model.forward_logits(x, mode);
            Tensor<float> loss = weighted_logistic_loss(logits, y, tr.negative_weight);
            if (mode == Mode::train) {
                for (auto& p : model.parameters()) p.zero_grad();
                backward(loss);
                opt.step(model.parameters());
                loss_acc += static_cast<double>(loss.data()[0]);
            } else {
                const double w = target_weight_sum(y.data(), tr.negative_weight);
                loss_acc += static_cast<double>(loss.data()[0]) * w;
                weight_acc += w;
            }
            ++n_batches;
        }
        if (mode == Mode::train) {
            return n_batches > 0 ? loss_acc / static_cast<double>(n_batches) : 0.0;
        }
        if (weight_sum_out) *weight_sum_out = weight_acc;
        return weight_acc > 0.0 ? loss_acc / weight_acc : 0.0;
    };

    int epochs_run = 0;
    for (int epoch = start_epoch; epoch < tr.max_epochs; ++epoch) {
        Rng epoch_rng(derive_seed(config.seed, kTagEpoch, static_cast<std::uint64_t>(epoch)));
        const std::vector<SampleRef> refs =
            compose_epoch(data.train_positives, data.train_normals, epoch_rng);

        const float train_loss = static_cast<float>(run_batches(refs, Mode::train, true, nullptr));
        const float val_loss = static_cast<float>(run_batches(val_refs, Mode::eval, false, nullptr));

        log << epoch << ',' << format_float9(train_loss) << ',' << format_float9(val_loss) << ','
            << format_float9(lr) << '\n';
        log.flush();
        std::fprintf(stderr, "epoch %d: train %.6f val %.6f lr %.6g\n", epoch,
                     static_cast<double>(train_loss), static_cast<double>(val_loss),
                     static_cast<double>(lr));

        if (val_loss < best_val) {
            best_val = val_loss;
            save_checkpoint_with_sidecar(
                out_model, model, opt,
                SchedState{lr, sched.best_loss, static_cast<float>(sched.epochs_since_improve),
                           static_cast<float>(epoch + 1), best_val},
                config);
        }
        lr = sched.update(val_loss, lr);
        opt.set_learning_rate(lr);
        save_checkpoint_with_sidecar(
            out_model + ".last", model, opt,
            SchedState{lr, sched.best_loss, static_cast<float>(sched.epochs_since_improve),
                       static_cast<float>(epoch + 1), best_val},
            config);
        ++epochs_run;
    }
    if (!log) throw IoError("write failed: " + log_path);

    TrainResult result;
    result.model_path = out_model;
    result.split_path = split_path;
    result.log_path = log_path;
    result.epochs_run = epochs_run;
    result.best_val_loss = best_val;
    return result;
}

// ---- inference ------------------------------------------------------------------

void cmd_infer(const std::string& model_path, const std::string& manifest_path,
               const std::string& split_path, const std::string& out_dir, int threads) {
    if (threads < 1) throw std::invalid_argument("infer: threads must be >= 1");

    const RunConfig config = load_run_config(model_path + ".json");
    UnetModel model = UnetModel::build(UnetConfig{config.unet.depth, config.unet.base_filters, 1},
                                       /*seed=*/0);
    model.load_state_buffers(read_checkpoint(model_path));

    const std::vector<ExamRecord> exams = read_manifest(manifest_path);
    const SplitAssignment split = read_split(split_path);

    std::vector<const ImageRecord*> records;
    std::unordered_set<std::string> seen_ids;
    for (const auto& exam : exams) {
        if (split.at(exam.exam_id) != Split::test) continue;
        for (const auto& rec : exam.images) {
            if (!seen_ids.insert(rec.image_id()).second) {
                throw DataError("duplicate image id \"" + rec.image_id() + "\" in test split");
            }
            records.push_back(&rec);
        }
    }
    ensure_directory(out_dir);

    const float expected = config.preprocessing.target_spacing_mm;
    std::vector<ProbabilityMap> maps(records.size());
    std::vector<std::string> errors(records.size());

    auto worker = [&](std::atomic<std::size_t>& next) {
        for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
            try {
                const Image img = read_image(records[i]->path);
                if (img.spacing_mm != expected) {
                    throw DataError("image " + records[i]->path + " has spacing " +
                                    format_float9(img.spacing_mm) + " mm, model expects " +
                                    format_float9(expected) + " mm");
                }
                maps[i] = model.infer_full_image(img);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    std::atomic<std::size_t> next{0};
    if (threads == 1 || records.size() <= 1) {
        worker(next);
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(threads, static_cast<int>(records.size()));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back([&] { worker(next); });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!errors[i].empty()) throw DataError(errors[i]);
    }

    for (std::size_t i = 0; i < records.size(); ++i) {
        Image out(maps[i].width, maps[i].height, maps[i].spacing_mm);
        out.pixels = maps[i].values;
        write_f32i(out, (fs::path(out_dir) / (records[i]->image_id() + ".f32i")).string());
    }
}

// ---- froc -----------------------------------------------------------------------

FrocSummary cmd_froc(const std::string& maps_dir, const std::string& manifest_path,
                     const std::string& split_path, const RunConfig& config,
                     const std::string& out_prefix, bool log_fp) {
    const std::vector<ExamRecord> exams = read_manifest(manifest_path);
    const SplitAssignment split = read_split(split_path);

    struct TestImage {
        const ExamRecord* exam;
        const ImageRecord* rec;
        std::string map_path;
    };
    std::vector<TestImage> test_images;
    std::vector<std::string> missing;
    for (const auto& exam : exams) {
        if (split.at(exam.exam_id) != Split::test) continue;
        for (const auto& rec : exam.images) {
            const std::string map_path = (fs::path(maps_dir) / (rec.image_id() + ".f32i")).string();
            if (!fs::exists(map_path)) {
                missing.push_back(rec.image_id());
                continue;
            }
            test_images.push_back(TestImage{&exam, &rec, map_path});
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw DataError("missing probability maps for: " + list);
    }
    if (test_images.empty()) throw DataError("froc: test split is empty");

    std::vector<ImageMatch> matches;
    std::vector<float> all_scores;
    std::vector<std::pair<std::string, std::vector<Candidate>>> by_image;
    for (const auto& ti : test_images) {
        const ProbabilityMap map = probability_map_from_image(read_f32i(ti.map_path));
        std::vector<Candidate> cands = extract_candidates(map, config.candidates.base_threshold,
                                                          config.candidates.cluster_radius_mm);
        for (const auto& c : cands) all_scores.push_back(c.score);
        const std::vector<LesionPoint> lesions = lesion_points(*ti.rec);
        ImageMatch m = match_image(cands, lesions, config.froc.hit_radius_mm);
        m.image_id = ti.rec->image_id();
        m.exam_id = ti.exam->exam_id;
        matches.push_back(std::move(m));
        by_image.emplace_back(ti.rec->image_id(), std::move(cands));
    }

    const FrocCurve image_curve = froc_image_based(matches, all_scores);
    const FrocCurve exam_curve = froc_exam_based(matches, all_scores);

    FrocSummary summary;
    summary.candidates_csv_path = out_prefix + "_candidates.csv";
    write_candidates_csv(summary.candidates_csv_path, by_image);
    summary.csv_path = out_prefix + "_froc.csv";
    write_froc_csv(summary.csv_path, {image_curve, exam_curve});
    summary.svg_path = out_prefix + "_froc.svg";
    {
        std::ofstream svg(summary.svg_path, std::ios::binary);
        if (!svg) throw IoError("cannot create " + summary.svg_path);
        svg << froc_svg({image_curve, exam_curve}, log_fp);
        if (!svg) throw IoError("write failed: " + summary.svg_path);
    }

    const FrocPoint image_best = max_sensitivity_point(image_curve);
    const FrocPoint exam_best = max_sensitivity_point(exam_curve);
    summary.image_max_sensitivity = image_best.sensitivity;
    summary.image_fp_at_max = image_best.fp_per_image;
    summary.exam_max_sensitivity = exam_best.sensitivity;
    summary.exam_fp_at_max = exam_best.fp_per_image;
    return summary;
}

// ---- plot -----------------------------------------------------------------------

void cmd_plot(const std::string& froc_csv, const std::string& out_svg, bool log_fp) {
    const std::vector<FrocCurve> curves = read_froc_csv(froc_csv);
    if (curves.empty()) throw DataError("plot: " + froc_csv + " contains no curves");
    std::ofstream svg(out_svg, std::ios::binary);
    if (!svg) throw IoError("cannot create " + out_svg);
    svg << froc_svg(curves, log_fp);
    if (!svg) throw IoError("write failed: " + out_svg);
}

} // namespace lesiondet
