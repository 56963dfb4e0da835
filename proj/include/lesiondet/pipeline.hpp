#pragma once

#include "lesiondet/config.hpp"
#include "lesiondet/dataset.hpp"

#include <cstdint>
#include <string>

namespace lesiondet {

// The CLI commands as library functions (the binary in tools/ is a thin
// argument-parsing shell around these, and the tests drive them directly).

struct SynthOptions {
    int n_exams = 0;
    double malignant_fraction = 0.42;
    std::string out_dir;
    PhantomSpec phantom;
};

// Phantom dataset + manifest.jsonl under out_dir. Deterministic per seed.
std::string cmd_synth(const SynthOptions& opts, const RunConfig& config);

// Band normalization -> anti-alias blur -> resample to the target spacing
// -> [0,1] scaling for every manifest image; writes F32I images, resampled
// lesion masks, breast masks, and a new manifest. Returns the manifest path.
std::string cmd_preprocess(const std::string& manifest_path, const std::string& out_dir,
                           const RunConfig& config);

struct TrainResult {
    std::string model_path;
    std::string split_path;
    std::string log_path;
    int epochs_run = 0;
    float best_val_loss = 0.0f;
};

// Split -> epochs of batched SGD with flip augmentation -> per-epoch
// validation -> plateau schedule. Writes the best checkpoint to out_model,
// the last checkpoint to out_model + ".last", a CSV log (epoch, train_loss,
// val_loss, lr), the split JSON, and a config sidecar. resume_from, when
// nonempty, restarts from a ".last" checkpoint and reproduces the
// uninterrupted run exactly.
TrainResult cmd_train(const std::string& manifest_path, const RunConfig& config,
                      const std::string& out_model, const std::string& resume_from = "");

// Eval-mode probability maps (F32I) for every test-split image.
void cmd_infer(const std::string& model_path, const std::string& manifest_path,
               const std::string& split_path, const std::string& out_dir, int threads = 1);

struct FrocSummary {
    std::string csv_path;
    std::string svg_path;
    std::string candidates_csv_path;
    double image_max_sensitivity = 0.0;
    double image_fp_at_max = 0.0;
    double exam_max_sensitivity = 0.0;
    double exam_fp_at_max = 0.0;
};

// Candidate extraction + both FROC curves over the test split; writes
// <out_prefix>_froc.csv, <out_prefix>_froc.svg, <out_prefix>_candidates.csv
// and returns the summary operating points.
FrocSummary cmd_froc(const std::string& maps_dir, const std::string& manifest_path,
                     const std::string& split_path, const RunConfig& config,
                     const std::string& out_prefix, bool log_fp = false);

// Re-renders an SVG plot from an existing FROC CSV.
void cmd_plot(const std::string& froc_csv, const std::string& out_svg, bool log_fp = false);

} // namespace lesiondet
