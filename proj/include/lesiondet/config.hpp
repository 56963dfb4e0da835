#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lesiondet {

// Run configuration with the pipeline's canonical defaults. Every field can
// be overridden from a JSON file; absent fields keep their defaults.
struct RunConfig {
    std::uint64_t seed = 20200521;

    struct Unet {
        int depth = 3;
        int base_filters = 8;
    } unet;

    struct Training {
        float learning_rate = 0.005f;
        float momentum = 0.9f;
        float negative_weight = 0.25f;
        int patience = 5;
        float lr_factor = 0.5f;
        int batch_size = 4;
        int max_epochs = 50;
        int patch_px = 344;
    } training;

    struct Preprocessing {
        float target_spacing_mm = 0.2f;
        std::vector<float> band_sigmas_mm = {0.4f, 0.8f, 1.6f, 3.2f};
    } preprocessing;

    struct Candidates {
        float base_threshold = 0.5f;
        float cluster_radius_mm = 15.0f;
    } candidates;

    struct Froc {
        float hit_radius_mm = 15.0f;
    } froc;
};

// Reads a JSON RunConfig; fields present override the defaults, everything
// else keeps them. Unknown keys are an error (typo protection).
RunConfig load_run_config(const std::string& path);

// JSON representation of a config (full field set), used for sidecars.
std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

} // namespace lesiondet
