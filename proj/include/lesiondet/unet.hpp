#pragma once

#include "lesiondet/autodiff.hpp"
#include "lesiondet/candidates.hpp"
#include "lesiondet/imaging.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lesiondet {

struct UnetConfig {
    int depth = 3;        // number of pooling stages
    int base_filters = 8; // channels of the first encoder block
    int in_channels = 1;
    // Filter counts double at every level: level d has base_filters * 2^d.
};

// Rectangle used to undo pad_to_grid.
struct CropRect {
    int height = 0;
    int width = 0;
};

// Zero-pads the tensor at the bottom/right so both spatial dims are
// multiples of `multiple`; the crop record restores the original size.
template <typename T>
std::pair<Tensor<T>, CropRect> pad_to_grid(const Tensor<T>& x, int multiple);

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const CropRect& rect);

// The u-net: per encoder level two (conv3x3 -> batch norm -> ReLU) blocks
// then maxpool2; a two-block bottleneck; per decoder level upconv2, skip
// concat, and two blocks; head conv1x1 (+ sigmoid in forward()).
class UnetModel {
  public:
    // Deterministic fan-in uniform initialization (+-sqrt(6/fan_in)) from
    // the seed; biases 0, batch-norm gamma 1 / beta 0.
    static UnetModel build(const UnetConfig& config, std::uint64_t seed);

    const UnetConfig& config() const { return config_; }

    // Pre-sigmoid output, shape (n, 1, h, w). Spatial dims must be
    // divisible by 2^depth.
    Tensor<float> forward_logits(const Tensor<float>& x, Mode mode);

    // sigmoid(forward_logits): per-pixel probabilities in (0,1).
    Tensor<float> forward(const Tensor<float>& x, Mode mode);

    // Pads a preprocessed image to the network grid, runs an eval-mode
    // forward, and crops back; the map keeps the image's pixel spacing.
    ProbabilityMap infer_full_image(const Image& img);

    // Trainable parameters (conv/upconv weights, biases, gammas, betas) in
    // a fixed registration order, with stable names.
    std::vector<Tensor<float>>& parameters() { return params_; }
    const std::vector<std::string>& parameter_names() const { return param_names_; }
    std::int64_t parameter_count() const;

    // Everything CKPT1 stores for the model itself: parameters plus
    // batch-norm running statistics ("<block>.running_mean"/"..var").
    std::vector<NamedBuffer> state_buffers() const;
    void load_state_buffers(const std::vector<NamedBuffer>& buffers);

  private:
    UnetModel() = default;

    struct ConvBlock {
        int w = 0, b = 0, gamma = 0, beta = 0; // indices into params_
        int bn_state = 0;                      // index into bn_states_
    };
    struct Level {
        ConvBlock c1, c2;
    };
    struct UpLevel {
        int up_w = 0; // upconv weights index
        Level block;
    };

    Tensor<float> run_block(const ConvBlock& blk, const Tensor<float>& x, Mode mode);

    UnetConfig config_;
    std::vector<Tensor<float>> params_;
    std::vector<std::string> param_names_;
    std::vector<BatchNormState<float>> bn_states_;
    std::vector<std::string> bn_names_;

    std::vector<Level> encoders_;
    Level bottleneck_;
    std::vector<UpLevel> decoders_;
    int head_w_ = 0, head_b_ = 0;
};

} // namespace lesiondet
