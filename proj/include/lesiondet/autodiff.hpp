#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace lesiondet {

// Dimensions of a 4-D tensor: (batch, channels, height, width).
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

template <typename T>
struct TensorNode;

// Handle to a node of a define-by-run computation graph. Copying a Tensor
// copies the handle, not the storage. Scalar type T is float for training
// and double for the finite-difference gradient-check harness.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(const Shape& shape, bool requires_grad = false);
    Tensor(const Shape& shape, std::vector<T> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::vector<T>& data();
    const std::vector<T>& data() const;

    // Gradient buffer; allocated zero-filled on first access.
    std::vector<T>& grad();
    bool has_grad() const;
    void zero_grad();

    bool requires_grad() const;

    TensorNode<T>* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

  private:
    std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until used
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_fn; // null for leaves

    std::vector<T>& ensure_grad();
};

// Runs reverse-mode accumulation from a scalar output (numel == 1), seeding
// its gradient with 1. Gradients accumulate into every requires_grad node
// reachable through the graph; call zero_grad on leaves between backwards.
template <typename T>
void backward(const Tensor<T>& root);

// As above but with an explicit seed gradient (any output shape).
template <typename T>
void backward(const Tensor<T>& root, const std::vector<T>& seed);

// ---- layers (forward builds the graph; backward closures attached) --------

enum class Mode { train, eval };

// "Same" zero-padded convolution. weights shape (out_ch, in_ch, k, k) with
// k in {1, 3}; bias shape (1, out_ch, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Per-layer running statistics for batch_norm (not graph nodes).
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean; // per channel, initialized to 0
    std::vector<T> running_var;  // per channel, initialized to 1

    explicit BatchNormState(int channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Batch normalization over (batch, height, width) per channel. gamma and
// beta have shape (1, C, 1, 1). Train mode uses batch statistics and updates
// the running buffers with momentum 0.9; eval mode uses the running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode,
                     T eps = T(1e-5), T stats_momentum = T(0.9));

// 2x2 stride-2 max pooling; spatial dims must be even.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);

// 2x2 stride-2 transposed convolution doubling height and width.
// weights shape (in_ch, out_ch, 2, 2); no bias.
template <typename T>
Tensor<T> upconv2(const Tensor<T>& x, const Tensor<T>& weights);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// Weighted binary cross entropy from logits, in log-sum-exp-stable form.
// Per-pixel weight is 1 for target 1 and negative_weight for target 0; the
// result is the weighted mean (divided by the total weight). Targets must
// be exactly 0 or 1.
template <typename T>
Tensor<T> weighted_logistic_loss(const Tensor<T>& logits, const Tensor<T>& target,
                                 T negative_weight = T(0.25));

// ---- optimizer and schedule ------------------------------------------------

// Classical SGD with momentum: v <- m*v + g; p <- p - lr*v.
template <typename T>
class SgdMomentum {
  public:
    SgdMomentum(T learning_rate, T momentum);

    void register_params(const std::vector<Tensor<T>>& params);
    void step(std::vector<Tensor<T>>& params);

    T learning_rate() const { return learning_rate_; }
    void set_learning_rate(T lr) { learning_rate_ = lr; }
    T momentum() const { return momentum_; }

    std::vector<std::vector<T>>& velocities() { return velocity_; }
    const std::vector<std::vector<T>>& velocities() const { return velocity_; }

  private:
    T learning_rate_;
    T momentum_;
    std::vector<std::vector<T>> velocity_;
};

// Reduce-on-plateau: halves the learning rate when the validation loss has
// not improved (by more than 1e-6) for `patience` consecutive epochs.
// All state is float so checkpoints round-trip losslessly.
struct PlateauSchedule {
    float factor = 0.5f;
    int patience = 5;
    float best_loss = std::numeric_limits<float>::infinity();
    int epochs_since_improve = 0;
    float min_improvement = 1e-6f;

    // Feeds one epoch's validation loss; returns the (possibly reduced)
    // learning rate. NaN counts as no improvement.
    float update(float val_loss, float learning_rate);
};

// ---- checkpoints (CKPT1) ----------------------------------------------------

// Named float32 buffer stored in a checkpoint: model parameters, batch-norm
// running statistics, optimizer velocities, and schedule state.
struct NamedBuffer {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

void write_checkpoint(const std::string& path, const std::vector<NamedBuffer>& buffers);
std::vector<NamedBuffer> read_checkpoint(const std::string& path);

} // namespace lesiondet
