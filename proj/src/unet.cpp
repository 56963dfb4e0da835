#include "lesiondet/unet.hpp"

#include "lesiondet/errors.hpp"
#include "lesiondet/rng.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace lesiondet {

// ---- pad_to_grid / crop_to --------------------------------------------------

template <typename T>
std::pair<Tensor<T>, CropRect> pad_to_grid(const Tensor<T>& x, int multiple) {
    if (multiple < 1) {
        throw std::invalid_argument("pad_to_grid: multiple must be >= 1, got " +
                                    std::to_string(multiple));
    }
    const Shape& s = x.shape();
    CropRect rect{s.h, s.w};
    const int ph = (s.h + multiple - 1) / multiple * multiple;
    const int pw = (s.w + multiple - 1) / multiple * multiple;
    if (ph == s.h && pw == s.w) {
        return {x, rect};
    }
    Tensor<T> out(Shape{s.n, s.c, ph, pw});
    auto* node = out.node();
    node->parents = {x.node_ptr()};
    node->requires_grad = x.requires_grad();
    const T* src = x.data().data();
    T* dst = node->data.data();
    for (int plane = 0; plane < s.n * s.c; ++plane) {
        for (int y = 0; y < s.h; ++y) {
            std::memcpy(dst + (static_cast<std::int64_t>(plane) * ph + y) * pw,
                        src + (static_cast<std::int64_t>(plane) * s.h + y) * s.w,
                        sizeof(T) * static_cast<std::size_t>(s.w));
        }
    }
    if (node->requires_grad) {
        Shape in_shape = s;
        node->backward_fn = [in_shape, ph, pw](TensorNode<T>& self) {
            auto& xp = *self.parents[0];
            if (!xp.requires_grad) return;
            auto& gx = xp.ensure_grad();
            const T* gy = self.grad.data();
            for (int plane = 0; plane < in_shape.n * in_shape.c; ++plane) {
                for (int y = 0; y < in_shape.h; ++y) {
                    const T* grow = gy + (static_cast<std::int64_t>(plane) * ph + y) * pw;
                    T* xrow = gx.data() + (static_cast<std::int64_t>(plane) * in_shape.h + y) * in_shape.w;
                    for (int xcol = 0; xcol < in_shape.w; ++xcol) xrow[xcol] += grow[xcol];
                }
            }
        };
    }
    return {out, rect};
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const CropRect& rect) {
    const Shape& s = x.shape();
    if (rect.height < 1 || rect.width < 1 || rect.height > s.h || rect.width > s.w) {
        throw std::invalid_argument("crop_to: rect " + std::to_string(rect.height) + "x" +
                                    std::to_string(rect.width) + " does not fit in " + s.str());
    }
    if (rect.height == s.h && rect.width == s.w) {
        return x;
    }
    Tensor<T> out(Shape{s.n, s.c, rect.height, rect.width});
    auto* node = out.node();
    node->parents = {x.node_ptr()};
    node->requires_grad = x.requires_grad();
    const T* src = x.data().data();
    T* dst = node->data.data();
    for (int plane = 0; plane < s.n * s.c; ++plane) {
        for (int y = 0; y < rect.height; ++y) {
            std::memcpy(dst + (static_cast<std::int64_t>(plane) * rect.height + y) * rect.width,
                        src + (static_cast<std::int64_t>(plane) * s.h + y) * s.w,
                        sizeof(T) * static_cast<std::size_t>(rect.width));
        }
    }
    if (node->requires_grad) {
        Shape in_shape = s;
        CropRect r = rect;
        node->backward_fn = [in_shape, r](TensorNode<T>& self) {
            auto& xp = *self.parents[0];
            if (!xp.requires_grad) return;
            auto& gx = xp.ensure_grad();
            const T* gy = self.grad.data();
            for (int plane = 0; plane < in_shape.n * in_shape.c; ++plane) {
                for (int y = 0; y < r.height; ++y) {
                    const T* grow = gy + (static_cast<std::int64_t>(plane) * r.height + y) * r.width;
                    T* xrow = gx.data() + (static_cast<std::int64_t>(plane) * in_shape.h + y) * in_shape.w;
                    for (int xcol = 0; xcol < r.width; ++xcol) xrow[xcol] += grow[xcol];
                }
            }
        };
    }
    return out;
}

template std::pair<Tensor<float>, CropRect> pad_to_grid<float>(const Tensor<float>&, int);
template std::pair<Tensor<double>, CropRect> pad_to_grid<double>(const Tensor<double>&, int);
template Tensor<float> crop_to<float>(const Tensor<float>&, const CropRect&);
template Tensor<double> crop_to<double>(const Tensor<double>&, const CropRect&);

// ---- model construction -----------------------------------------------------

namespace {

void validate_config(const UnetConfig& config) {
    if (config.depth < 1 || config.depth > 8) {
        throw std::invalid_argument("UnetConfig: depth must be in [1,8], got " +
                                    std::to_string(config.depth));
    }
    if (config.base_filters < 1) {
        throw std::invalid_argument("UnetConfig: base_filters must be positive");
    }
    if (config.in_channels < 1) {
        throw std::invalid_argument("UnetConfig: in_channels must be positive");
    }
}

std::vector<float> uniform_fan_in(Rng& rng, std::int64_t count, int fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<float> v(static_cast<std::size_t>(count));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return v;
}

} // namespace

UnetModel UnetModel::build(const UnetConfig& config, std::uint64_t seed) {
    validate_config(config);
    UnetModel m;
    m.config_ = config;
    Rng rng(seed);

    auto add_param = [&m](const std::string& name, const Shape& shape, std::vector<float> values) {
        m.params_.emplace_back(shape, std::move(values), /*requires_grad=*/true);
        m.param_names_.push_back(name);
        return static_cast<int>(m.params_.size()) - 1;
    };

    // One conv3x3 -> batch-norm unit. Weight draws happen in registration
    // order, so the whole initialization is a pure function of the seed.
    auto add_block = [&](const std::string& name, int in_ch, int out_ch) {
        ConvBlock blk;
        const int fan_in = in_ch * 9;
        blk.w = add_param(name + ".w", Shape{out_ch, in_ch, 3, 3},
                          uniform_fan_in(rng, static_cast<std::int64_t>(out_ch) * in_ch * 9, fan_in));
        blk.b = add_param(name + ".b", Shape{1, out_ch, 1, 1}, std::vector<float>(out_ch, 0.0f));
        blk.gamma = add_param(name + ".gamma", Shape{1, out_ch, 1, 1}, std::vector<float>(out_ch, 1.0f));
        blk.beta = add_param(name + ".beta", Shape{1, out_ch, 1, 1}, std::vector<float>(out_ch, 0.0f));
        blk.bn_state = static_cast<int>(m.bn_states_.size());
        m.bn_states_.emplace_back(out_ch);
        m.bn_names_.push_back(name);
        return blk;
    };
    auto add_level = [&](const std::string& name, int in_ch, int out_ch) {
        Level lvl;
        lvl.c1 = add_block(name + ".c1", in_ch, out_ch);
        lvl.c2 = add_block(name + ".c2", out_ch, out_ch);
        return lvl;
    };

    int ch = config.in_channels;
    for (int d = 0; d < config.depth; ++d) {
        const int filters = config.base_filters << d;
        m.encoders_.push_back(add_level("enc" + std::to_string(d), ch, filters));
        ch = filters;
    }
    const int bottleneck_ch = config.base_filters << config.depth;
    m.bottleneck_ = add_level("bottleneck", ch, bottleneck_ch);
    ch = bottleneck_ch;

    for (int d = config.depth - 1; d >= 0; --d) {
        const int filters = config.base_filters << d;
        UpLevel up;
        // A 2x2 stride-2 transposed conv feeds each output pixel from
        // exactly one tap per input channel, so fan_in is the channel count.
        up.up_w = add_param("dec" + std::to_string(d) + ".up.w", Shape{ch, filters, 2, 2},
                            uniform_fan_in(rng, static_cast<std::int64_t>(ch) * filters * 4, ch));
        up.block = add_level("dec" + std::to_string(d), 2 * filters, filters);
        m.decoders_.push_back(up);
        ch = filters;
    }

    m.head_w_ = add_param("head.w", Shape{1, ch, 1, 1}, uniform_fan_in(rng, ch, ch));
    m.head_b_ = add_param("head.b", Shape{1, 1, 1, 1}, std::vector<float>(1, 0.0f));
    return m;
}

// ---- forward ----------------------------------------------------------------

Tensor<float> UnetModel::run_block(const ConvBlock& blk, const Tensor<float>& x, Mode mode) {
    Tensor<float> y = conv2d(x, params_[static_cast<std::size_t>(blk.w)],
                             params_[static_cast<std::size_t>(blk.b)]);
    y = batch_norm(y, params_[static_cast<std::size_t>(blk.gamma)],
                   params_[static_cast<std::size_t>(blk.beta)],
                   bn_states_[static_cast<std::size_t>(blk.bn_state)], mode);
    return relu(y);
}

Tensor<float> UnetModel::forward_logits(const Tensor<float>& x, Mode mode) {
    const Shape& s = x.shape();
    if (s.c != config_.in_channels) {
        throw std::invalid_argument("forward: expected " + std::to_string(config_.in_channels) +
                                    " input channel(s), got " + std::to_string(s.c));
    }
    const int multiple = 1 << config_.depth;
    if (s.h % multiple != 0 || s.w % multiple != 0) {
        throw std::invalid_argument("forward: spatial dims " + std::to_string(s.h) + "x" +
                                    std::to_string(s.w) + " must be a multiple of " +
                                    std::to_string(multiple) + " (depth " +
                                    std::to_string(config_.depth) + "); use pad_to_grid");
    }

    Tensor<float> cur = x;
    std::vector<Tensor<float>> skips;
    skips.reserve(encoders_.size());
    for (const Level& lvl : encoders_) {
        cur = run_block(lvl.c1, cur, mode);
        cur = run_block(lvl.c2, cur, mode);
        skips.push_back(cur);
        cur = maxpool2(cur);
    }
    cur = run_block(bottleneck_.c1, cur, mode);
    cur = run_block(bottleneck_.c2, cur, mode);
    for (std::size_t i = 0; i < decoders_.size(); ++i) {
        const UpLevel& up = decoders_[i];
        cur = upconv2(cur, params_[static_cast<std::size_t>(up.up_w)]);
        cur = concat_channels(skips[skips.size() - 1 - i], cur);
        cur = run_block(up.block.c1, cur, mode);
        cur = run_block(up.block.c2, cur, mode);
    }
    return conv2d(cur, params_[static_cast<std::size_t>(head_w_)],
                  params_[static_cast<std::size_t>(head_b_)]);
}

Tensor<float> UnetModel::forward(const Tensor<float>& x, Mode mode) {
    return sigmoid(forward_logits(x, mode));
}

ProbabilityMap UnetModel::infer_full_image(const Image& img) {
    if (img.width < 1 || img.height < 1) {
        throw std::invalid_argument("infer_full_image: empty image");
    }
    Tensor<float> x(Shape{1, 1, img.height, img.width}, img.pixels);
    auto [padded, rect] = pad_to_grid(x, 1 << config_.depth);
    Tensor<float> prob = forward(padded, Mode::eval);
    Tensor<float> cropped = crop_to(prob, rect);
    ProbabilityMap map;
    map.width = img.width;
    map.height = img.height;
    map.spacing_mm = img.spacing_mm;
    map.values = cropped.data();
    return map;
}

// ---- state ------------------------------------------------------------------

std::int64_t UnetModel::parameter_count() const {
    std::int64_t total = 0;
    for (const auto& p : params_) total += p.shape().numel();
    return total;
}

std::vector<NamedBuffer> UnetModel::state_buffers() const {
    std::vector<NamedBuffer> out;
    out.reserve(params_.size() + 2 * bn_states_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.push_back(NamedBuffer{param_names_[i], params_[i].shape(), params_[i].data()});
    }
    for (std::size_t i = 0; i < bn_states_.size(); ++i) {
        const auto& st = bn_states_[i];
        const int c = static_cast<int>(st.running_mean.size());
        out.push_back(NamedBuffer{bn_names_[i] + ".running_mean", Shape{1, c, 1, 1}, st.running_mean});
        out.push_back(NamedBuffer{bn_names_[i] + ".running_var", Shape{1, c, 1, 1}, st.running_var});
    }
    return out;
}

void UnetModel::load_state_buffers(const std::vector<NamedBuffer>& buffers) {
    std::unordered_map<std::string, const NamedBuffer*> by_name;
    for (const auto& b : buffers) by_name.emplace(b.name, &b);

    auto take = [&by_name](const std::string& name, const Shape& want) -> const NamedBuffer& {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError("checkpoint is missing buffer \"" + name + "\"");
        }
        const NamedBuffer& b = *it->second;
        if (b.shape != want) {
            throw DataError("checkpoint buffer \"" + name + "\" has shape " + b.shape.str() +
                            ", expected " + want.str());
        }
        return b;
    };

    for (std::size_t i = 0; i < params_.size(); ++i) {
        const NamedBuffer& b = take(param_names_[i], params_[i].shape());
        params_[i].data() = b.values;
    }
    for (std::size_t i = 0; i < bn_states_.size(); ++i) {
        auto& st = bn_states_[i];
        const int c = static_cast<int>(st.running_mean.size());
        st.running_mean = take(bn_names_[i] + ".running_mean", Shape{1, c, 1, 1}).values;
        st.running_var = take(bn_names_[i] + ".running_var", Shape{1, c, 1, 1}).values;
    }
}

} // namespace lesiondet
