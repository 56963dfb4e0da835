#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lesiondet/errors.hpp"
#include "lesiondet/unet.hpp"

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

using namespace lesiondet;
using testutil::random_tensor;

namespace {

// Independent closed-form parameter count for the architecture: per level
// two (conv3x3 + bias + gamma + beta) blocks, upconv without bias, and the
// 1x1 head with bias.
std::int64_t expected_param_count(const UnetConfig& cfg) {
    const auto block = [](std::int64_t in, std::int64_t out) {
        return 9 * in * out + 3 * out; // weights + bias + gamma + beta
    };
    const auto level = [&](std::int64_t in, std::int64_t out) {
        return block(in, out) + block(out, out);
    };
    const auto filters = [&](int d) {
        return std::int64_t(cfg.base_filters) << d;
    };
    std::int64_t total = 0;
    std::int64_t in = cfg.in_channels;
    for (int d = 0; d < cfg.depth; ++d) {
        total += level(in, filters(d));
        in = filters(d);
    }
    total += level(filters(cfg.depth - 1), filters(cfg.depth));
    for (int d = cfg.depth - 1; d >= 0; --d) {
        total += filters(d + 1) * filters(d) * 4;  // upconv2 weights
        total += level(2 * filters(d), filters(d)); // after skip concat
    }
    total += filters(0) + 1; // head conv1x1 + bias
    return total;
}

Tensor<float> random_input(const Shape& s, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = float(rng.uniform(0.0, 1.0));
    return Tensor<float>(s, std::move(v), false);
}

bool buffers_equal(const std::vector<NamedBuffer>& a, const std::vector<NamedBuffer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].shape != b[i].shape) return false;
        if (a[i].values.size() != b[i].values.size()) return false;
        if (std::memcmp(a[i].values.data(), b[i].values.data(),
                        a[i].values.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

} // namespace

// ---- construction --------------------------------------------------------

TEST_CASE("build matches the closed-form parameter count") {
    SUBCASE("depth 2, base 8") {
        UnetConfig cfg{2, 8, 1};
        UnetModel model = UnetModel::build(cfg, 1);
        CHECK(model.parameter_count() == expected_param_count(cfg));
        CHECK(model.parameter_count() == 29617); // frozen value
    }
    SUBCASE("depth 3, base 8") {
        UnetConfig cfg{3, 8, 1};
        UnetModel model = UnetModel::build(cfg, 1);
        CHECK(model.parameter_count() == expected_param_count(cfg));
    }
    SUBCASE("depth 1, base 4") {
        UnetConfig cfg{1, 4, 1};
        UnetModel model = UnetModel::build(cfg, 1);
        CHECK(model.parameter_count() == expected_param_count(cfg));
    }
}

TEST_CASE("build is deterministic per seed") {
    UnetConfig cfg{2, 4, 1};
    UnetModel a = UnetModel::build(cfg, 99);
    UnetModel b = UnetModel::build(cfg, 99);
    UnetModel c = UnetModel::build(cfg, 100);
    REQUIRE(a.parameters().size() == b.parameters().size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& da = a.parameters()[i].data();
        const auto& db = b.parameters()[i].data();
        const auto& dc = c.parameters()[i].data();
        if (std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) != 0) all_equal = false;
        if (std::memcmp(da.data(), dc.data(), da.size() * sizeof(float)) != 0) any_diff_c = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
}

TEST_CASE("initialization stays within the fan-in uniform bound") {
    UnetConfig cfg{2, 8, 1};
    UnetModel model = UnetModel::build(cfg, 5);
    const auto& names = model.parameter_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& p = model.parameters()[i];
        const std::string& name = names[i];
        if (name.ends_with(".gamma")) {
            for (float v : p.data()) CHECK(v == 1.0f);
        } else if (name.ends_with(".beta") || name.ends_with(".b")) {
            for (float v : p.data()) CHECK(v == 0.0f);
        } else if (name.ends_with(".up.w")) {
            const double bound = std::sqrt(6.0 / p.shape().n); // fan-in: one tap per in_ch
            for (float v : p.data()) CHECK(std::fabs(v) <= bound);
        } else { // conv weights (out,in,k,k): fan_in = in*k*k
            const double bound = std::sqrt(6.0 / (double(p.shape().c) * p.shape().h * p.shape().w));
            bool any_nonzero = false;
            for (float v : p.data()) {
                CHECK(std::fabs(v) <= bound);
                if (v != 0.0f) any_nonzero = true;
            }
            CHECK(any_nonzero);
        }
    }
}

// ---- forward shape contract ------------------------------------------------

TEST_CASE("depth-3 network accepts 344x344 patches and preserves the size") {
    UnetModel model = UnetModel::build(UnetConfig{3, 8, 1}, 7);
    Tensor<float> x = random_input(Shape{1, 1, 344, 344}, 11);
    Tensor<float> y = model.forward(x, Mode::eval);
    CHECK(y.shape() == Shape{1, 1, 344, 344});
    for (float v : y.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("forward rejects indivisible spatial dims naming the required multiple") {
    UnetModel model = UnetModel::build(UnetConfig{3, 8, 1}, 7);
    Tensor<float> x = random_input(Shape{1, 1, 100, 96}, 13);
    try {
        (void)model.forward_logits(x, Mode::eval);
        FAIL("expected a shape error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("multiple of 8") != std::string::npos);
    }
}

TEST_CASE("forward rejects wrong channel counts") {
    UnetModel model = UnetModel::build(UnetConfig{2, 4, 1}, 7);
    Tensor<float> x = random_input(Shape{1, 2, 16, 16}, 17);
    CHECK_THROWS_AS(model.forward_logits(x, Mode::eval), std::invalid_argument);
}

TEST_CASE("non-square inputs keep their shape (fully convolutional)") {
    UnetModel model = UnetModel::build(UnetConfig{3, 4, 1}, 3);
    Tensor<float> x = random_input(Shape{1, 1, 64, 40}, 19);
    Tensor<float> y = model.forward(x, Mode::eval);
    CHECK(y.shape() == Shape{1, 1, 64, 40});
}

TEST_CASE("paper-faithful depth-4 base-128 config passes a small shape check") {
    UnetModel model = UnetModel::build(UnetConfig{4, 128, 1}, 123);
    Tensor<float> x = random_input(Shape{1, 1, 32, 32}, 29);
    Tensor<float> y = model.forward(x, Mode::eval);
    CHECK(y.shape() == Shape{1, 1, 32, 32});
    for (float v : y.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

// ---- pad_to_grid / crop_to ---------------------------------------------------

TEST_CASE("pad_to_grid leaves aligned tensors untouched") {
    Tensor<float> x = random_input(Shape{1, 1, 344, 8}, 31);
    auto [padded, rect] = pad_to_grid(x, 8);
    CHECK(padded.node() == x.node()); // the same tensor, not a copy
    CHECK(rect.height == 344);
    CHECK(rect.width == 8);
}

TEST_CASE("pad_to_grid pads 345 to 352 and records the crop") {
    Tensor<float> x = random_input(Shape{1, 1, 345, 345}, 37);
    auto [padded, rect] = pad_to_grid(x, 8);
    CHECK(padded.shape() == Shape{1, 1, 352, 352});
    CHECK(rect.height == 345);
    CHECK(rect.width == 345);
    // original content in the top-left corner, zeros in the pad region
    for (int r = 0; r < 352; ++r) {
        for (int c = 0; c < 352; ++c) {
            const float got = padded.data()[std::size_t(r) * 352 + c];
            if (r < 345 && c < 345) {
                CHECK(got == x.data()[std::size_t(r) * 345 + c]);
            } else {
                CHECK(got == 0.0f);
            }
        }
    }
}

TEST_CASE("pad then crop is the identity on random tensors") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        const Shape s{1, 2, 5 + int(rng.uniform_below(9)), 5 + int(rng.uniform_below(9))};
        Tensor<float> x = random_input(s, seed * 101);
        auto [padded, rect] = pad_to_grid(x, 8);
        Tensor<float> back = crop_to(padded, rect);
        CHECK(back.shape() == s);
        CHECK(back.data() == x.data());
    }
}

TEST_CASE("pad_to_grid routes gradients back to the unpadded region") {
    Rng rng41(41);
    auto x = random_tensor(Shape{1, 1, 3, 3}, rng41);
    Rng rng(43);
    std::vector<double> seed(16);
    for (auto& v : seed) v = rng.uniform(-1.0, 1.0);
    const double worst = testutil::max_grad_rel_err_seeded(
        [&] {
            auto [padded, rect] = pad_to_grid(x, 4);
            (void)rect;
            return padded;
        },
        {x}, seed);
    CHECK(worst <= 1e-9);
}

// ---- training sanity -------------------------------------------------------------

TEST_CASE("one SGD step on a positive patch strictly decreases its loss") {
    UnetModel model = UnetModel::build(UnetConfig{2, 4, 1}, 2024);

    // bright blob on a dark background; target is the blob disk
    const int n = 16;
    std::vector<float> px(n * n, 0.1f), ty(n * n, 0.0f);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double d2 = (r - 8.0) * (r - 8.0) + (c - 8.0) * (c - 8.0);
            if (d2 <= 9.0) {
                px[r * n + c] = 0.9f;
                ty[r * n + c] = 1.0f;
            }
        }
    }
    Tensor<float> x(Shape{1, 1, n, n}, px, false);
    Tensor<float> t(Shape{1, 1, n, n}, ty, false);

    SgdMomentum<float> opt(1e-3f, 0.9f);
    opt.register_params(model.parameters());

    Tensor<float> loss0 = weighted_logistic_loss(model.forward_logits(x, Mode::train), t, 0.25f);
    for (auto& p : model.parameters()) p.zero_grad();
    backward(loss0);
    opt.step(model.parameters());
    Tensor<float> loss1 = weighted_logistic_loss(model.forward_logits(x, Mode::train), t, 0.25f);

    CHECK(loss1.data()[0] < loss0.data()[0]);
}

TEST_CASE("eval-mode inference is pure") {
    UnetModel model = UnetModel::build(UnetConfig{2, 4, 1}, 55);

    // take one train step first so the running stats are non-trivial
    Tensor<float> xt = random_input(Shape{2, 1, 16, 16}, 61);
    Tensor<float> t(Shape{2, 1, 16, 16}, std::vector<float>(512, 0.0f), false);
    Tensor<float> loss = weighted_logistic_loss(model.forward_logits(xt, Mode::train), t, 0.25f);
    for (auto& p : model.parameters()) p.zero_grad();
    backward(loss);

    const auto before = model.state_buffers();
    Tensor<float> x = random_input(Shape{1, 1, 24, 24}, 67);
    Tensor<float> y1 = model.forward(x, Mode::eval);
    Tensor<float> y2 = model.forward(x, Mode::eval);
    const auto after = model.state_buffers();

    CHECK(buffers_equal(before, after)); // running stats bit-identical
    CHECK(std::memcmp(y1.data().data(), y2.data().data(),
                      y1.data().size() * sizeof(float)) == 0);
}

// ---- state transfer -----------------------------------------------------------------

TEST_CASE("state_buffers round-trip reproduces the forward pass exactly") {
    UnetConfig cfg{2, 4, 1};
    UnetModel a = UnetModel::build(cfg, 71);
    UnetModel b = UnetModel::build(cfg, 72); // different init
    Tensor<float> x = random_input(Shape{1, 1, 16, 16}, 73);

    Tensor<float> ya = a.forward(x, Mode::eval);
    b.load_state_buffers(a.state_buffers());
    Tensor<float> yb = b.forward(x, Mode::eval);
    CHECK(std::memcmp(ya.data().data(), yb.data().data(),
                      ya.data().size() * sizeof(float)) == 0);
}

TEST_CASE("load_state_buffers reports missing and malformed buffers") {
    UnetConfig cfg{2, 4, 1};
    UnetModel a = UnetModel::build(cfg, 81);
    UnetModel b = UnetModel::build(cfg, 82);

    SUBCASE("missing buffer") {
        auto bufs = a.state_buffers();
        bufs.pop_back();
        CHECK_THROWS_AS(b.load_state_buffers(bufs), DataError);
    }
    SUBCASE("shape mismatch") {
        auto bufs = a.state_buffers();
        bufs[0].shape = Shape{1, 1, 1, 1};
        bufs[0].values.resize(1);
        CHECK_THROWS_AS(b.load_state_buffers(bufs), DataError);
    }
    SUBCASE("extra buffers are ignored") {
        auto bufs = a.state_buffers();
        bufs.push_back({"opt.velocity.enc0.c1.w", bufs[0].shape, bufs[0].values});
        CHECK_NOTHROW(b.load_state_buffers(bufs));
    }
}

// ---- full-image inference ---------------------------------------------------------------

TEST_CASE("infer_full_image keeps dimensions and spacing") {
    UnetModel model = UnetModel::build(UnetConfig{3, 4, 1}, 91);
    Image img(90, 70, 0.2f);
    Rng rng(93);
    for (auto& p : img.pixels) p = float(rng.uniform01());
    ProbabilityMap map = model.infer_full_image(img);
    CHECK(map.width == 90);
    CHECK(map.height == 70);
    CHECK(map.spacing_mm == 0.2f);
    for (float v : map.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    ProbabilityMap map2 = model.infer_full_image(img);
    CHECK(std::memcmp(map.values.data(), map2.values.data(),
                      map.values.size() * sizeof(float)) == 0);
}

TEST_CASE("infer_full_image is consistent with its padded computation") {
    UnetModel model = UnetModel::build(UnetConfig{3, 4, 1}, 97);
    Image small(90, 90, 0.2f, 0.0f);  // pads to 96
    Image padded(96, 96, 0.2f, 0.0f); // already aligned
    ProbabilityMap m1 = model.infer_full_image(small);
    ProbabilityMap m2 = model.infer_full_image(padded);
    for (int r = 0; r < 90; ++r) {
        for (int c = 0; c < 90; ++c) {
            CHECK(m1.at(r, c) == m2.at(r, c)); // bitwise: same forward, cropped
        }
    }
}
