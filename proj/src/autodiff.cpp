#include "lesiondet/autodiff.hpp"

#include "lesiondet/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <cblas.h>

namespace lesiondet {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
}

// ---- tensor handle ----------------------------------------------------------

namespace {

void validate_shape(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw std::invalid_argument("Tensor: all dimensions must be >= 1, got " + s.str());
    }
}

} // namespace

template <typename T>
std::vector<T>& TensorNode<T>::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
}

template <typename T>
Tensor<T>::Tensor(const Shape& shape, bool requires_grad) {
    validate_shape(shape);
    node_ = std::make_shared<TensorNode<T>>();
    node_->shape = shape;
    node_->data.assign(static_cast<std::size_t>(shape.numel()), T(0));
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(const Shape& shape, std::vector<T> values, bool requires_grad) {
    validate_shape(shape);
    if (values.size() != static_cast<std::size_t>(shape.numel())) {
        throw std::invalid_argument("Tensor: value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape.str());
    }
    node_ = std::make_shared<TensorNode<T>>();
    node_->shape = shape;
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    if (!node_) throw std::invalid_argument("Tensor: undefined");
    return node_->shape;
}

template <typename T>
std::vector<T>& Tensor<T>::data() {
    if (!node_) throw std::invalid_argument("Tensor: undefined");
    return node_->data;
}

template <typename T>
const std::vector<T>& Tensor<T>::data() const {
    if (!node_) throw std::invalid_argument("Tensor: undefined");
    return node_->data;
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
    if (!node_) throw std::invalid_argument("Tensor: undefined");
    return node_->ensure_grad();
}

template <typename T>
bool Tensor<T>::has_grad() const {
    return node_ && !node_->grad.empty();
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
}

template <typename T>
bool Tensor<T>::requires_grad() const {
    return node_ && node_->requires_grad;
}

// ---- backward ---------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& root, const std::vector<T>& seed) {
    TensorNode<T>* r = root.node();
    if (!r) throw std::invalid_argument("backward: undefined tensor");
    if (seed.size() != r->data.size()) {
        throw std::invalid_argument("backward: seed size does not match output");
    }

    // Reverse postorder of a DFS over parent edges is a topological order
    // in which every node precedes all of its producers.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.push_back({r, 0});
    visited.insert(r);
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->parents.size()) {
            TensorNode<T>* p = top.first->parents[top.second].get();
            ++top.second;
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch for this call; only leaf gradients
    // accumulate across backward calls.
    for (TensorNode<T>* n : order) {
        if (n->backward_fn && !n->grad.empty()) {
            std::fill(n->grad.begin(), n->grad.end(), T(0));
        }
    }

    std::vector<T>& g = r->ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

template <typename T>
void backward(const Tensor<T>& root) {
    if (!root.defined() || root.shape().numel() != 1) {
        throw std::invalid_argument("backward: implicit seed requires a scalar output");
    }
    backward(root, std::vector<T>{T(1)});
}

// ---- BLAS dispatch ----------------------------------------------------------

namespace {

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 float alpha, const float* a, int lda, const float* b, int ldb,
                 float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 double alpha, const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Reused per-thread scratch (im2col buffers and the like); grows on demand.
template <typename T>
std::vector<T>& tls_scratch(int which) {
    thread_local std::vector<T> bufs[2];
    return bufs[which];
}

// dst[x] = src[x + s] where out-of-range taps read as zero; s in {-1, 0, +1}.
template <typename T>
void shifted_row_copy(const T* src, T* dst, int w, int s) {
    if (s == 0) {
        std::memcpy(dst, src, static_cast<std::size_t>(w) * sizeof(T));
    } else if (s < 0) {
        dst[0] = T(0);
        if (w > 1) std::memcpy(dst + 1, src, static_cast<std::size_t>(w - 1) * sizeof(T));
    } else {
        if (w > 1) std::memcpy(dst, src + 1, static_cast<std::size_t>(w - 1) * sizeof(T));
        dst[w - 1] = T(0);
    }
}

// Unfolds one (c, h, w) item into a (c*9) x (h*w) matrix for a 3x3
// zero-padded "same" convolution.
template <typename T>
void im2col3(const T* x, int c, int h, int w, T* col) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ic = 0; ic < c; ++ic) {
        const T* xc = x + static_cast<std::size_t>(ic) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + static_cast<std::size_t>(ic * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    T* dst = row + static_cast<std::size_t>(y) * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst, dst + w, T(0));
                    } else {
                        shifted_row_copy(xc + static_cast<std::size_t>(sy) * w, dst, w, kx - 1);
                    }
                }
            }
        }
    }
}

// Transpose of im2col3: accumulates a (c*9) x (h*w) gradient matrix back
// into the (c, h, w) input gradient.
template <typename T>
void col2im3_add(const T* col, int c, int h, int w, T* gx) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ic = 0; ic < c; ++ic) {
        T* gc = gx + static_cast<std::size_t>(ic) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + static_cast<std::size_t>(ic * 9 + ky * 3 + kx) * hw;
                const int s = kx - 1;
                const int x0 = std::max(0, -s);
                const int x1 = std::min(w, w - s);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(y) * w;
                    T* dst = gc + static_cast<std::size_t>(sy) * w;
                    for (int x = x0; x < x1; ++x) dst[x + s] += src[x];
                }
            }
        }
    }
}

template <typename T>
Tensor<T> make_output(const Shape& shape, std::vector<std::shared_ptr<TensorNode<T>>> parents) {
    bool req = false;
    for (const auto& p : parents) req = req || (p && p->requires_grad);
    Tensor<T> out(shape);
    out.node()->requires_grad = req;
    out.node()->parents = std::move(parents);
    return out;
}

} // namespace

// ---- conv2d -----------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
    if (!x.defined() || !weights.defined() || !bias.defined()) {
        throw std::invalid_argument("conv2d: undefined tensor argument");
    }
    const Shape& xs = x.shape();
    const Shape& ws = weights.shape();
    const int k = ws.h;
    if (ws.h != ws.w || (k != 1 && k != 3)) {
        throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3, got " + ws.str());
    }
    if (ws.c != xs.c) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) +
                                    " channels but weights expect " + std::to_string(ws.c));
    }
    const Shape& bs = bias.shape();
    if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
        throw std::invalid_argument("conv2d: bias shape " + bs.str() + " must be (1," +
                                    std::to_string(ws.n) + ",1,1)");
    }

    const int n = xs.n, ic = xs.c, h = xs.h, w = xs.w, oc = ws.n;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const int kdim = ic * k * k;

    Tensor<T> out = make_output<T>(Shape{n, oc, h, w},
                                   {x.node_ptr(), weights.node_ptr(), bias.node_ptr()});
    const T* wd = weights.data().data();
    const T* bd = bias.data().data();
    T* od = out.data().data();
    const T* xd = x.data().data();

    std::vector<T>& col = tls_scratch<T>(0);
    if (k == 3) col.resize(static_cast<std::size_t>(kdim) * hw);

    for (int item = 0; item < n; ++item) {
        const T* xi = xd + static_cast<std::size_t>(item) * ic * hw;
        T* oi = od + static_cast<std::size_t>(item) * oc * hw;
        const T* colp = xi;
        if (k == 3) {
            im2col3(xi, ic, h, w, col.data());
            colp = col.data();
        }
        gemm(CblasNoTrans, CblasNoTrans, oc, static_cast<int>(hw), kdim,
             T(1), wd, kdim, colp, static_cast<int>(hw), T(0), oi, static_cast<int>(hw));
        for (int o = 0; o < oc; ++o) {
            T* row = oi + static_cast<std::size_t>(o) * hw;
            const T b = bd[o];
            for (std::size_t j = 0; j < hw; ++j) row[j] += b;
        }
    }

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [k, n, ic, oc, h, w, kdim](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            TensorNode<T>& wp = *self.parents[1];
            TensorNode<T>& bp = *self.parents[2];
            const std::size_t hw = static_cast<std::size_t>(h) * w;
            const T* gout = self.grad.data();

            if (bp.requires_grad) {
                T* gb = bp.ensure_grad().data();
                for (int item = 0; item < n; ++item) {
                    for (int o = 0; o < oc; ++o) {
                        const T* row = gout + (static_cast<std::size_t>(item) * oc + o) * hw;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < hw; ++j) acc += row[j];
                        gb[o] += static_cast<T>(acc);
                    }
                }
            }
            if (!wp.requires_grad && !xp.requires_grad) return;

            std::vector<T>& col = tls_scratch<T>(0);
            std::vector<T>& dcol = tls_scratch<T>(1);
            if (k == 3) {
                if (wp.requires_grad) col.resize(static_cast<std::size_t>(kdim) * hw);
                if (xp.requires_grad) dcol.resize(static_cast<std::size_t>(kdim) * hw);
            }
            for (int item = 0; item < n; ++item) {
                const T* xi = xp.data.data() + static_cast<std::size_t>(item) * ic * hw;
                const T* gi = gout + static_cast<std::size_t>(item) * oc * hw;
                if (wp.requires_grad) {
                    const T* colp = xi;
                    if (k == 3) {
                        im2col3(xi, ic, h, w, col.data());
                        colp = col.data();
                    }
                    gemm(CblasNoTrans, CblasTrans, oc, kdim, static_cast<int>(hw),
                         T(1), gi, static_cast<int>(hw), colp, static_cast<int>(hw),
                         T(1), wp.ensure_grad().data(), kdim);
                }
                if (xp.requires_grad) {
                    T* gx = xp.ensure_grad().data() + static_cast<std::size_t>(item) * ic * hw;
                    if (k == 1) {
                        gemm(CblasTrans, CblasNoTrans, ic, static_cast<int>(hw), oc,
                             T(1), wp.data.data(), kdim, gi, static_cast<int>(hw),
                             T(1), gx, static_cast<int>(hw));
                    } else {
                        gemm(CblasTrans, CblasNoTrans, kdim, static_cast<int>(hw), oc,
                             T(1), wp.data.data(), kdim, gi, static_cast<int>(hw),
                             T(0), dcol.data(), static_cast<int>(hw));
                        col2im3_add(dcol.data(), ic, h, w, gx);
                    }
                }
            }
        };
    }
    return out;
}

// ---- relu -------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    if (!x.defined()) throw std::invalid_argument("relu: undefined tensor");
    Tensor<T> out = make_output<T>(x.shape(), {x.node_ptr()});
    const std::vector<T>& xd = x.data();
    std::vector<T>& od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            if (!xp.requires_grad) return;
            std::vector<T>& gx = xp.ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                if (xp.data[i] > T(0)) gx[i] += self.grad[i];
            }
        };
    }
    return out;
}

// ---- batch norm ---------------------------------------------------------------

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode, T eps, T stats_momentum) {
    if (!x.defined() || !gamma.defined() || !beta.defined()) {
        throw std::invalid_argument("batch_norm: undefined tensor argument");
    }
    const Shape& xs = x.shape();
    const int c = xs.c;
    auto check_param = [&](const Tensor<T>& p, const char* name) {
        const Shape& s = p.shape();
        if (s.n != 1 || s.c != c || s.h != 1 || s.w != 1) {
            throw std::invalid_argument(std::string("batch_norm: ") + name + " shape " + s.str() +
                                        " must be (1," + std::to_string(c) + ",1,1)");
        }
    };
    check_param(gamma, "gamma");
    check_param(beta, "beta");
    if (state.running_mean.empty() && state.running_var.empty()) {
        state.running_mean.assign(c, T(0));
        state.running_var.assign(c, T(1));
    }
    if (static_cast<int>(state.running_mean.size()) != c ||
        static_cast<int>(state.running_var.size()) != c) {
        throw std::invalid_argument("batch_norm: running-stats channel count mismatch");
    }

    const int n = xs.n, h = xs.h, w = xs.w;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * hw; // samples per channel

    std::vector<T> mean(c), invstd(c);
    if (mode == Mode::train) {
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0.0, sum2 = 0.0;
            for (int item = 0; item < n; ++item) {
                const T* p = x.data().data() + (static_cast<std::size_t>(item) * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    const double v = p[j];
                    sum += v;
                    sum2 += v * v;
                }
            }
            const double mu = sum / static_cast<double>(m);
            const double var = std::max(0.0, sum2 / static_cast<double>(m) - mu * mu);
            mean[ch] = static_cast<T>(mu);
            invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            state.running_mean[ch] = stats_momentum * state.running_mean[ch] +
                                     (T(1) - stats_momentum) * static_cast<T>(mu);
            state.running_var[ch] = stats_momentum * state.running_var[ch] +
                                    (T(1) - stats_momentum) * static_cast<T>(var);
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) +
                                                        static_cast<double>(eps)));
        }
    }

    Tensor<T> out = make_output<T>(xs, {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()});
    const T* gd = gamma.data().data();
    const T* bd = beta.data().data();
    for (int item = 0; item < n; ++item) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(item) * c + ch) * hw;
            const T mu = mean[ch], is = invstd[ch], g = gd[ch], b = bd[ch];
            const T* xi = x.data().data() + base;
            T* oi = out.data().data() + base;
            for (std::size_t j = 0; j < hw; ++j) oi[j] = g * (xi[j] - mu) * is + b;
        }
    }

    if (out.node()->requires_grad) {
        const bool train = (mode == Mode::train);
        out.node()->backward_fn = [n, c, h, w, mean, invstd, train](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            TensorNode<T>& gp = *self.parents[1];
            TensorNode<T>& bp = *self.parents[2];
            const std::size_t hw = static_cast<std::size_t>(h) * w;
            const double m = static_cast<double>(n) * hw;

            for (int ch = 0; ch < c; ++ch) {
                const T mu = mean[ch], is = invstd[ch];
                double s1 = 0.0, s2 = 0.0; // sum(gy), sum(gy * xhat)
                for (int item = 0; item < n; ++item) {
                    const std::size_t base = (static_cast<std::size_t>(item) * c + ch) * hw;
                    const T* gy = self.grad.data() + base;
                    const T* xi = xp.data.data() + base;
                    for (std::size_t j = 0; j < hw; ++j) {
                        const double xhat = (xi[j] - mu) * is;
                        s1 += gy[j];
                        s2 += gy[j] * xhat;
                    }
                }
                if (bp.requires_grad) bp.ensure_grad()[ch] += static_cast<T>(s1);
                if (gp.requires_grad) gp.ensure_grad()[ch] += static_cast<T>(s2);
                if (!xp.requires_grad) continue;

                const T g = gp.data[ch];
                T* gx_all = xp.ensure_grad().data();
                if (train) {
                    const double mean_gy = s1 / m;
                    const double mean_gyx = s2 / m;
                    for (int item = 0; item < n; ++item) {
                        const std::size_t base = (static_cast<std::size_t>(item) * c + ch) * hw;
                        const T* gy = self.grad.data() + base;
                        const T* xi = xp.data.data() + base;
                        T* gx = gx_all + base;
                        for (std::size_t j = 0; j < hw; ++j) {
                            const double xhat = (xi[j] - mu) * is;
                            gx[j] += static_cast<T>(g * is * (gy[j] - mean_gy - xhat * mean_gyx));
                        }
                    }
                } else {
                    const T scale = g * is;
                    for (int item = 0; item < n; ++item) {
                        const std::size_t base = (static_cast<std::size_t>(item) * c + ch) * hw;
                        const T* gy = self.grad.data() + base;
                        T* gx = gx_all + base;
                        for (std::size_t j = 0; j < hw; ++j) gx[j] += scale * gy[j];
                    }
                }
            }
        };
    }
    return out;
}

// ---- maxpool2 -----------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
    if (!x.defined()) throw std::invalid_argument("maxpool2: undefined tensor");
    const Shape& xs = x.shape();
    if (xs.h % 2 != 0 || xs.w % 2 != 0) {
        throw std::invalid_argument("maxpool2: spatial dimensions must be even, got " + xs.str());
    }
    const int n = xs.n, c = xs.c, h = xs.h, w = xs.w;
    const int oh = h / 2, ow = w / 2;

    Tensor<T> out = make_output<T>(Shape{n, c, oh, ow}, {x.node_ptr()});
    std::vector<std::int32_t> argmax(out.data().size());

    const T* xd = x.data().data();
    T* od = out.data().data();
    std::size_t oi = 0;
    for (int item = 0; item < n; ++item) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t plane = (static_cast<std::size_t>(item) * c + ch) *
                                      static_cast<std::size_t>(h) * w;
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo, ++oi) {
                    // fixed scan order gives the first-wins tie-break
                    const std::size_t i00 = plane + static_cast<std::size_t>(2 * y) * w + 2 * xo;
                    std::size_t best = i00;
                    T bv = xd[i00];
                    const std::size_t cand[3] = {i00 + 1, i00 + w, i00 + w + 1};
                    for (std::size_t k = 0; k < 3; ++k) {
                        if (xd[cand[k]] > bv) {
                            bv = xd[cand[k]];
                            best = cand[k];
                        }
                    }
                    od[oi] = bv;
                    argmax[oi] = static_cast<std::int32_t>(best - plane);
                }
            }
        }
    }

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [n, c, h, w, oh, ow, argmax = std::move(argmax)](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            if (!xp.requires_grad) return;
            std::vector<T>& gx = xp.ensure_grad();
            std::size_t oi = 0;
            const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
            for (int item = 0; item < n; ++item) {
                for (int ch = 0; ch < c; ++ch) {
                    const std::size_t plane = (static_cast<std::size_t>(item) * c + ch) *
                                              static_cast<std::size_t>(h) * w;
                    for (std::size_t j = 0; j < ohw; ++j, ++oi) {
                        gx[plane + static_cast<std::size_t>(argmax[oi])] += self.grad[oi];
                    }
                }
            }
        };
    }
    return out;
}

// ---- upconv2 -----------------------------------------------------------------

template <typename T>
Tensor<T> upconv2(const Tensor<T>& x, const Tensor<T>& weights) {
    if (!x.defined() || !weights.defined()) {
        throw std::invalid_argument("upconv2: undefined tensor argument");
    }
    const Shape& xs = x.shape();
    const Shape& ws = weights.shape();
    if (ws.h != 2 || ws.w != 2) {
        throw std::invalid_argument("upconv2: kernel must be 2x2, got " + ws.str());
    }
    if (ws.n != xs.c) {
        throw std::invalid_argument("upconv2: input has " + std::to_string(xs.c) +
                                    " channels but weights expect " + std::to_string(ws.n));
    }
    const int n = xs.n, ic = xs.c, h = xs.h, w = xs.w, oc = ws.c;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const int oc4 = oc * 4;

    Tensor<T> out = make_output<T>(Shape{n, oc, 2 * h, 2 * w}, {x.node_ptr(), weights.node_ptr()});
    const T* wd = weights.data().data(); // (ic, oc, 2, 2) == row-major (ic x oc4)
    const T* xd = x.data().data();
    T* od = out.data().data();

    std::vector<T>& outcol = tls_scratch<T>(0);
    outcol.resize(static_cast<std::size_t>(oc4) * hw);

    const std::size_t out_hw = static_cast<std::size_t>(2 * h) * (2 * w);
    for (int item = 0; item < n; ++item) {
        const T* xi = xd + static_cast<std::size_t>(item) * ic * hw;
        // outcol[(o*4 + dy*2 + dx)][y*w + x] = sum_i w[i][o][dy][dx] * x[i][y][x]
        gemm(CblasTrans, CblasNoTrans, oc4, static_cast<int>(hw), ic,
             T(1), wd, oc4, xi, static_cast<int>(hw), T(0), outcol.data(), static_cast<int>(hw));
        T* oi = od + static_cast<std::size_t>(item) * oc * out_hw;
        for (int o = 0; o < oc; ++o) {
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const T* src = outcol.data() + static_cast<std::size_t>(o * 4 + dy * 2 + dx) * hw;
                    T* dplane = oi + static_cast<std::size_t>(o) * out_hw;
                    for (int y = 0; y < h; ++y) {
                        T* drow = dplane + static_cast<std::size_t>(2 * y + dy) * (2 * w) + dx;
                        const T* srow = src + static_cast<std::size_t>(y) * w;
                        for (int xc = 0; xc < w; ++xc) drow[2 * xc] = srow[xc];
                    }
                }
            }
        }
    }

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [n, ic, oc, h, w, oc4](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            TensorNode<T>& wp = *self.parents[1];
            const std::size_t hw = static_cast<std::size_t>(h) * w;
            const std::size_t out_hw = static_cast<std::size_t>(2 * h) * (2 * w);

            std::vector<T>& gcol = tls_scratch<T>(1);
            gcol.resize(static_cast<std::size_t>(oc4) * hw);

            for (int item = 0; item < n; ++item) {
                const T* gi = self.grad.data() + static_cast<std::size_t>(item) * oc * out_hw;
                for (int o = 0; o < oc; ++o) {
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            T* dst = gcol.data() + static_cast<std::size_t>(o * 4 + dy * 2 + dx) * hw;
                            const T* splane = gi + static_cast<std::size_t>(o) * out_hw;
                            for (int y = 0; y < h; ++y) {
                                const T* srow = splane + static_cast<std::size_t>(2 * y + dy) * (2 * w) + dx;
                                T* drow = dst + static_cast<std::size_t>(y) * w;
                                for (int xc = 0; xc < w; ++xc) drow[xc] = srow[2 * xc];
                            }
                        }
                    }
                }
                if (xp.requires_grad) {
                    T* gx = xp.ensure_grad().data() + static_cast<std::size_t>(item) * ic * hw;
                    gemm(CblasNoTrans, CblasNoTrans, ic, static_cast<int>(hw), oc4,
                         T(1), wp.data.data(), oc4, gcol.data(), static_cast<int>(hw),
                         T(1), gx, static_cast<int>(hw));
                }
                if (wp.requires_grad) {
                    const T* xi = xp.data.data() + static_cast<std::size_t>(item) * ic * hw;
                    gemm(CblasNoTrans, CblasTrans, ic, oc4, static_cast<int>(hw),
                         T(1), xi, static_cast<int>(hw), gcol.data(), static_cast<int>(hw),
                         T(1), wp.ensure_grad().data(), oc4);
                }
            }
        };
    }
    return out;
}

// ---- concat_channels -----------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.defined() || !b.defined()) {
        throw std::invalid_argument("concat_channels: undefined tensor argument");
    }
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
        throw std::invalid_argument("concat_channels: batch/spatial mismatch " + as.str() +
                                    " vs " + bs.str());
    }
    const int n = as.n, ca = as.c, cb = bs.c, h = as.h, w = as.w;
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    Tensor<T> out = make_output<T>(Shape{n, ca + cb, h, w}, {a.node_ptr(), b.node_ptr()});
    T* od = out.data().data();
    for (int item = 0; item < n; ++item) {
        std::memcpy(od + static_cast<std::size_t>(item) * (ca + cb) * hw,
                    a.data().data() + static_cast<std::size_t>(item) * ca * hw,
                    ca * hw * sizeof(T));
        std::memcpy(od + (static_cast<std::size_t>(item) * (ca + cb) + ca) * hw,
                    b.data().data() + static_cast<std::size_t>(item) * cb * hw,
                    cb * hw * sizeof(T));
    }

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [n, ca, cb, hw](TensorNode<T>& self) {
            TensorNode<T>& ap = *self.parents[0];
            TensorNode<T>& bp = *self.parents[1];
            for (int item = 0; item < n; ++item) {
                const T* g = self.grad.data() + static_cast<std::size_t>(item) * (ca + cb) * hw;
                if (ap.requires_grad) {
                    T* ga = ap.ensure_grad().data() + static_cast<std::size_t>(item) * ca * hw;
                    for (std::size_t j = 0; j < ca * hw; ++j) ga[j] += g[j];
                }
                if (bp.requires_grad) {
                    T* gb = bp.ensure_grad().data() + static_cast<std::size_t>(item) * cb * hw;
                    const T* gsrc = g + ca * hw;
                    for (std::size_t j = 0; j < cb * hw; ++j) gb[j] += gsrc[j];
                }
            }
        };
    }
    return out;
}

// ---- sigmoid --------------------------------------------------------------------

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    if (!x.defined()) throw std::invalid_argument("sigmoid: undefined tensor");
    Tensor<T> out = make_output<T>(x.shape(), {x.node_ptr()});
    const std::vector<T>& xd = x.data();
    std::vector<T>& od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        const T v = xd[i];
        if (v >= T(0)) {
            od[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            od[i] = e / (T(1) + e);
        }
    }

    if (out.node()->requires_grad) {
        out.node()->backward_fn = [](TensorNode<T>& self) {
            TensorNode<T>& xp = *self.parents[0];
            if (!xp.requires_grad) return;
            std::vector<T>& gx = xp.ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                const T y = self.data[i];
                gx[i] += self.grad[i] * y * (T(1) - y);
            }
        };
    }
    return out;
}

// ---- weighted logistic loss -------------------------------------------------------

template <typename T>
Tensor<T> weighted_logistic_loss(const Tensor<T>& logits, const Tensor<T>& target,
                                 T negative_weight) {
    if (!logits.defined() || !target.defined()) {
        throw std::invalid_argument("weighted_logistic_loss: undefined tensor argument");
    }
    if (logits.shape() != target.shape()) {
        throw std::invalid_argument("weighted_logistic_loss: shape mismatch " +
                                    logits.shape().str() + " vs " + target.shape().str());
    }
    if (!(negative_weight >= T(0))) {
        throw std::invalid_argument("weighted_logistic_loss: negative_weight must be >= 0");
    }
    const std::vector<T>& z = logits.data();
    const std::vector<T>& y = target.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != T(0) && y[i] != T(1)) {
            throw std::invalid_argument("weighted_logistic_loss: target values must be exactly 0 or 1");
        }
    }

    double acc = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double zi = z[i];
        const double yi = y[i];
        const double wi = (yi == 1.0) ? 1.0 : static_cast<double>(negative_weight);
        const double bce = std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
        acc += wi * bce;
        wsum += wi;
    }
    if (!(wsum > 0.0)) {
        throw std::invalid_argument("weighted_logistic_loss: total weight is zero");
    }

    Tensor<T> out = make_output<T>(Shape{1, 1, 1, 1}, {logits.node_ptr(), target.node_ptr()});
    out.data()[0] = static_cast<T>(acc / wsum);

    if (out.node()->requires_grad) {
        const T inv_wsum = static_cast<T>(1.0 / wsum);
        out.node()->backward_fn = [negative_weight, inv_wsum](TensorNode<T>& self) {
            TensorNode<T>& zp = *self.parents[0];
            TensorNode<T>& yp = *self.parents[1];
            if (!zp.requires_grad) return; // binary targets receive no gradient
            const T g = self.grad[0];
            std::vector<T>& gz = zp.ensure_grad();
            for (std::size_t i = 0; i < zp.data.size(); ++i) {
                const T zi = zp.data[i];
                const T yi = yp.data[i];
                const T wi = (yi == T(1)) ? T(1) : negative_weight;
                T s;
                if (zi >= T(0)) {
                    s = T(1) / (T(1) + std::exp(-zi));
                } else {
                    const T e = std::exp(zi);
                    s = e / (T(1) + e);
                }
                gz[i] += g * wi * (s - yi) * inv_wsum;
            }
        };
    }
    return out;
}

// ---- optimizer ----------------------------------------------------------------

template <typename T>
SgdMomentum<T>::SgdMomentum(T learning_rate, T momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > T(0))) {
        throw std::invalid_argument("SgdMomentum: learning_rate must be positive");
    }
    if (!(momentum >= T(0)) || !(momentum < T(1))) {
        throw std::invalid_argument("SgdMomentum: momentum must be in [0,1)");
    }
}

template <typename T>
void SgdMomentum<T>::register_params(const std::vector<Tensor<T>>& params) {
    velocity_.clear();
    velocity_.reserve(params.size());
    for (const Tensor<T>& p : params) {
        velocity_.emplace_back(p.data().size(), T(0));
    }
}

template <typename T>
void SgdMomentum<T>::step(std::vector<Tensor<T>>& params) {
    if (velocity_.size() != params.size()) {
        throw std::invalid_argument("SgdMomentum::step: " + std::to_string(params.size()) +
                                    " parameters but " + std::to_string(velocity_.size()) +
                                    " velocity buffers registered");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<T>& v = velocity_[i];
        std::vector<T>& p = params[i].data();
        if (v.size() != p.size()) {
            throw std::invalid_argument("SgdMomentum::step: parameter " + std::to_string(i) +
                                        " shape changed since registration");
        }
        if (params[i].has_grad()) {
            const std::vector<T>& g = params[i].grad();
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = momentum_ * v[j] + g[j];
                p[j] -= learning_rate_ * v[j];
            }
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = momentum_ * v[j];
                p[j] -= learning_rate_ * v[j];
            }
        }
    }
}

float PlateauSchedule::update(float val_loss, float learning_rate) {
    const bool improved = !std::isnan(val_loss) && (val_loss < best_loss - min_improvement);
    if (improved) {
        best_loss = val_loss;
        epochs_since_improve = 0;
    } else {
        ++epochs_since_improve;
        if (epochs_since_improve >= patience) {
            learning_rate *= factor;
            epochs_since_improve = 0;
        }
    }
    return learning_rate;
}

// ---- checkpoints -----------------------------------------------------------------

namespace {

constexpr char kCkptMagic[6] = {'C', 'K', 'P', 'T', '1', '\n'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError(path + ": truncated checkpoint");
    return v;
}

} // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedBuffer>& buffers) {
    static_assert(std::endian::native == std::endian::little,
                  "CKPT1 writer assumes little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    write_u32(out, static_cast<std::uint32_t>(buffers.size()));
    for (const NamedBuffer& b : buffers) {
        if (b.values.size() != static_cast<std::size_t>(b.shape.numel())) {
            throw std::invalid_argument("write_checkpoint: buffer '" + b.name +
                                        "' size does not match its shape");
        }
        write_u32(out, static_cast<std::uint32_t>(b.name.size()));
        out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        write_u32(out, static_cast<std::uint32_t>(b.shape.n));
        write_u32(out, static_cast<std::uint32_t>(b.shape.c));
        write_u32(out, static_cast<std::uint32_t>(b.shape.h));
        write_u32(out, static_cast<std::uint32_t>(b.shape.w));
        out.write(reinterpret_cast<const char*>(b.values.data()),
                  static_cast<std::streamsize>(b.values.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<NamedBuffer> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[6] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0) {
        throw IoError(path + ": bad CKPT1 magic");
    }
    const std::uint32_t count = read_u32(in, path);
    std::vector<NamedBuffer> buffers;
    buffers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedBuffer b;
        const std::uint32_t name_len = read_u32(in, path);
        if (name_len > 4096) throw IoError(path + ": implausible checkpoint entry name length");
        b.name.resize(name_len);
        in.read(b.name.data(), name_len);
        b.shape.n = static_cast<int>(read_u32(in, path));
        b.shape.c = static_cast<int>(read_u32(in, path));
        b.shape.h = static_cast<int>(read_u32(in, path));
        b.shape.w = static_cast<int>(read_u32(in, path));
        if (b.shape.numel() <= 0 || b.shape.numel() > (std::int64_t(1) << 32)) {
            throw IoError(path + ": implausible checkpoint entry shape");
        }
        b.values.resize(static_cast<std::size_t>(b.shape.numel()));
        in.read(reinterpret_cast<char*>(b.values.data()),
                static_cast<std::streamsize>(b.values.size() * sizeof(float)));
        if (!in) throw IoError(path + ": truncated checkpoint");
        buffers.push_back(std::move(b));
    }
    return buffers;
}

// ---- explicit instantiations -------------------------------------------------------

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Tensor<float>;
template class Tensor<double>;
template class SgdMomentum<float>;
template class SgdMomentum<double>;

template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template void backward(const Tensor<float>&, const std::vector<float>&);
template void backward(const Tensor<double>&, const std::vector<double>&);

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> relu(const Tensor<float>&);
template Tensor<double> relu(const Tensor<double>&);
template Tensor<float> batch_norm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                  BatchNormState<float>&, Mode, float, float);
template Tensor<double> batch_norm(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                   BatchNormState<double>&, Mode, double, double);
template Tensor<float> maxpool2(const Tensor<float>&);
template Tensor<double> maxpool2(const Tensor<double>&);
template Tensor<float> upconv2(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> upconv2(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> sigmoid(const Tensor<float>&);
template Tensor<double> sigmoid(const Tensor<double>&);
template Tensor<float> weighted_logistic_loss(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> weighted_logistic_loss(const Tensor<double>&, const Tensor<double>&, double);

} // namespace lesiondet
