#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "advarch/autograd.hpp"

namespace advarch {

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
    if (grad.data.empty()) grad = Tensor<T>(value.shape);
    return grad;
}

template <typename T>
VarT<T> make_leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
void backward(const VarT<T>& root) {
    if (!root) throw std::logic_error("backward on a null node");
    if (root->value.size() != 1) throw ShapeError("backward needs a single-element root, got " + shape_string(root->value.shape));
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node<T>* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->grad_buffer().data.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>& n = **it;
        if (n.backward_fn && !n.grad.data.empty()) n.backward_fn(n);
    }
}

namespace ops {
namespace {

template <typename T>
VarT<T> result(Tensor<T> v, std::vector<VarT<T>> parents, std::function<void(Node<T>&)> fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const VarT<T>& p) { return p && p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

template <typename T>
bool wants(const VarT<T>& p) {
    return p && p->requires_grad;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

// Fixed-order dot product with eight partial sums.
template <typename T>
T dot(const T* a, const T* b, int n) {
    T acc[8] = {};
    int j = 0;
    for (; j + 8 <= n; j += 8)
        for (int u = 0; u < 8; ++u) acc[u] += a[j + u] * b[j + u];
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; j < n; ++j) s += a[j] * b[j];
    return s;
}

template <typename T>
void axpy(T a, const T* x, T* y, int n) {
    for (int j = 0; j < n; ++j) y[j] += a * x[j];
}

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, const Conv2dArgs& a, int Ho, int Wo, T* cols) {
    const int hw = Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * hw;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * a.stride - a.pad + ki * a.dilation;
                    T* dst = row + oh * Wo;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst, dst + Wo, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * a.stride - a.pad + kj * a.dilation;
                        dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, int C, int H, int W, int k, const Conv2dArgs& a, int Ho, int Wo, T* x) {
    const int hw = Ho * Wo;
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * hw;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * a.stride - a.pad + ki * a.dilation;
                    if (ih < 0 || ih >= H) continue;
                    T* dst = x + (static_cast<std::size_t>(c) * H + ih) * W;
                    const T* src = row + oh * Wo;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * a.stride - a.pad + kj * a.dilation;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
}

template <typename T>
T sigm(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

// Elementwise op with a per-element derivative.
template <typename T, typename F, typename D>
VarT<T> unary(const VarT<T>& x, F f, D df) {
    Tensor<T> out(x->value.shape);
    const auto& in = x->value.data;
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = f(in[i]);
    return result<T>(std::move(out), {x}, [x, df](Node<T>& self) {
        auto& g = x->grad_buffer().data;
        const auto& in = x->value.data;
        for (std::size_t i = 0; i < in.size(); ++i) g[i] += self.grad.data[i] * df(in[i]);
    });
}

}  // namespace

template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const Conv2dArgs& a) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    require(xs.size() == 4 && ws.size() == 4 && ws[2] == ws[3],
            "conv2d expects [B,C,H,W] input and [O,C/g,k,k] weight, got " + shape_string(xs) + " and " + shape_string(ws));
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int O = ws[0], k = ws[2], G = a.groups;
    require(G >= 1 && C % G == 0 && O % G == 0 && ws[1] == C / G,
            "conv2d channel mismatch: input " + shape_string(xs) + ", weight " + shape_string(ws) + ", groups " +
                std::to_string(G));
    const int Ho = conv_out_size(H, k, a), Wo = conv_out_size(W, k, a);
    require(Ho > 0 && Wo > 0, "conv2d output would be empty for input " + shape_string(xs));
    const int Cg = C / G, Og = O / G, R = Cg * k * k, HWo = Ho * Wo;
    const bool direct = k == 1 && a.stride == 1 && a.pad == 0;

    Tensor<T> out({B, O, Ho, Wo});
    std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(R) * HWo);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < G; ++g) {
            const T* xg = x->value.ptr() + (static_cast<std::size_t>(b) * C + g * Cg) * H * W;
            if (!direct) im2col(xg, Cg, H, W, k, a, Ho, Wo, cols.data());
            const T* cm = direct ? xg : cols.data();
            const T* wg = w->value.ptr() + static_cast<std::size_t>(g) * Og * R;
            T* og = out.ptr() + (static_cast<std::size_t>(b) * O + g * Og) * HWo;
            for (int o = 0; o < Og; ++o)
                for (int r = 0; r < R; ++r) axpy(wg[o * R + r], cm + static_cast<std::size_t>(r) * HWo, og + o * HWo, HWo);
        }

    return result<T>(std::move(out), {x, w}, [x, w, a, B, C, H, W, O, k, G, Ho, Wo, Cg, Og, R, HWo, direct](Node<T>& self) {
        std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(R) * HWo);
        std::vector<T> dcols(static_cast<std::size_t>(R) * HWo);
        T* dw = wants(w) ? w->grad_buffer().ptr() : nullptr;
        T* dx = wants(x) ? x->grad_buffer().ptr() : nullptr;
        for (int b = 0; b < B; ++b)
            for (int g = 0; g < G; ++g) {
                const T* dog = self.grad.ptr() + (static_cast<std::size_t>(b) * O + g * Og) * HWo;
                const T* wg = w->value.ptr() + static_cast<std::size_t>(g) * Og * R;
                if (dw) {
                    const T* xg = x->value.ptr() + (static_cast<std::size_t>(b) * C + g * Cg) * H * W;
                    if (!direct) im2col(xg, Cg, H, W, k, a, Ho, Wo, cols.data());
                    const T* cm = direct ? xg : cols.data();
                    T* dwg = dw + static_cast<std::size_t>(g) * Og * R;
                    for (int o = 0; o < Og; ++o)
                        for (int r = 0; r < R; ++r) dwg[o * R + r] += dot(dog + o * HWo, cm + static_cast<std::size_t>(r) * HWo, HWo);
                }
                if (dx) {
                    T* dxg = dx + (static_cast<std::size_t>(b) * C + g * Cg) * H * W;
                    T* target = direct ? dxg : dcols.data();
                    if (!direct) std::fill(dcols.begin(), dcols.end(), T(0));
                    for (int o = 0; o < Og; ++o)
                        for (int r = 0; r < R; ++r)
                            axpy(wg[o * R + r], dog + o * HWo, target + static_cast<std::size_t>(r) * HWo, HWo);
                    if (!direct) col2im(dcols.data(), Cg, H, W, k, a, Ho, Wo, dxg);
                }
            }
    });
}

template <typename T>
VarT<T> batch_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, Tensor<T>& running_mean,
                   Tensor<T>& running_var, bool training, double momentum, double eps) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4, "batch_norm expects [B,C,H,W], got " + shape_string(xs));
    const int B = xs[0], C = xs[1], HW = xs[2] * xs[3];
    require(gamma->value.size() == static_cast<std::size_t>(C) && beta->value.size() == static_cast<std::size_t>(C) &&
                running_mean.size() == static_cast<std::size_t>(C) && running_var.size() == static_cast<std::size_t>(C),
            "batch_norm parameter size does not match " + std::to_string(C) + " channels");
    const std::size_t n = static_cast<std::size_t>(B) * HW;

    std::vector<T> mean(C), invstd(C);
    if (training) {
        require(n > 1, "batch_norm in training mode needs more than one value per channel");
        for (int c = 0; c < C; ++c) {
            double s = 0, ss = 0;
            for (int b = 0; b < B; ++b) {
                const T* p = x->value.ptr() + (static_cast<std::size_t>(b) * C + c) * HW;
                for (int i = 0; i < HW; ++i) s += p[i];
            }
            const double m = s / n;
            for (int b = 0; b < B; ++b) {
                const T* p = x->value.ptr() + (static_cast<std::size_t>(b) * C + c) * HW;
                for (int i = 0; i < HW; ++i) ss += (p[i] - m) * (p[i] - m);
            }
            const double var = ss / n;
            mean[c] = static_cast<T>(m);
            invstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
            running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * m);
            running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * ss / (n - 1));
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean[c];
            invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
        }
    }

    Tensor<T> out(xs);
    Tensor<T> xhat(xs);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
            const T g = gamma->value[c], bt = beta->value[c];
            for (int i = 0; i < HW; ++i) {
                const T h = (x->value[off + i] - mean[c]) * invstd[c];
                xhat[off + i] = h;
                out[off + i] = g * h + bt;
            }
        }

    return result<T>(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat = std::move(xhat), invstd, training, B, C, HW, n](Node<T>& self) {
                         const T* dy = self.grad.ptr();
                         std::vector<T> sdy(C, T(0)), sdyx(C, T(0));
                         for (int c = 0; c < C; ++c) {
                             double a = 0, bsum = 0;
                             for (int b = 0; b < B; ++b) {
                                 const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                                 for (int i = 0; i < HW; ++i) {
                                     a += dy[off + i];
                                     bsum += dy[off + i] * xhat[off + i];
                                 }
                             }
                             sdy[c] = static_cast<T>(a);
                             sdyx[c] = static_cast<T>(bsum);
                         }
                         if (wants(gamma)) {
                             auto& g = gamma->grad_buffer();
                             for (int c = 0; c < C; ++c) g[c] += sdyx[c];
                         }
                         if (wants(beta)) {
                             auto& g = beta->grad_buffer();
                             for (int c = 0; c < C; ++c) g[c] += sdy[c];
                         }
                         if (!wants(x)) return;
                         auto& dx = x->grad_buffer();
                         const T inv_n = T(1) / static_cast<T>(n);
                         for (int b = 0; b < B; ++b)
                             for (int c = 0; c < C; ++c) {
                                 const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                                 const T k = gamma->value[c] * invstd[c];
                                 for (int i = 0; i < HW; ++i) {
                                     if (training)
                                         dx[off + i] += k * (dy[off + i] - inv_n * sdy[c] - inv_n * xhat[off + i] * sdyx[c]);
                                     else
                                         dx[off + i] += k * dy[off + i];
                                 }
                             }
                     });
}

template <typename T>
VarT<T> instance_norm(const VarT<T>& x, double eps) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4, "instance_norm expects [B,C,H,W], got " + shape_string(xs));
    const int BC = xs[0] * xs[1], HW = xs[2] * xs[3];
    Tensor<T> out(xs);
    std::vector<T> invstd(BC);
    for (int q = 0; q < BC; ++q) {
        const T* p = x->value.ptr() + static_cast<std::size_t>(q) * HW;
        double s = 0, ss = 0;
        for (int i = 0; i < HW; ++i) s += p[i];
        const double m = s / HW;
        for (int i = 0; i < HW; ++i) ss += (p[i] - m) * (p[i] - m);
        invstd[q] = static_cast<T>(1.0 / std::sqrt(ss / HW + eps));
        for (int i = 0; i < HW; ++i) out[static_cast<std::size_t>(q) * HW + i] = static_cast<T>((p[i] - m) * invstd[q]);
    }
    Tensor<T> xhat = out;
    return result<T>(std::move(out), {x}, [x, xhat = std::move(xhat), invstd, BC, HW](Node<T>& self) {
        auto& dx = x->grad_buffer();
        for (int q = 0; q < BC; ++q) {
            const std::size_t off = static_cast<std::size_t>(q) * HW;
            double a = 0, b = 0;
            for (int i = 0; i < HW; ++i) {
                a += self.grad[off + i];
                b += self.grad[off + i] * xhat[off + i];
            }
            const T ma = static_cast<T>(a / HW), mb = static_cast<T>(b / HW);
            for (int i = 0; i < HW; ++i) dx[off + i] += invstd[q] * (self.grad[off + i] - ma - xhat[off + i] * mb);
        }
    });
}

template <typename T>
VarT<T> max_pool2d(const VarT<T>& x, int kernel, int stride, int pad) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4, "max_pool2d expects [B,C,H,W], got " + shape_string(xs));
    require(pad * 2 <= kernel, "max_pool2d padding must be at most half the kernel");
    const int BC = xs[0] * xs[1], H = xs[2], W = xs[3];
    const Conv2dArgs a{stride, pad, 1, 1};
    const int Ho = conv_out_size(H, kernel, a), Wo = conv_out_size(W, kernel, a);
    require(Ho > 0 && Wo > 0, "max_pool2d output would be empty");
    Tensor<T> out({xs[0], xs[1], Ho, Wo});
    std::vector<std::int64_t> arg(out.size());
    for (int q = 0; q < BC; ++q)
        for (int oh = 0; oh < Ho; ++oh)
            for (int ow = 0; ow < Wo; ++ow) {
                T best = -std::numeric_limits<T>::infinity();
                std::int64_t bi = -1;
                for (int ki = 0; ki < kernel; ++ki) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    for (int kj = 0; kj < kernel; ++kj) {
                        const int iw = ow * stride - pad + kj;
                        if (iw < 0 || iw >= W) continue;
                        const std::int64_t idx = (static_cast<std::int64_t>(q) * H + ih) * W + iw;
                        if (bi < 0 || x->value[idx] > best) {
                            best = x->value[idx];
                            bi = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(q) * Ho + oh) * Wo + ow;
                out[o] = best;
                arg[o] = bi;
            }
    return result<T>(std::move(out), {x}, [x, arg = std::move(arg)](Node<T>& self) {
        auto& dx = x->grad_buffer();
        for (std::size_t o = 0; o < arg.size(); ++o) dx[arg[o]] += self.grad[o];
    });
}

template <typename T>
VarT<T> global_avg_pool(const VarT<T>& x) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4, "global_avg_pool expects [B,C,H,W], got " + shape_string(xs));
    const int BC = xs[0] * xs[1], HW = xs[2] * xs[3];
    Tensor<T> out({xs[0], xs[1]});
    for (int q = 0; q < BC; ++q) {
        double s = 0;
        const T* p = x->value.ptr() + static_cast<std::size_t>(q) * HW;
        for (int i = 0; i < HW; ++i) s += p[i];
        out[q] = static_cast<T>(s / HW);
    }
    return result<T>(std::move(out), {x}, [x, BC, HW](Node<T>& self) {
        auto& dx = x->grad_buffer();
        for (int q = 0; q < BC; ++q) {
            const T g = self.grad[q] / static_cast<T>(HW);
            for (int i = 0; i < HW; ++i) dx[static_cast<std::size_t>(q) * HW + i] += g;
        }
    });
}

template <typename T>
VarT<T> linear(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1],
            "linear shape mismatch: input " + shape_string(xs) + ", weight " + shape_string(ws));
    const int B = xs[0], I = xs[1], O = ws[0];
    require(!b || b->value.size() == static_cast<std::size_t>(O), "linear bias size mismatch");
    Tensor<T> out({B, O});
    for (int n = 0; n < B; ++n)
        for (int o = 0; o < O; ++o)
            out[n * O + o] = dot(x->value.ptr() + n * I, w->value.ptr() + o * I, I) + (b ? b->value[o] : T(0));
    std::vector<VarT<T>> parents{x, w};
    if (b) parents.push_back(b);
    return result<T>(std::move(out), parents, [x, w, b, B, I, O](Node<T>& self) {
        const T* dy = self.grad.ptr();
        if (wants(x)) {
            T* dx = x->grad_buffer().ptr();
            for (int n = 0; n < B; ++n)
                for (int o = 0; o < O; ++o) axpy(dy[n * O + o], w->value.ptr() + o * I, dx + n * I, I);
        }
        if (wants(w)) {
            T* dw = w->grad_buffer().ptr();
            for (int n = 0; n < B; ++n)
                for (int o = 0; o < O; ++o) axpy(dy[n * O + o], x->value.ptr() + n * I, dw + o * I, I);
        }
        if (wants(b)) {
            auto& db = b->grad_buffer();
            for (int n = 0; n < B; ++n)
                for (int o = 0; o < O; ++o) db[o] += dy[n * O + o];
        }
    });
}

template <typename T>
VarT<T> relu(const VarT<T>& x) {
    return unary<T>(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
VarT<T> gelu(const VarT<T>& x) {
    return unary<T>(
        x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
        [](T v) {
            const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
            const T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * std::numbers::pi_v<T>);
            return cdf + v * pdf;
        });
}

template <typename T>
VarT<T> silu(const VarT<T>& x) {
    return unary<T>(
        x, [](T v) { return v * sigm(v); },
        [](T v) {
            const T s = sigm(v);
            return s * (T(1) + v * (T(1) - s));
        });
}

template <typename T>
VarT<T> sigmoid(const VarT<T>& x) {
    return unary<T>(
        x, [](T v) { return sigm(v); },
        [](T v) {
            const T s = sigm(v);
            return s * (T(1) - s);
        });
}

template <typename T>
VarT<T> prelu(const VarT<T>& x, const VarT<T>& slope) {
    require(slope->value.size() == 1, "prelu slope must have one element");
    const T a = slope->value[0];
    Tensor<T> out(x->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : a * x->value[i];
    return result<T>(std::move(out), {x, slope}, [x, slope, a](Node<T>& self) {
        const auto& in = x->value.data;
        if (wants(x)) {
            auto& dx = x->grad_buffer();
            for (std::size_t i = 0; i < in.size(); ++i) dx[i] += self.grad[i] * (in[i] > T(0) ? T(1) : a);
        }
        if (wants(slope)) {
            double s = 0;
            for (std::size_t i = 0; i < in.size(); ++i)
                if (!(in[i] > T(0))) s += self.grad[i] * in[i];
            slope->grad_buffer()[0] += static_cast<T>(s);
        }
    });
}

template <typename T>
VarT<T> psilu(const VarT<T>& x, const VarT<T>& beta) {
    require(beta->value.size() == 1, "psilu beta must have one element");
    const T bt = beta->value[0];
    Tensor<T> out(x->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * sigm(bt * x->value[i]);
    return result<T>(std::move(out), {x, beta}, [x, beta, bt](Node<T>& self) {
        const auto& in = x->value.data;
        double sb = 0;
        T* dx = wants(x) ? x->grad_buffer().ptr() : nullptr;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const T v = in[i], s = sigm(bt * v), ds = s * (T(1) - s);
            if (dx) dx[i] += self.grad[i] * (s + bt * v * ds);
            sb += self.grad[i] * v * v * ds;
        }
        if (wants(beta)) beta->grad_buffer()[0] += static_cast<T>(sb);
    });
}

template <typename T>
VarT<T> pssilu(const VarT<T>& x, const VarT<T>& beta, const VarT<T>& alpha) {
    require(beta->value.size() == 1 && alpha->value.size() == 1, "pssilu parameters must have one element each");
    const T bt = beta->value[0], al = alpha->value[0];
    require(al < T(1), "pssilu alpha must stay below 1");
    const T inv = T(1) / (T(1) - al);
    Tensor<T> out(x->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * (sigm(bt * x->value[i]) - al) * inv;
    return result<T>(std::move(out), {x, beta, alpha}, [x, beta, alpha, bt, al, inv](Node<T>& self) {
        const auto& in = x->value.data;
        double sb = 0, sa = 0;
        T* dx = wants(x) ? x->grad_buffer().ptr() : nullptr;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const T v = in[i], s = sigm(bt * v), ds = s * (T(1) - s), g = self.grad[i];
            if (dx) dx[i] += g * (s + bt * v * ds - al) * inv;
            sb += g * v * v * ds * inv;
            sa += g * v * (s - T(1)) * inv * inv;
        }
        if (wants(beta)) beta->grad_buffer()[0] += static_cast<T>(sb);
        if (wants(alpha)) alpha->grad_buffer()[0] += static_cast<T>(sa);
    });
}

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    require(a->value.shape == b->value.shape,
            "add shape mismatch: " + shape_string(a->value.shape) + " vs " + shape_string(b->value.shape));
    Tensor<T> out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
        for (const auto* p : {&a, &b})
            if (wants(*p)) {
                auto& g = (*p)->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
    });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    require(a->value.shape == b->value.shape,
            "mul shape mismatch: " + shape_string(a->value.shape) + " vs " + shape_string(b->value.shape));
    Tensor<T> out(a->value.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
        if (wants(a)) {
            auto& g = a->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
        }
        if (wants(b)) {
            auto& g = b->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
        }
    });
}

template <typename T>
VarT<T> scale(const VarT<T>& a, double s) {
    const T c = static_cast<T>(s);
    return unary<T>(a, [c](T v) { return c * v; }, [c](T) { return c; });
}

template <typename T>
VarT<T> concat_channels(const std::vector<VarT<T>>& xs) {
    require(!xs.empty(), "concat of nothing");
    const auto& s0 = xs[0]->value.shape;
    require(s0.size() == 4, "concat_channels expects [B,C,H,W] inputs");
    int C = 0;
    for (const auto& x : xs) {
        const auto& s = x->value.shape;
        require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                "concat_channels shape mismatch: " + shape_string(s) + " vs " + shape_string(s0));
        C += s[1];
    }
    const int B = s0[0], HW = s0[2] * s0[3];
    Tensor<T> out({B, C, s0[2], s0[3]});
    for (int b = 0; b < B; ++b) {
        int c0 = 0;
        for (const auto& x : xs) {
            const int Ci = x->value.shape[1];
            std::copy_n(x->value.ptr() + static_cast<std::size_t>(b) * Ci * HW, static_cast<std::size_t>(Ci) * HW,
                        out.ptr() + (static_cast<std::size_t>(b) * C + c0) * HW);
            c0 += Ci;
        }
    }
    return result<T>(std::move(out), xs, [xs, B, C, HW](Node<T>& self) {
        for (int b = 0; b < B; ++b) {
            int c0 = 0;
            for (const auto& x : xs) {
                const int Ci = x->value.shape[1];
                if (wants(x)) {
                    T* dx = x->grad_buffer().ptr() + static_cast<std::size_t>(b) * Ci * HW;
                    const T* src = self.grad.ptr() + (static_cast<std::size_t>(b) * C + c0) * HW;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ci) * HW; ++i) dx[i] += src[i];
                }
                c0 += Ci;
            }
        }
    });
}

template <typename T>
VarT<T> mul_channel(const VarT<T>& x, const VarT<T>& g) {
    const auto& xs = x->value.shape;
    require(xs.size() == 4 && g->value.shape == std::vector<int>{xs[0], xs[1]},
            "mul_channel shape mismatch: " + shape_string(xs) + " gated by " + shape_string(g->value.shape));
    const int BC = xs[0] * xs[1], HW = xs[2] * xs[3];
    Tensor<T> out(xs);
    for (int q = 0; q < BC; ++q)
        for (int i = 0; i < HW; ++i) out[static_cast<std::size_t>(q) * HW + i] = x->value[static_cast<std::size_t>(q) * HW + i] * g->value[q];
    return result<T>(std::move(out), {x, g}, [x, g, BC, HW](Node<T>& self) {
        if (wants(x)) {
            auto& dx = x->grad_buffer();
            for (int q = 0; q < BC; ++q)
                for (int i = 0; i < HW; ++i) dx[static_cast<std::size_t>(q) * HW + i] += self.grad[static_cast<std::size_t>(q) * HW + i] * g->value[q];
        }
        if (wants(g)) {
            auto& dg = g->grad_buffer();
            for (int q = 0; q < BC; ++q)
                dg[q] += dot(self.grad.ptr() + static_cast<std::size_t>(q) * HW, x->value.ptr() + static_cast<std::size_t>(q) * HW, HW);
        }
    });
}

template <typename T>
VarT<T> sum(const VarT<T>& x) {
    double s = 0;
    for (T v : x->value.data) s += v;
    return result<T>(Tensor<T>({1}, {static_cast<T>(s)}), {x}, [x](Node<T>& self) {
        auto& dx = x->grad_buffer();
        for (auto& v : dx.data) v += self.grad[0];
    });
}

template <typename T>
VarT<T> reshape(const VarT<T>& x, std::vector<int> shape) {
    require(shape_numel(shape) == x->value.size(),
            "cannot reshape " + shape_string(x->value.shape) + " to " + shape_string(shape));
    Tensor<T> out(std::move(shape), x->value.data);
    return result<T>(std::move(out), {x}, [x](Node<T>& self) {
        auto& dx = x->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    });
}

template <typename T>
VarT<T> softmax_cross_entropy(const VarT<T>& logits, const std::vector<int>& labels) {
    const auto& s = logits->value.shape;
    require(s.size() == 2 && static_cast<std::size_t>(s[0]) == labels.size(),
            "cross-entropy expects [B,K] logits with B labels, got " + shape_string(s) + " and " +
                std::to_string(labels.size()) + " labels");
    const int B = s[0], K = s[1];
    Tensor<T> prob({B, K});
    double total = 0;
    for (int n = 0; n < B; ++n) {
        require(labels[n] >= 0 && labels[n] < K, "label " + std::to_string(labels[n]) + " out of range");
        const T* z = logits->value.ptr() + n * K;
        const T mx = *std::max_element(z, z + K);
        double se = 0;
        for (int k = 0; k < K; ++k) se += std::exp(static_cast<double>(z[k] - mx));
        const double lse = mx + std::log(se);
        for (int k = 0; k < K; ++k) prob[n * K + k] = static_cast<T>(std::exp(z[k] - lse));
        total += lse - z[labels[n]];
    }
    return result<T>(Tensor<T>({1}, {static_cast<T>(total / B)}), {logits},
                     [logits, labels, prob = std::move(prob), B, K](Node<T>& self) {
                         auto& dz = logits->grad_buffer();
                         const T g = self.grad[0] / static_cast<T>(B);
                         for (int n = 0; n < B; ++n)
                             for (int k = 0; k < K; ++k)
                                 dz[n * K + k] += g * (prob[n * K + k] - (k == labels[n] ? T(1) : T(0)));
                     });
}

template <typename T>
std::vector<double> cross_entropy_per_sample(const Tensor<T>& logits, const std::vector<int>& labels) {
    require(logits.ndim() == 2 && static_cast<std::size_t>(logits.dim(0)) == labels.size(), "cross-entropy shape mismatch");
    const int B = logits.dim(0), K = logits.dim(1);
    std::vector<double> out(B);
    for (int n = 0; n < B; ++n) {
        const T* z = logits.ptr() + n * K;
        const double mx = *std::max_element(z, z + K);
        double se = 0;
        for (int k = 0; k < K; ++k) se += std::exp(z[k] - mx);
        out[n] = mx + std::log(se) - z[labels[n]];
    }
    return out;
}

#define ADVARCH_OPS(T)                                                                                            \
    template VarT<T> conv2d(const VarT<T>&, const VarT<T>&, const Conv2dArgs&);                                   \
    template VarT<T> batch_norm(const VarT<T>&, const VarT<T>&, const VarT<T>&, Tensor<T>&, Tensor<T>&, bool,     \
                                double, double);                                                                  \
    template VarT<T> instance_norm(const VarT<T>&, double);                                                       \
    template VarT<T> max_pool2d(const VarT<T>&, int, int, int);                                                   \
    template VarT<T> global_avg_pool(const VarT<T>&);                                                             \
    template VarT<T> linear(const VarT<T>&, const VarT<T>&, const VarT<T>&);                                      \
    template VarT<T> relu(const VarT<T>&);                                                                        \
    template VarT<T> gelu(const VarT<T>&);                                                                        \
    template VarT<T> silu(const VarT<T>&);                                                                        \
    template VarT<T> sigmoid(const VarT<T>&);                                                                     \
    template VarT<T> prelu(const VarT<T>&, const VarT<T>&);                                                       \
    template VarT<T> psilu(const VarT<T>&, const VarT<T>&);                                                       \
    template VarT<T> pssilu(const VarT<T>&, const VarT<T>&, const VarT<T>&);                                      \
    template VarT<T> add(const VarT<T>&, const VarT<T>&);                                                         \
    template VarT<T> mul(const VarT<T>&, const VarT<T>&);                                                         \
    template VarT<T> scale(const VarT<T>&, double);                                                               \
    template VarT<T> concat_channels(const std::vector<VarT<T>>&);                                                \
    template VarT<T> mul_channel(const VarT<T>&, const VarT<T>&);                                                 \
    template VarT<T> sum(const VarT<T>&);                                                                         \
    template VarT<T> reshape(const VarT<T>&, std::vector<int>);                                                   \
    template VarT<T> softmax_cross_entropy(const VarT<T>&, const std::vector<int>&);                              \
    template std::vector<double> cross_entropy_per_sample(const Tensor<T>&, const std::vector<int>&);

ADVARCH_OPS(float)
ADVARCH_OPS(double)
#undef ADVARCH_OPS

}  // namespace ops

template struct Node<float>;
template struct Node<double>;
template VarT<float> make_leaf(Tensor<float>, bool);
template VarT<double> make_leaf(Tensor<double>, bool);
template void backward(const VarT<float>&);
template void backward(const VarT<double>&);

}  // namespace advarch
