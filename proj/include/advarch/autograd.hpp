#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "advarch/tensor.hpp"

namespace advarch {

/// One value in a recorded computation. Leaves (parameters, inputs) have no
/// backward function; interior nodes push their gradient into their parents.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& grad_buffer();
    void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using VarT = std::shared_ptr<Node<T>>;

template <typename T>
VarT<T> make_leaf(Tensor<T> value, bool requires_grad);

/// Reverse-mode sweep from a single-element root. Gradients accumulate into
/// every reachable node that requires them.
template <typename T>
void backward(const VarT<T>& root);

namespace ops {

struct Conv2dArgs {
    int stride = 1;
    int pad = 0;
    int dilation = 1;
    int groups = 1;
};

inline int conv_out_size(int in, int kernel, const Conv2dArgs& a) {
    return (in + 2 * a.pad - a.dilation * (kernel - 1) - 1) / a.stride + 1;
}

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;

// x: [B,C,H,W], w: [O, C/groups, k, k]; no bias.
template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const Conv2dArgs& a);

// Per-channel normalization over (B,H,W). In training mode uses batch statistics
// (biased variance) and updates the running buffers; in eval mode uses the buffers.
template <typename T>
VarT<T> batch_norm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, Tensor<T>& running_mean,
                   Tensor<T>& running_var, bool training, double momentum = kNormMomentum, double eps = kNormEps);

// Per-(sample, channel) normalization over (H,W), no affine parameters.
template <typename T>
VarT<T> instance_norm(const VarT<T>& x, double eps = kNormEps);

// Ties route the gradient to the first maximal element in scan order.
template <typename T>
VarT<T> max_pool2d(const VarT<T>& x, int kernel, int stride, int pad);

// [B,C,H,W] -> [B,C]
template <typename T>
VarT<T> global_avg_pool(const VarT<T>& x);

// x: [B,I], w: [O,I], b: [O] or null.
template <typename T>
VarT<T> linear(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b);

template <typename T>
VarT<T> relu(const VarT<T>& x);  // gradient at exactly 0 is 0
template <typename T>
VarT<T> gelu(const VarT<T>& x);  // erf form
template <typename T>
VarT<T> silu(const VarT<T>& x);
template <typename T>
VarT<T> sigmoid(const VarT<T>& x);
// slope: shape [1]
template <typename T>
VarT<T> prelu(const VarT<T>& x, const VarT<T>& slope);
// x * sigmoid(beta x); beta: shape [1]
template <typename T>
VarT<T> psilu(const VarT<T>& x, const VarT<T>& beta);
// x * (sigmoid(beta x) - alpha) / (1 - alpha); beta, alpha: shape [1]
template <typename T>
VarT<T> pssilu(const VarT<T>& x, const VarT<T>& beta, const VarT<T>& alpha);

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b);
template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b);
template <typename T>
VarT<T> scale(const VarT<T>& a, double s);
// Concatenate [B,Ci,H,W] tensors along channels.
template <typename T>
VarT<T> concat_channels(const std::vector<VarT<T>>& xs);
// x: [B,C,H,W] times per-channel gate g: [B,C]
template <typename T>
VarT<T> mul_channel(const VarT<T>& x, const VarT<T>& g);
template <typename T>
VarT<T> sum(const VarT<T>& x);
template <typename T>
VarT<T> reshape(const VarT<T>& x, std::vector<int> shape);

// Mean softmax cross-entropy over the batch. logits: [B,K].
template <typename T>
VarT<T> softmax_cross_entropy(const VarT<T>& logits, const std::vector<int>& labels);

// Per-sample cross-entropy values (no graph).
template <typename T>
std::vector<double> cross_entropy_per_sample(const Tensor<T>& logits, const std::vector<int>& labels);

}  // namespace ops
}  // namespace advarch
