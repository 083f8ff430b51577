#include "advarch/network.hpp"

#include <cmath>
#include <stdexcept>

#include "advarch/analyzer.hpp"

namespace advarch {

template <typename T>
void Network<T>::add_param(std::string name, Tensor<T> value) {
    param_index_.emplace(name, params_.size());
    params_.push_back({std::move(name), make_leaf(std::move(value), true)});
}

template <typename T>
void Network<T>::add_buffer(std::string name, Tensor<T> value) {
    buffer_index_.emplace(name, buffers_.size());
    buffers_.push_back({std::move(name), std::move(value)});
}

template <typename T>
const VarT<T>& Network<T>::param(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) throw std::logic_error("network has no parameter " + name);
    return params_[it->second].var;
}

template <typename T>
Tensor<T>& Network<T>::buffer(const std::string& name) {
    auto it = buffer_index_.find(name);
    if (it == buffer_index_.end()) throw std::logic_error("network has no buffer " + name);
    return buffers_[it->second].value;
}

template <typename T>
Network<T> Network<T>::instantiate(const ArchConfig& cfg, std::uint64_t seed) {
    Network net;
    net.cfg_ = cfg;
    Rng rng(derive_seed(seed, SeedPurpose::init));
    auto normal = [&rng](std::vector<int> shape, double stddev) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<T>(stddev * rng.normal());
        return t;
    };

    // The analyzer's walk fixes names and order; forward() consumes them by name.
    for (const auto& r : enumerate_layers(cfg, std::nullopt)) {
        const std::string& p = r.path;
        if (r.kind == "conv") {
            const int fan_out = r.kernel * r.kernel * r.out_channels / r.groups;
            net.add_param(p + ".weight", normal({r.out_channels, r.in_channels / r.groups, r.kernel, r.kernel},
                                                std::sqrt(2.0 / fan_out)));
        } else if (r.kind == "batch_norm") {
            net.add_param(p + ".weight", Tensor<T>({r.out_channels}, T(1)));
            net.add_param(p + ".bias", Tensor<T>({r.out_channels}, T(0)));
            net.add_buffer(p + ".running_mean", Tensor<T>({r.out_channels}, T(0)));
            net.add_buffer(p + ".running_var", Tensor<T>({r.out_channels}, T(1)));
        } else if (r.kind == "linear") {
            const bool head = p == "head.fc";
            net.add_param(p + ".weight", normal({r.out_channels, r.in_channels},
                                                head ? 0.01 : std::sqrt(2.0 / r.out_channels)));
            if (!head || cfg.head.bias) net.add_param(p + ".bias", Tensor<T>({r.out_channels}, T(0)));
        } else if (r.kind == "activation:prelu") {
            net.add_param(p + ".weight", Tensor<T>({1}, T(1)));
        } else if (r.kind == "activation:psilu") {
            net.add_param(p + ".beta", Tensor<T>({1}, T(1)));
        } else if (r.kind == "activation:pssilu") {
            net.add_param(p + ".beta", Tensor<T>({1}, T(1)));
            net.add_param(p + ".alpha", Tensor<T>({1}, T(0)));
        }
    }
    return net;
}

template <typename T>
Network<T> Network<T>::from_state(const ArchConfig& cfg, const std::vector<std::pair<std::string, Tensor<T>>>& params,
                                  const std::vector<std::pair<std::string, Tensor<T>>>& buffers) {
    Network net = instantiate(cfg, 0);
    auto place = [](const std::string& expected, Tensor<T>& target, const std::pair<std::string, Tensor<T>>& src) {
        if (src.first != expected) throw std::invalid_argument("expected " + expected + ", found " + src.first);
        if (target.shape != src.second.shape)
            throw std::invalid_argument("shape of " + src.first + " is " + shape_string(src.second.shape) +
                                        ", expected " + shape_string(target.shape));
        target = src.second;
    };
    if (params.size() != net.params_.size() || buffers.size() != net.buffers_.size())
        throw std::invalid_argument("state has " + std::to_string(params.size()) + " parameters and " +
                                    std::to_string(buffers.size()) + " buffers, expected " +
                                    std::to_string(net.params_.size()) + " and " + std::to_string(net.buffers_.size()));
    for (std::size_t i = 0; i < params.size(); ++i) place(net.params_[i].name, net.params_[i].var->value, params[i]);
    for (std::size_t i = 0; i < buffers.size(); ++i) place(net.buffers_[i].name, net.buffers_[i].value, buffers[i]);
    return net;
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += static_cast<std::int64_t>(p.var->value.size());
    return n;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto& p : params_) p.var->zero_grad();
}

template <typename T>
void Network<T>::set_parameters_trainable(bool on) {
    for (auto& p : params_) p.var->requires_grad = on;
}

template <typename T>
Network<T> Network<T>::clone() const {
    return cast<T>();
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    Network<U> out;
    out.cfg_ = cfg_;
    out.mode_ = mode_;
    for (const auto& p : params_) {
        out.add_param(p.name, p.var->value.template cast<U>());
        out.params_.back().var->requires_grad = p.var->requires_grad;
    }
    for (const auto& b : buffers_) out.add_buffer(b.name, b.value.template cast<U>());
    return out;
}

template <typename T>
VarT<T> Network<T>::norm(const std::string& path, NormKind kind, const VarT<T>& x) {
    if (kind == NormKind::instance_norm) return ops::instance_norm(x);
    return ops::batch_norm(x, param(path + ".weight"), param(path + ".bias"), buffer(path + ".running_mean"),
                           buffer(path + ".running_var"), mode_ == Mode::train);
}

template <typename T>
VarT<T> Network<T>::activate(const std::string& path, ActivationKind kind, const VarT<T>& x) {
    switch (kind) {
        case ActivationKind::relu: return ops::relu(x);
        case ActivationKind::gelu: return ops::gelu(x);
        case ActivationKind::silu: return ops::silu(x);
        case ActivationKind::prelu: return ops::prelu(x, param(path + ".weight"));
        case ActivationKind::psilu: return ops::psilu(x, param(path + ".beta"));
        case ActivationKind::pssilu: return ops::pssilu(x, param(path + ".beta"), param(path + ".alpha"));
    }
    throw std::logic_error("unhandled activation");
}

template <typename T>
VarT<T> Network<T>::block(int s, int b, const VarT<T>& in) {
    const auto& st = cfg_.stages[s];
    const std::string p = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".";
    const int stride = block_stride(st, b);

    VarT<T> h = ops::conv2d(in, param(p + "conv1.weight"), {});
    if (st.norm.pattern[0]) h = norm(p + "norm1", st.norm.kind, h);
    if (st.activation.pattern[0]) h = activate(p + "act1", st.activation.kind, h);

    const ops::Conv2dArgs a2{stride, st.dilation * (st.kernel - 1) / 2, st.dilation, st.groups};
    h = ops::conv2d(h, param(p + "conv2.weight"), a2);
    if (st.norm.pattern[1]) h = norm(p + "norm2", st.norm.kind, h);
    if (st.activation.pattern[1]) h = activate(p + "act2", st.activation.kind, h);

    if (st.se.enabled) {
        VarT<T> g = ops::global_avg_pool(h);
        g = ops::linear(g, param(p + "se.reduce.weight"), param(p + "se.reduce.bias"));
        g = activate(p + "se.act", st.se.activation, g);
        g = ops::linear(g, param(p + "se.expand.weight"), param(p + "se.expand.bias"));
        h = ops::mul_channel(h, ops::sigmoid(g));
    }

    h = ops::conv2d(h, param(p + "conv3.weight"), {});
    if (st.norm.pattern[2]) h = norm(p + "norm3", st.norm.kind, h);

    VarT<T> shortcut = in;
    if (block_has_projection(in->value.dim(1), st.width, stride)) {
        shortcut = ops::conv2d(in, param(p + "shortcut.conv.weight"), {stride, 0, 1, 1});
        shortcut = norm(p + "shortcut.norm", NormKind::batch_norm, shortcut);
    }
    h = ops::add(h, shortcut);
    if (st.activation.pattern[2]) h = activate(p + "act3", st.activation.kind, h);
    return h;
}

template <typename T>
VarT<T> Network<T>::forward(const Tensor<T>& x, bool track_input) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.input_channels)
        throw ShapeError("network expects [B," + std::to_string(cfg_.input_channels) + ",H,W] input, got " +
                         shape_string(x.shape));
    const int f = downsampling_factor(cfg_);
    if (x.dim(2) % f != 0 || x.dim(3) % f != 0)
        throw ShapeError("input " + shape_string(x.shape) + " not divisible by downsampling factor " + std::to_string(f));

    VarT<T> in = make_leaf(x, track_input);
    const auto& stem = cfg_.stem;
    const bool patch = stem.kind == StemKind::patchify;
    VarT<T> h = ops::conv2d(in, param("stem.conv.weight"),
                            {patch ? stem.patch_stride : 2, patch ? 0 : (stem.kernel - 1) / 2, 1, 1});
    h = norm("stem.norm", cfg_.stages.front().norm.kind, h);
    h = activate("stem.act", cfg_.stages.front().activation.kind, h);
    if (stem.kind == StemKind::conv_maxpool) h = ops::max_pool2d(h, 3, 2, 1);

    for (int s = 0; s < static_cast<int>(cfg_.stages.size()); ++s) {
        const auto& st = cfg_.stages[s];
        std::vector<VarT<T>> outs;
        for (int b = 0; b < st.depth; ++b) {
            VarT<T> input = h;
            if (b > 0) {
                // Dense connectivity: the block sees the last min(b, ratio) block outputs.
                const int first = std::max(0, b - st.dense_ratio);
                std::vector<VarT<T>> src(outs.begin() + first, outs.end());
                if (st.dense_mode == DenseMode::concat) {
                    input = src.size() == 1 ? src[0] : ops::concat_channels(src);
                } else {
                    input = src[0];
                    for (std::size_t i = 1; i < src.size(); ++i) input = ops::add(input, src[i]);
                }
            }
            outs.push_back(block(s, b, input));
        }
        h = outs.back();
    }

    h = ops::global_avg_pool(h);
    VarT<T> logits = ops::linear(h, param("head.fc.weight"), cfg_.head.bias ? param("head.fc.bias") : VarT<T>());
    last_input_ = in;
    recorded_ = true;
    return logits;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& x) {
    std::vector<bool> saved;
    saved.reserve(params_.size());
    for (auto& p : params_) {
        saved.push_back(p.var->requires_grad);
        p.var->requires_grad = false;
    }
    const bool recorded = recorded_;
    VarT<T> keep = last_input_;
    Tensor<T> out;
    try {
        out = forward(x, false)->value;
    } catch (...) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var->requires_grad = saved[i];
        throw;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var->requires_grad = saved[i];
    recorded_ = recorded;
    last_input_ = keep;
    return out;
}

template <typename T>
Gradients<T> Network<T>::backward(const VarT<T>& loss) {
    if (!recorded_) throw std::logic_error("backward called before forward");
    advarch::backward(loss);
    Gradients<T> g;
    for (const auto& p : params_) {
        if (!p.var->requires_grad) continue;  // frozen parameters report nothing
        Tensor<T> grad = p.var->grad.data.empty() ? Tensor<T>(p.var->value.shape) : p.var->grad;
        g.params.emplace_back(p.name, std::move(grad));
    }
    if (last_input_ && last_input_->requires_grad)
        g.input = last_input_->grad.data.empty() ? Tensor<T>(last_input_->value.shape) : last_input_->grad;
    return g;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;

}  // namespace advarch
