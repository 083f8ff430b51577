#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "advarch/autograd.hpp"
#include "advarch/config.hpp"

namespace advarch {

enum class Mode { train, eval };

template <typename T>
struct NamedParam {
    std::string name;
    VarT<T> var;
};

template <typename T>
struct NamedBuffer {
    std::string name;
    Tensor<T> value;
};

template <typename T>
struct Gradients {
    std::vector<std::pair<std::string, Tensor<T>>> params;  // parameter order
    Tensor<T> input;                                        // empty unless the input was tracked
};

/// An ArchConfig realized as parameters plus a forward walk over the autograd ops.
/// Parameter names mirror the analyzer's layer paths with a `.weight`/`.bias`
/// (`.beta`/`.alpha` for parametric SiLU) suffix, in the analyzer's row order.
template <typename T>
class Network {
public:
    static Network instantiate(const ArchConfig& cfg, std::uint64_t seed);

    const ArchConfig& config() const { return cfg_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }
    void train() { mode_ = Mode::train; }
    void eval() { mode_ = Mode::eval; }

    /// Records the computation. With `track_input` the input becomes a leaf whose
    /// gradient backward() reports.
    VarT<T> forward(const Tensor<T>& x, bool track_input = false);
    /// Forward without keeping parameter gradients alive; returns logits only.
    Tensor<T> predict(const Tensor<T>& x);

    /// Runs reverse mode from `loss` and collects gradients. Throws std::logic_error
    /// when no forward pass has been recorded.
    Gradients<T> backward(const VarT<T>& loss);

    std::vector<NamedParam<T>>& parameters() { return params_; }
    const std::vector<NamedParam<T>>& parameters() const { return params_; }
    std::vector<NamedBuffer<T>>& buffers() { return buffers_; }
    const std::vector<NamedBuffer<T>>& buffers() const { return buffers_; }
    std::int64_t parameter_count() const;

    void zero_grad();
    /// Freezing parameters makes backward compute input gradients only.
    void set_parameters_trainable(bool on);

    /// Deep copy with independent parameter nodes.
    Network clone() const;
    template <typename U>
    Network<U> cast() const;

    /// Construct from explicit state (checkpoint loading). Names and shapes must match.
    static Network from_state(const ArchConfig& cfg, const std::vector<std::pair<std::string, Tensor<T>>>& params,
                              const std::vector<std::pair<std::string, Tensor<T>>>& buffers);

private:
    template <typename U>
    friend class Network;

    Network() = default;
    void add_param(std::string name, Tensor<T> value);
    void add_buffer(std::string name, Tensor<T> value);
    const VarT<T>& param(const std::string& name) const;
    Tensor<T>& buffer(const std::string& name);

    VarT<T> norm(const std::string& path, NormKind kind, const VarT<T>& x);
    VarT<T> activate(const std::string& path, ActivationKind kind, const VarT<T>& x);
    VarT<T> block(int s, int b, const VarT<T>& in);

    ArchConfig cfg_;
    Mode mode_ = Mode::train;
    std::vector<NamedParam<T>> params_;
    std::vector<NamedBuffer<T>> buffers_;
    std::unordered_map<std::string, std::size_t> param_index_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
    VarT<T> last_input_;
    bool recorded_ = false;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

}  // namespace advarch
