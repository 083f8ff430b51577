#include "advarch/grad_check.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "advarch/network.hpp"

namespace advarch {

namespace {

constexpr double kStep = 1e-6;

struct Inputs {
    std::vector<Tensor<double>> tensors;  // differentiable inputs
    std::vector<int> labels;
    Tensor<double> running_mean, running_var;
};

int randint(Rng& r, int lo, int hi) { return lo + static_cast<int>(r.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Tensor<double> uniform(Rng& r, std::vector<int> shape, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = r.uniform(lo, hi);
    return t;
}

// Values bounded away from zero so relu-style kinks sit far outside the FD step.
Tensor<double> away_from_zero(Rng& r, std::vector<int> shape) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        const double m = r.uniform(0.05, 1.0);
        v = r.uniform() < 0.5 ? -m : m;
    }
    return t;
}

// Distinct values at least 0.01 apart, in random order, so pooling windows have no ties.
Tensor<double> distinct(Rng& r, std::vector<int> shape) {
    Tensor<double> t(std::move(shape));
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[r.below(i)]);
    for (std::size_t i = 0; i < idx.size(); ++i) t[idx[i]] = -1.0 + 0.01 * static_cast<double>(i);
    return t;
}

Inputs make_inputs(const GradCheckCase& c) {
    Rng r(c.seed);
    Inputs in;
    const auto& p = c.primitive;
    const auto& s = c.shape;
    auto scalar = [&](double lo, double hi) { return uniform(r, {1}, lo, hi); };
    if (p == "conv2d") {
        in.tensors = {uniform(r, s, -1, 1),
                      uniform(r, {c.out_channels, s.at(1) / c.conv.groups, c.kernel, c.kernel}, -1, 1)};
    } else if (p == "batch_norm_train" || p == "batch_norm_eval") {
        in.tensors = {uniform(r, s, -2, 2), uniform(r, {s.at(1)}, 0.5, 1.5), uniform(r, {s.at(1)}, -0.5, 0.5)};
        in.running_mean = uniform(r, {s.at(1)}, -0.5, 0.5);
        in.running_var = uniform(r, {s.at(1)}, 0.5, 2.0);
    } else if (p == "max_pool2d") {
        in.tensors = {distinct(r, s)};
    } else if (p == "linear") {
        in.tensors = {uniform(r, s, -1, 1), uniform(r, {c.out_channels, s.at(1)}, -1, 1),
                      uniform(r, {c.out_channels}, -1, 1)};
    } else if (p == "relu") {
        in.tensors = {away_from_zero(r, s)};
    } else if (p == "prelu") {
        in.tensors = {away_from_zero(r, s), scalar(0.1, 0.9)};
    } else if (p == "psilu") {
        in.tensors = {uniform(r, s, -3, 3), scalar(0.5, 1.5)};
    } else if (p == "pssilu") {
        in.tensors = {uniform(r, s, -3, 3), scalar(0.5, 1.5), scalar(-0.3, 0.3)};
    } else if (p == "add" || p == "mul") {
        in.tensors = {uniform(r, s, -1, 1), uniform(r, s, -1, 1)};
    } else if (p == "concat") {
        auto s2 = s;
        s2.at(1) = c.out_channels;
        in.tensors = {uniform(r, s, -1, 1), uniform(r, s2, -1, 1), uniform(r, s, -1, 1)};
    } else if (p == "mul_channel") {
        in.tensors = {uniform(r, s, -1, 1), uniform(r, {s.at(0), s.at(1)}, 0.05, 0.95)};
    } else if (p == "softmax_cross_entropy") {
        in.tensors = {uniform(r, s, -2, 2)};
        for (int i = 0; i < s.at(0); ++i) in.labels.push_back(randint(r, 0, s.at(1) - 1));
    } else if (p == "instance_norm" || p == "global_avg_pool" || p == "gelu" || p == "silu" || p == "sigmoid") {
        in.tensors = {uniform(r, s, -2, 2)};
    } else {
        throw std::invalid_argument("unknown primitive '" + p + "'");
    }
    return in;
}

template <typename T>
VarT<T> apply(const GradCheckCase& c, const Inputs& in, const std::vector<VarT<T>>& v) {
    const auto& p = c.primitive;
    if (p == "conv2d") return ops::conv2d(v[0], v[1], c.conv);
    if (p == "batch_norm_train" || p == "batch_norm_eval") {
        Tensor<T> rm = in.running_mean.cast<T>(), rv = in.running_var.cast<T>();
        return ops::batch_norm(v[0], v[1], v[2], rm, rv, p == "batch_norm_train");
    }
    if (p == "instance_norm") return ops::instance_norm(v[0]);
    if (p == "max_pool2d") return ops::max_pool2d(v[0], c.kernel, c.conv.stride, c.conv.pad);
    if (p == "global_avg_pool") return ops::global_avg_pool(v[0]);
    if (p == "linear") return ops::linear(v[0], v[1], v[2]);
    if (p == "relu") return ops::relu(v[0]);
    if (p == "gelu") return ops::gelu(v[0]);
    if (p == "silu") return ops::silu(v[0]);
    if (p == "sigmoid") return ops::sigmoid(v[0]);
    if (p == "prelu") return ops::prelu(v[0], v[1]);
    if (p == "psilu") return ops::psilu(v[0], v[1]);
    if (p == "pssilu") return ops::pssilu(v[0], v[1], v[2]);
    if (p == "add") return ops::add(v[0], v[1]);
    if (p == "mul") return ops::mul(v[0], v[1]);
    if (p == "concat") return ops::concat_channels(v);
    if (p == "mul_channel") return ops::mul_channel(v[0], v[1]);
    if (p == "softmax_cross_entropy") return ops::softmax_cross_entropy(v[0], in.labels);
    throw std::invalid_argument("unknown primitive '" + p + "'");
}

// Scalar objective: <primitive output, fixed random tensor>.
template <typename T>
VarT<T> objective(const GradCheckCase& c, const Inputs& in, const std::vector<VarT<T>>& v) {
    VarT<T> out = apply<T>(c, in, v);
    Rng r(c.seed ^ 0x5bd1e995ULL);
    Tensor<T> w(out->value.shape);
    for (auto& x : w.data) x = static_cast<T>(r.uniform(-1.0, 1.0));
    return ops::sum(ops::mul(out, make_leaf(std::move(w), false)));
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0, scale = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - n[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
    }
    return scale == 0 ? 0.0 : diff / scale;
}

template <typename T>
GradCheckReport run(const GradCheckCase& c, double tolerance) {
    const Inputs in = make_inputs(c);
    GradCheckReport rep{c.primitive, c.shape, dtype_of<T>(), 0.0, tolerance, 0, false};

    std::vector<VarT<T>> leaves;
    for (const auto& t : in.tensors) leaves.push_back(make_leaf(t.cast<T>(), true));
    backward(objective<T>(c, in, leaves));

    std::vector<VarT<double>> probe;
    for (const auto& t : in.tensors) probe.push_back(make_leaf(t, false));
    auto eval = [&] { return objective<double>(c, in, probe)->value[0]; };

    for (std::size_t k = 0; k < probe.size(); ++k) {
        const auto& g = leaves[k]->grad;
        std::vector<double> analytic(probe[k]->value.size(), 0.0), numeric(analytic.size());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            if (!g.data.empty()) analytic[i] = g[i];
            double& x = probe[k]->value[i];
            const double x0 = x;
            x = x0 + kStep;
            const double up = eval();
            x = x0 - kStep;
            const double down = eval();
            x = x0;
            numeric[i] = (up - down) / (2 * kStep);
        }
        rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic, numeric));
        rep.checked += analytic.size();
    }
    rep.pass = std::isfinite(rep.max_rel_error) && rep.max_rel_error < tolerance;
    return rep;
}

}  // namespace

const std::vector<std::string>& grad_check_primitives() {
    static const std::vector<std::string> names{
        "conv2d", "batch_norm_train", "batch_norm_eval", "instance_norm", "max_pool2d", "global_avg_pool", "linear",
        "relu",   "gelu",             "silu",            "sigmoid",       "prelu",      "psilu",           "pssilu",
        "add",    "mul",              "concat",          "mul_channel",   "softmax_cross_entropy"};
    return names;
}

std::vector<GradCheckCase> random_grad_cases(const std::string& primitive, int count, std::uint64_t seed) {
    const auto& known = grad_check_primitives();
    if (std::find(known.begin(), known.end(), primitive) == known.end())
        throw std::invalid_argument("unknown primitive '" + primitive + "'");
    Rng r(seed);
    std::vector<GradCheckCase> out;
    for (int n = 0; n < count; ++n) {
        GradCheckCase c;
        c.primitive = primitive;
        c.seed = r.next_u64();
        const int B = randint(r, 2, 3);
        if (primitive == "conv2d") {
            const int g = randint(r, 1, 2);
            c.conv.groups = g;
            c.kernel = std::array{1, 3, 5}[r.below(3)];
            c.conv.stride = randint(r, 1, 2);
            c.conv.dilation = c.kernel > 1 ? randint(r, 1, 2) : 1;
            c.conv.pad = randint(r, 0, c.conv.dilation * (c.kernel - 1) / 2);
            c.out_channels = g * randint(r, 1, 3);
            const int span = c.conv.dilation * (c.kernel - 1) + 1;
            c.shape = {B, g * randint(r, 1, 3), randint(r, span, span + 5), randint(r, span, span + 5)};
        } else if (primitive == "max_pool2d") {
            if (r.uniform() < 0.5) {
                c.kernel = 3, c.conv.stride = 2, c.conv.pad = 1;
            } else {
                c.kernel = 2, c.conv.stride = 2, c.conv.pad = 0;
            }
            c.shape = {B, randint(r, 1, 3), randint(r, 2, 8), randint(r, 2, 8)};
        } else if (primitive == "linear") {
            c.out_channels = randint(r, 1, 6);
            c.shape = {B, randint(r, 1, 8)};
        } else if (primitive == "softmax_cross_entropy") {
            c.shape = {randint(r, 1, 6), randint(r, 2, 6)};
        } else {
            c.out_channels = randint(r, 1, 3);
            c.shape = {B, randint(r, 1, 4), randint(r, 2, 6), randint(r, 2, 6)};
        }
        out.push_back(std::move(c));
    }
    return out;
}

GradCheckReport grad_check(const GradCheckCase& c, DType dtype, double tolerance) {
    return dtype == DType::f64 ? run<double>(c, tolerance) : run<float>(c, tolerance);
}

GradCheckReport grad_check_network(const ArchConfig& cfg, const std::vector<int>& input_shape, std::uint64_t seed,
                                   double tolerance, bool train_mode, std::size_t probes) {
    auto net = NetworkD::instantiate(cfg, seed);
    net.set_mode(train_mode ? Mode::train : Mode::eval);
    net.set_parameters_trainable(false);

    Rng r(derive_seed(seed, SeedPurpose::data));
    Tensor<double> x = uniform(r, input_shape, 0.0, 1.0);
    std::vector<int> labels;
    for (int i = 0; i < input_shape.at(0); ++i) labels.push_back(randint(r, 0, cfg.num_classes - 1));

    const Tensor<double> analytic = net.backward(ops::softmax_cross_entropy(net.forward(x, true), labels)).input;

    auto loss = [&](const Tensor<double>& v) {
        const auto ce = ops::cross_entropy_per_sample(net.predict(v), labels);
        return std::accumulate(ce.begin(), ce.end(), 0.0) / static_cast<double>(ce.size());
    };

    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (probes > 0 && probes < coords.size()) {
        for (std::size_t i = 0; i < probes; ++i) std::swap(coords[i], coords[i + r.below(coords.size() - i)]);
        coords.resize(probes);
    }

    std::vector<double> a, n;
    for (std::size_t i : coords) {
        const double x0 = x[i];
        x[i] = x0 + kStep;
        const double up = loss(x);
        x[i] = x0 - kStep;
        const double down = loss(x);
        x[i] = x0;
        a.push_back(analytic[i]);
        n.push_back((up - down) / (2 * kStep));
    }
    GradCheckReport rep{"network:" + cfg.name, input_shape, DType::f64, rel_error(a, n), tolerance, a.size(), false};
    rep.pass = std::isfinite(rep.max_rel_error) && rep.max_rel_error < tolerance;
    return rep;
}

}  // namespace advarch
