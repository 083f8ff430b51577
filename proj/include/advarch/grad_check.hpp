#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advarch/autograd.hpp"
#include "advarch/config.hpp"

namespace advarch {

/// One primitive invocation to differentiate. `shape` is the main input shape;
/// the remaining fields only matter for the primitives that read them.
struct GradCheckCase {
    std::string primitive;
    std::vector<int> shape;
    int kernel = 3;
    int out_channels = 4;
    ops::Conv2dArgs conv;
    std::uint64_t seed = 1;
};

struct GradCheckReport {
    std::string primitive;
    std::vector<int> shape;
    DType dtype = DType::f64;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;  // gradient entries compared
    bool pass = false;
};

/// conv2d, batch_norm_train, batch_norm_eval, instance_norm, max_pool2d, global_avg_pool,
/// linear, relu, gelu, silu, sigmoid, prelu, psilu, pssilu, add, mul, concat, mul_channel,
/// softmax_cross_entropy
const std::vector<std::string>& grad_check_primitives();

/// `count` random valid cases for one primitive, reproducible from `seed`.
std::vector<GradCheckCase> random_grad_cases(const std::string& primitive, int count, std::uint64_t seed);

/// Compares analytic gradients (in `dtype`) with f64 central differences of a random
/// projection of the output, for every differentiable input. The error is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|) over each input.
/// Inputs to relu/prelu/max-pool are drawn away from their kinks.
GradCheckReport grad_check(const GradCheckCase& c, DType dtype, double tolerance);

/// End-to-end input gradient of the mean cross-entropy through an instantiated
/// f64 network, on `probes` randomly chosen input coordinates (all when 0).
GradCheckReport grad_check_network(const ArchConfig& cfg, const std::vector<int>& input_shape, std::uint64_t seed,
                                   double tolerance, bool train_mode = false, std::size_t probes = 0);

}  // namespace advarch
