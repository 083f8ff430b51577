#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advarch/config.hpp"

namespace advarch {

/// One layer of the realized network, in canonical forward order.
struct LayerRow {
    std::string path;
    std::string kind;  // conv, linear, batch_norm, instance_norm, activation, max_pool, avg_pool
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int groups = 1;
    int dilation = 1;
    int out_h = 0;  // 0 when no resolution was given
    int out_w = 0;
    std::int64_t params = 0;
    int tensors = 0;  // learnable parameter tensors owned by the layer
    std::int64_t macs = 0;
};

struct ParamRow {
    std::string path;
    std::string kind;
    int in_channels;
    int out_channels;
    std::int64_t params;
};

struct ParamReport {
    std::vector<ParamRow> rows;
    std::int64_t total = 0;
    int tensor_count = 0;
};

struct MacRow {
    std::string path;
    int out_h;
    int out_w;
    std::int64_t macs;
};

struct MacReport {
    int resolution = 0;
    std::vector<MacRow> rows;
    std::int64_t total = 0;
    double total_gmacs = 0.0;
};

struct LayerTable {
    int resolution = 0;
    std::vector<LayerRow> rows;
    std::int64_t total_params = 0;
    std::int64_t total_macs = 0;
    int tensor_count = 0;
};

class ResolutionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Product of all stride-2 (or patch) reductions between input and head.
int downsampling_factor(const ArchConfig& cfg);

ParamReport count_params(const ArchConfig& cfg);
MacReport count_macs(const ArchConfig& cfg, int resolution);
LayerTable layer_table(const ArchConfig& cfg, int resolution);

/// Layer walk shared by the three reports. With no resolution, spatial sizes and MACs stay 0.
std::vector<LayerRow> enumerate_layers(const ArchConfig& cfg, std::optional<int> resolution);

/// Per-stage parameter subtotal (stem and head excluded).
std::vector<std::int64_t> stage_param_totals(const ArchConfig& cfg);

}  // namespace advarch
