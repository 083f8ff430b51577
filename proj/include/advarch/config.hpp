#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace advarch {

/// Raised for malformed documents and for configurations that break a
/// structural rule. `path()` names the offending field ("stages[1].groups").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

enum class StemKind { conv_maxpool, conv_stage_downsample, conv_nopool, patchify };
enum class ActivationKind { relu, gelu, silu, prelu, psilu, pssilu };
enum class NormKind { batch_norm, instance_norm };
enum class DenseMode { sum, concat };
enum class SeBase { block_input, inner };
enum class Pooling { global_average };

std::string_view to_string(StemKind k);
std::string_view to_string(ActivationKind k);
std::string_view to_string(NormKind k);
std::string_view to_string(DenseMode k);
std::string_view to_string(SeBase k);
std::string_view to_string(Pooling k);

StemKind parse_stem_kind(std::string_view s);
ActivationKind parse_activation_kind(std::string_view s);
NormKind parse_norm_kind(std::string_view s);
DenseMode parse_dense_mode(std::string_view s);
SeBase parse_se_base(std::string_view s);
Pooling parse_pooling(std::string_view s);

/// Learnable scalars carried by one activation layer of this kind.
int activation_scalar_count(ActivationKind k);
bool is_parametric(ActivationKind k);

struct StemConfig {
    StemKind kind = StemKind::conv_maxpool;
    int width = 64;
    int kernel = 7;
    int patch_stride = 4;  // patchify only

    bool operator==(const StemConfig&) const = default;
};

struct SEConfig {
    bool enabled = false;
    double ratio = 0.25;
    SeBase base = SeBase::block_input;
    ActivationKind activation = ActivationKind::relu;

    bool operator==(const SEConfig&) const = default;
};

struct ActivationSpec {
    ActivationKind kind = ActivationKind::relu;
    std::array<bool, 3> pattern{true, true, true};

    bool operator==(const ActivationSpec&) const = default;
};

struct NormSpec {
    NormKind kind = NormKind::batch_norm;
    std::array<bool, 3> pattern{true, true, true};

    bool operator==(const NormSpec&) const = default;
};

struct StageConfig {
    int depth = 1;
    int width = 256;
    double bottleneck_multiplier = 0.25;
    int groups = 1;
    int kernel = 3;
    int dilation = 1;
    int stride = 2;
    int dense_ratio = 1;
    DenseMode dense_mode = DenseMode::sum;
    SEConfig se;
    ActivationSpec activation;
    NormSpec norm;

    /// round(width * bottleneck_multiplier), half away from zero.
    int inner_width() const;

    bool operator==(const StageConfig&) const = default;
};

struct HeadConfig {
    Pooling pooling = Pooling::global_average;
    bool bias = true;

    bool operator==(const HeadConfig&) const = default;
};

struct ArchConfig {
    std::string name = "resnet50";
    int num_classes = 1000;
    int input_channels = 3;
    StemConfig stem;
    std::vector<StageConfig> stages;
    HeadConfig head;

    bool operator==(const ArchConfig&) const = default;

    std::vector<int> depths() const;
    std::vector<int> widths() const;
};

/// Per-stage derived widths plus expansion ratios between consecutive stages.
struct DerivedWidths {
    struct Stage {
        int inner_width;    // w_b
        double group_width; // w_g = w_b / g
        int recovered_groups;
        double bottleneck;  // w_b / w
    };
    std::vector<Stage> stages;
    std::vector<double> expansion;  // size n-1

    bool operator==(const DerivedWidths&) const = default;
};

inline constexpr int kMinStages = 3;
inline constexpr int kMaxStages = 6;

/// Integer rounding used throughout width arithmetic: nearest, ties away from zero.
int round_half_away(double v);

/// Throws ConfigError naming the first violated rule.
void validate(const ArchConfig& cfg);

DerivedWidths derive_quantities(const ArchConfig& cfg);

/// Documented defaults for stage i of an n-stage network under `stem`.
StageConfig default_stage(int index, StemKind stem);

/// Output channels of the stem (before any stage).
int stem_output_channels(const ArchConfig& cfg);

/// SE hidden width for a block with the given input and inner widths.
int se_hidden_width(const SEConfig& se, int block_in, int inner);

/// Input channel count seen by block `b` of stage `s` (depends on dense concat).
int block_input_channels(const ArchConfig& cfg, int s, int b);

/// Stride applied by block `b` of stage `s`.
inline int block_stride(const StageConfig& st, int b) { return b == 0 ? st.stride : 1; }

/// True when the residual path needs a 1x1 projection.
bool block_has_projection(int in_ch, int out_ch, int stride);

/// Parse a JSON config document. Unspecified fields take the ResNet-50 defaults.
ArchConfig parse_config(std::string_view text);

/// Canonical JSON text; parse_config(emit_config(c)) == c.
std::string emit_config(const ArchConfig& cfg);

ArchConfig load_config_file(const std::string& path);
void save_config_file(const ArchConfig& cfg, const std::string& path);

}  // namespace advarch
