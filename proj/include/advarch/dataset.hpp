#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advarch/tensor.hpp"

namespace advarch {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Images in [0,1] with integer labels.
struct Dataset {
    Tensor<float> images;  // [N,C,H,W]
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    int channels() const { return images.dim(1); }
    int height() const { return images.dim(2); }
    int width() const { return images.dim(3); }

    /// Throws DatasetError if shapes, label range or pixel range are off.
    void validate() const;
    Tensor<float> gather_images(const std::vector<std::size_t>& idx) const;
    std::vector<int> gather_labels(const std::vector<std::size_t>& idx) const;
};

/// Class templates are a grid of square blocks at 0.5 +/- margin/2, one sign pattern
/// per class, on the first `active_blocks` blocks in row-major order (the rest stay
/// at 0.5). A class-signed brightness offset of `shortcut` on every pixel adds a
/// feature that is easy to learn but flips under any eps above it. Samples add
/// i.i.d. Gaussian noise and clamp to [0,1].
struct SynthSpec {
    int class_count = 2;
    int samples_per_class = 100;
    int resolution = 32;
    int channels = 3;
    int grid = 4;  // blocks per side; must divide the resolution
    int active_blocks = 0;  // 0 means every block
    double margin = 0.25;
    double noise_std = 0.1;
    double shortcut = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Two-class 32x32 benchmark: 2 signed blocks of margin 0.1 (robust but noisy) plus
/// a 0.014 brightness shortcut that a 4/255 attacker can flip. 200 samples per class.
SynthSpec benchmark_synth_spec(std::uint64_t seed);

/// Clean per-class templates [C,H,W], in class order.
std::vector<Tensor<double>> synth_templates(const SynthSpec& spec);

/// Smallest pairwise l-inf distance between class templates, from the sign
/// assignments rather than from the pixels.
double synth_margin(const SynthSpec& spec);

/// Samples are interleaved by class (0,1,..,K-1,0,1,..). Different `stream`
/// values draw fresh noise around the same templates (train vs holdout).
Dataset synth_generate(const SynthSpec& spec, std::uint64_t stream = 0);

/// IDX pair: images u8 [N,H,W] (magic 0x803), labels u8 [N] (magic 0x801).
/// Pixels become value/255 in a single channel.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

}  // namespace advarch
