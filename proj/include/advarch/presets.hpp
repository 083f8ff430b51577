#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "advarch/config.hpp"

namespace advarch {

class UnknownPresetError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PresetInfo {
    std::string name;
    std::string description;
    // Published total in millions (two decimals), when one exists.
    std::optional<double> reported_mparams;
    // True when widths come from a budget fit rather than being listed explicitly.
    bool fitted = false;
};

const std::vector<PresetInfo>& preset_catalog();
std::vector<std::string> preset_names();
const PresetInfo& preset_info(std::string_view name);

/// Throws UnknownPresetError for names not in the catalog.
ArchConfig preset(std::string_view name);

/// Desk-scale ResNet: depths 1-1-1-1, widths 8-16-32-64, stem width 8.
/// Not part of the catalog; used for training and attack runs on small images.
ArchConfig tiny_config(int num_classes = 2);

}  // namespace advarch
