#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advarch/config.hpp"

namespace advarch {

enum class FitMode { scale_all_widths, base_width_with_fixed_e };

std::string_view to_string(FitMode m);
FitMode parse_fit_mode(std::string_view s);

struct FitConstraints {
    std::int64_t budget = 0;
    FitMode free = FitMode::scale_all_widths;
    int rounding = 8;
    double tolerance = 0.005;
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitResult {
    ArchConfig config;
    std::int64_t params = 0;
    double scale = 1.0;  // a scale factor that produces config.widths()
};

inline constexpr double kMinScale = 0.05;
inline constexpr double kMaxScale = 20.0;

/// Valid width nearest to `target` on stage `st`'s lattice: a positive multiple of
/// `rounding` whose inner width is divisible by the stage's groups.
int snap_width(const StageConfig& st, double target, int rounding);

/// Widths the fit would assign at scale `s` for this template and mode.
std::vector<int> widths_at_scale(const ArchConfig& tmpl, FitMode mode, double s, int rounding);

/// Width-only fit to a parameter budget. Depths and every other knob are kept.
FitResult fit_width_detailed(const ArchConfig& tmpl, const FitConstraints& c);
ArchConfig fit_width(const ArchConfig& tmpl, const FitConstraints& c);

/// Multiplies each depth by `factor`, rounding half away from zero, minimum 1.
std::vector<int> scale_depth(const std::vector<int>& depths, double factor);

/// Replaces stage depths; adding stages copies the last stage, removing truncates.
ArchConfig with_depths(ArchConfig cfg, const std::vector<int>& depths);

struct SweepRow {
    std::vector<int> depths;
    std::optional<ArchConfig> config;
    std::int64_t params = 0;
    std::string error;  // non-empty for failed rows
};

/// One width fit per depth vector. Rows come back in grid order regardless of `jobs`.
std::vector<SweepRow> sweep_depth_width(const ArchConfig& base, const std::vector<std::vector<int>>& depth_grid,
                                        const FitConstraints& c, int jobs = 1);

}  // namespace advarch
