#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advarch/config.hpp"

namespace advarch {

inline constexpr int kGuidelineCount = 18;

enum class FindingStatus { satisfied, violated, advisory, not_applicable };

std::string_view to_string(FindingStatus s);

struct GuidelineEntry {
    int id;
    std::string_view title;
    std::string_view rule;  // the catalog sentence, also listed in docs/guidelines.md
};

/// The 18 design rules, ordered by id.
const std::vector<GuidelineEntry>& guideline_catalog();

struct GuidelineFinding {
    int id = 0;
    FindingStatus status = FindingStatus::not_applicable;
    std::string message;
    std::string citation;

    bool operator==(const GuidelineFinding&) const = default;
};

struct GuidelineParams {
    int c = 3;
};

struct GuidelineReport {
    std::string config_name;
    std::vector<GuidelineFinding> findings;  // always 18, ordered by id

    bool operator==(const GuidelineReport&) const = default;
};

/// d1 < d2 < d3 > c*d4 for four-stage depth vectors; std::nullopt for other lengths.
std::optional<bool> check_depth_rule(const std::vector<int>& depths, const GuidelineParams& params = {});

GuidelineReport evaluate_guidelines(const ArchConfig& cfg, const GuidelineParams& params = {});

struct FieldChange {
    std::string path;  // JSON pointer into the canonical config document
    std::string before;
    std::string after;
};

struct StatusDelta {
    int id;
    FindingStatus before;
    FindingStatus after;
};

struct ConfigDiff {
    std::vector<FieldChange> fields;
    std::vector<StatusDelta> guidelines;

    bool empty() const { return fields.empty() && guidelines.empty(); }
};

/// Structural diff of the canonical documents (the name field is ignored) plus
/// findings whose status changed between a and b.
ConfigDiff compare_configs(const ArchConfig& a, const ArchConfig& b, const GuidelineParams& params = {});

}  // namespace advarch
