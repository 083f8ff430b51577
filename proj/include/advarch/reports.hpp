#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advarch/adversarial.hpp"
#include "advarch/analyzer.hpp"
#include "advarch/budget_fit.hpp"
#include "advarch/guidelines.hpp"
#include "advarch/trainer.hpp"

namespace advarch {

/// Every JSON report carries this as "schema_version".
inline constexpr int kReportSchemaVersion = 1;

// JSON reports. Output is pretty-printed with a trailing newline and stable key order.

/// Parameter totals, per-stage subtotals and, with a resolution, MACs.
std::string analyze_report_json(const ArchConfig& cfg, std::optional<int> resolution);
std::string guideline_report_json(const GuidelineReport& report);
std::string compare_report_json(const std::string& a_name, const std::string& b_name, const ConfigDiff& diff);
std::string fit_report_json(const ArchConfig& tmpl, const FitConstraints& c, const FitResult& fit);
std::string robustness_report_json(const std::string& config_name, const RobustnessResult& r, int steps, int restarts,
                                   std::uint64_t seed);
std::string train_report_json(const ArchConfig& cfg, const TrainConfig& tc, const TrainHistory& h);

// CSV reports. Headers are fixed:
//   layers: path,kind,in_channels,out_channels,kernel,stride,groups,dilation,out_h,out_w,params,macs
//   sweep:  depths,widths,params,budget,deviation_pct,status,error
//   train:  see history_csv
std::string layers_csv(const LayerTable& table);
std::string sweep_csv(const std::vector<SweepRow>& rows, std::int64_t budget);

/// "5-8-13-1" style.
std::string dash_join(const std::vector<int>& v);

}  // namespace advarch
