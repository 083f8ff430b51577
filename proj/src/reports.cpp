#include "advarch/reports.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace advarch {

namespace {

using ojson = nlohmann::ordered_json;

ojson header(const char* kind) {
    ojson j;
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = kind;
    return j;
}

std::string finish(const ojson& j) { return j.dump(2) + "\n"; }

// Fixed-precision rendering keeps floating values byte-stable in the documents.
double fixed(double v, int digits = 6) {
    const double s = std::pow(10.0, digits);
    return std::round(v * s) / s;
}

std::string csv_fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Errors may contain commas or quotes.
std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string dash_join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "-" : "") + std::to_string(v[i]);
    return out;
}

std::string analyze_report_json(const ArchConfig& cfg, std::optional<int> resolution) {
    const ParamReport p = count_params(cfg);
    ojson j = header("analyze");
    j["config"] = cfg.name;
    j["depths"] = cfg.depths();
    j["widths"] = cfg.widths();
    j["params"] = {{"total", p.total}, {"millions", fixed(static_cast<double>(p.total) / 1e6, 2)},
                   {"tensors", p.tensor_count}, {"per_stage", stage_param_totals(cfg)}};
    if (resolution) {
        const MacReport m = count_macs(cfg, *resolution);
        j["macs"] = {{"resolution", *resolution}, {"total", m.total}, {"gmacs", fixed(m.total_gmacs, 4)}};
    } else {
        j["macs"] = nullptr;
    }
    return finish(j);
}

std::string guideline_report_json(const GuidelineReport& report) {
    ojson j = header("guidelines");
    j["config"] = report.config_name;
    ojson counts = {{"satisfied", 0}, {"violated", 0}, {"advisory", 0}, {"not_applicable", 0}};
    ojson findings = ojson::array();
    for (const auto& f : report.findings) {
        const auto status = std::string(to_string(f.status));
        counts[status] = counts[status].get<int>() + 1;
        findings.push_back({{"id", f.id},
                            {"title", std::string(guideline_catalog().at(static_cast<std::size_t>(f.id - 1)).title)},
                            {"status", status},
                            {"message", f.message},
                            {"citation", f.citation}});
    }
    j["counts"] = counts;
    j["findings"] = findings;
    return finish(j);
}

std::string compare_report_json(const std::string& a_name, const std::string& b_name, const ConfigDiff& diff) {
    ojson j = header("compare");
    j["a"] = a_name;
    j["b"] = b_name;
    j["identical"] = diff.empty();
    ojson fields = ojson::array();
    for (const auto& f : diff.fields) fields.push_back({{"path", f.path}, {"before", f.before}, {"after", f.after}});
    ojson gl = ojson::array();
    for (const auto& d : diff.guidelines)
        gl.push_back({{"id", d.id}, {"before", std::string(to_string(d.before))}, {"after", std::string(to_string(d.after))}});
    j["fields"] = fields;
    j["guidelines"] = gl;
    return finish(j);
}

std::string fit_report_json(const ArchConfig& tmpl, const FitConstraints& c, const FitResult& fit) {
    ojson j = header("fit");
    j["template"] = tmpl.name;
    j["budget"] = c.budget;
    j["mode"] = std::string(to_string(c.free));
    j["rounding"] = c.rounding;
    j["tolerance"] = c.tolerance;
    j["depths"] = fit.config.depths();
    j["widths"] = fit.config.widths();
    j["params"] = fit.params;
    j["deviation_pct"] = fixed(100.0 * static_cast<double>(fit.params - c.budget) / static_cast<double>(c.budget), 4);
    j["scale"] = fixed(fit.scale);
    return finish(j);
}

std::string robustness_report_json(const std::string& config_name, const RobustnessResult& r, int steps, int restarts,
                                   std::uint64_t seed) {
    ojson j = header("robustness");
    j["config"] = config_name;
    j["attack"] = {{"kind", "pgd"}, {"steps", steps}, {"restarts", restarts}, {"seed", seed}};
    j["samples"] = r.samples;
    j["natural_accuracy"] = fixed(r.natural_accuracy);
    j["adversarial_accuracy"] = fixed(r.adversarial_accuracy);
    ojson per = ojson::array();
    for (const auto& e : r.per_eps)
        per.push_back({{"eps", fixed(e.eps, 8)}, {"eps_255", fixed(e.eps * 255, 4)}, {"correct", e.correct},
                       {"accuracy", fixed(e.accuracy)}});
    j["per_eps"] = per;
    return finish(j);
}

std::string train_report_json(const ArchConfig& cfg, const TrainConfig& tc, const TrainHistory& h) {
    ojson j = header("train");
    j["config"] = cfg.name;
    j["mode"] = to_string(tc.mode);
    j["epochs"] = tc.epochs;
    j["seed"] = tc.seed;
    j["test_eps"] = fixed(tc.test_eps, 8);
    j["train_eps"] = fixed(tc.train_eps(), 8);
    j["lr_max"] = tc.lr_max;
    j["batch_size"] = tc.batch_size;
    j["final_holdout_pgd_acc"] = h.final_holdout_pgd_acc ? ojson(fixed(*h.final_holdout_pgd_acc)) : ojson(nullptr);
    const auto co = detect_catastrophic_overfitting(h);
    j["catastrophic_overfitting_epoch"] = co ? ojson(*co) : ojson(nullptr);
    return finish(j);
}

std::string layers_csv(const LayerTable& table) {
    std::string out = "path,kind,in_channels,out_channels,kernel,stride,groups,dilation,out_h,out_w,params,macs\n";
    for (const auto& r : table.rows) {
        out += r.path + "," + r.kind + "," + std::to_string(r.in_channels) + "," + std::to_string(r.out_channels) + "," +
               std::to_string(r.kernel) + "," + std::to_string(r.stride) + "," + std::to_string(r.groups) + "," +
               std::to_string(r.dilation) + "," + std::to_string(r.out_h) + "," + std::to_string(r.out_w) + "," +
               std::to_string(r.params) + "," + std::to_string(r.macs) + "\n";
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, std::int64_t budget) {
    std::string out = "depths,widths,params,budget,deviation_pct,status,error\n";
    for (const auto& r : rows) {
        const bool ok = r.error.empty() && r.config;
        out += dash_join(r.depths) + "," + (ok ? dash_join(r.config->widths()) : "") + "," +
               (ok ? std::to_string(r.params) : "") + "," + std::to_string(budget) + "," +
               (ok ? csv_fixed(100.0 * static_cast<double>(r.params - budget) / static_cast<double>(budget)) : "") + "," +
               (ok ? "ok" : "failed") + "," + csv_quote(r.error) + "\n";
    }
    return out;
}

}  // namespace advarch
