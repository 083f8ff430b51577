#include "advarch/guidelines.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace advarch {

std::string_view to_string(FindingStatus s) {
    switch (s) {
        case FindingStatus::satisfied: return "satisfied";
        case FindingStatus::violated: return "violated";
        case FindingStatus::advisory: return "advisory";
        case FindingStatus::not_applicable: return "not_applicable";
    }
    return "unknown";
}

const std::vector<GuidelineEntry>& guideline_catalog() {
    static const std::vector<GuidelineEntry> entries = {
        {1, "stage count", "Use 3 or 4 stages; 5 stages costs some robustness and 6 costs a lot."},
        {2, "depth profile",
         "In a 4-stage network, grow depth through stage 3 and keep stage 4 much shallower; D-5-8-13-1 is the reference profile."},
        {3, "bottleneck", "Keep bottleneck multipliers at or below 1; expanding blocks lose robustness, more so in late stages."},
        {4, "width knobs",
         "Prefer g=2 with e=2, or g=1 with e=1.5, both at b=0.25; stacking every individually helpful width change backfires."},
        {5, "budget split",
         "Under a fixed budget, deepen along the preferred depth profile until training hits catastrophic overfitting, then spend the remainder on width."},
        {6, "stem pooling", "Drop the stem max-pool and downsample inside stage 1 instead."},
        {7, "stem conv", "A patchify stem beats the default stem, but a 96-channel 7x7 conv stem does better still."},
        {8, "dense connections", "Leave dense connections out."},
        {9, "kernel size", "Larger kernels buy capacity along with robustness; keep them as a knob for scaling up."},
        {10, "dilation", "Keep dilation at 1; dilated convs widen the region an attacker can exploit."},
        {11, "activation",
         "Pick the activation deliberately: SiLU is the strongest option tested, GELU is close, parametric variants do not pay off."},
        {12, "activation count", "Keep all three activation layers in every block."},
        {13, "squeeze-excitation", "Add squeeze-and-excitation to every stage."},
        {14, "SE activation", "Changing only the SE activation can help; changing it together with the block activation does not."},
        {15, "norm kind", "Use batch norm; instance norm loses robustness."},
        {16, "norm placement", "Remove the first norm layer of each block (pattern 0-BN-BN)."},
        {17, "scaling up",
         "When scaling up, kernel size, depth and width all help, and scaling the preferred depth profile proportionally helps most."},
        {18, "depth saturation", "Depth-only scaling saturates; once deeper models stop improving, widen instead."},
    };
    return entries;
}

std::optional<bool> check_depth_rule(const std::vector<int>& depths, const GuidelineParams& params) {
    if (depths.size() != 4) return std::nullopt;
    if (params.c < 1) throw std::invalid_argument("depth rule constant c must be >= 1");
    return depths[0] < depths[1] && depths[1] < depths[2] && depths[2] > params.c * depths[3];
}

namespace {

std::string join(const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : "-") + std::to_string(x);
    return s;
}

template <typename Pred>
std::vector<int> stages_where(const ArchConfig& cfg, Pred p) {
    std::vector<int> out;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i)
        if (p(cfg.stages[i])) out.push_back(static_cast<int>(i) + 1);
    return out;
}

std::string stage_list(const std::vector<int>& s) {
    std::string out;
    for (int i : s) out += (out.empty() ? "" : ", ") + std::to_string(i);
    return "stage" + std::string(s.size() > 1 ? "s " : " ") + out;
}

}  // namespace

GuidelineReport evaluate_guidelines(const ArchConfig& cfg, const GuidelineParams& params) {
    validate(cfg);
    GuidelineReport rep;
    rep.config_name = cfg.name;
    const auto& cat = guideline_catalog();
    auto add = [&](int id, FindingStatus st, std::string msg) {
        rep.findings.push_back({id, st, std::move(msg), std::string(cat[id - 1].rule)});
    };
    using S = FindingStatus;
    const int n = static_cast<int>(cfg.stages.size());

    // 1
    if (n == 3 || n == 4) add(1, S::satisfied, std::to_string(n) + " stages");
    else if (n == 5) add(1, S::advisory, "5 stages; expect somewhat lower robustness than 3 or 4");
    else add(1, S::violated, std::to_string(n) + " stages; expect much lower robustness than 3 or 4");

    // 2
    if (auto ok = check_depth_rule(cfg.depths(), params)) {
        const std::string rule = "d1 < d2 < d3 > " + std::to_string(params.c) + "*d4";
        add(2, *ok ? S::satisfied : S::violated, "D-" + join(cfg.depths()) + (*ok ? " meets " : " breaks ") + rule);
    } else {
        add(2, S::not_applicable, "depth rule is defined for 4-stage networks only");
    }

    // 3
    auto inverted = stages_where(cfg, [](const StageConfig& st) { return st.bottleneck_multiplier > 1.0; });
    if (inverted.empty()) add(3, S::satisfied, "no inverted bottlenecks");
    else
        add(3, S::violated,
            "inverted bottleneck (b > 1) in " + stage_list(inverted) + "; later stages are hurt more");

    // 4, 5
    {
        const auto d = derive_quantities(cfg);
        std::string gs, es;
        for (const auto& st : cfg.stages) gs += (gs.empty() ? "" : "-") + std::to_string(st.groups);
        for (double e : d.expansion) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3g", e);
            es += (es.empty() ? "" : ", ") + std::string(buf);
        }
        add(4, S::advisory, "G-" + gs + ", e = (" + es + "); compare against the two recommended width settings");
    }
    add(5, S::advisory, "procedural: use the budget fitter to trade depth for width at a fixed parameter count");

    // 6
    if (cfg.stem.kind == StemKind::conv_stage_downsample) add(6, S::satisfied, "stem downsampling moved into stage 1");
    else add(6, S::violated, "stem kind " + std::string(to_string(cfg.stem.kind)) + " keeps the stem-level reduction");

    // 7
    if (cfg.stem.kind == StemKind::patchify) add(7, S::advisory, "patchify stem; a wide 7x7 conv stem is preferred");
    else if (cfg.stem.width >= 96 && cfg.stem.kernel == 7)
        add(7, S::satisfied, "stem width " + std::to_string(cfg.stem.width) + ", kernel 7");
    else
        add(7, S::violated,
            "stem width " + std::to_string(cfg.stem.width) + ", kernel " + std::to_string(cfg.stem.kernel) +
                "; want width >= 96 and kernel 7");

    // 8
    auto dense = stages_where(cfg, [](const StageConfig& st) { return st.dense_ratio > 1; });
    if (dense.empty()) add(8, S::satisfied, "no dense connections");
    else add(8, S::violated, "dense connections in " + stage_list(dense));

    // 9
    auto big = stages_where(cfg, [](const StageConfig& st) { return st.kernel > 3; });
    if (big.empty()) add(9, S::advisory, "3x3 kernels; larger kernels are an option when scaling up");
    else add(9, S::advisory, "kernels larger than 3 in " + stage_list(big) + " add considerable capacity");

    // 10
    auto dil = stages_where(cfg, [](const StageConfig& st) { return st.dilation > 1; });
    if (dil.empty()) add(10, S::satisfied, "no dilation");
    else add(10, S::violated, "dilation > 1 in " + stage_list(dil));

    // 11
    {
        std::set<ActivationKind> kinds;
        for (const auto& st : cfg.stages) kinds.insert(st.activation.kind);
        const bool parametric = std::any_of(kinds.begin(), kinds.end(), is_parametric);
        std::string names;
        for (auto k : kinds) names += (names.empty() ? "" : ", ") + std::string(to_string(k));
        if (parametric) add(11, S::violated, "parametric activation in use (" + names + ")");
        else if (kinds == std::set{ActivationKind::silu}) add(11, S::satisfied, "SiLU throughout");
        else add(11, S::advisory, "activation " + names + "; SiLU is the preferred choice");
    }

    // 12
    auto fewer = stages_where(cfg, [](const StageConfig& st) {
        return std::find(st.activation.pattern.begin(), st.activation.pattern.end(), false) != st.activation.pattern.end();
    });
    if (fewer.empty()) add(12, S::satisfied, "all block activations present");
    else add(12, S::violated, "activation layers removed in " + stage_list(fewer));

    // 13
    auto no_se = stages_where(cfg, [](const StageConfig& st) { return !st.se.enabled; });
    if (no_se.empty()) add(13, S::satisfied, "SE in every stage");
    else add(13, S::violated, "no SE in " + stage_list(no_se));

    // 14
    {
        auto se = stages_where(cfg, [](const StageConfig& st) { return st.se.enabled; });
        auto both = stages_where(cfg, [](const StageConfig& st) {
            return st.se.enabled && st.se.activation != ActivationKind::relu && st.activation.kind != ActivationKind::relu;
        });
        if (se.empty()) add(14, S::not_applicable, "no SE modules");
        else if (!both.empty())
            add(14, S::violated, "SE and block activations both changed from ReLU in " + stage_list(both));
        else add(14, S::satisfied, "at most one of the SE and block activations differs from ReLU");
    }

    // 15
    auto in = stages_where(cfg, [](const StageConfig& st) { return st.norm.kind == NormKind::instance_norm; });
    if (in.empty()) add(15, S::satisfied, "batch norm");
    else add(15, S::violated, "instance norm in " + stage_list(in));

    // 16
    auto off = stages_where(cfg, [](const StageConfig& st) {
        return st.norm.pattern != std::array<bool, 3>{false, true, true};
    });
    if (off.empty()) add(16, S::satisfied, "norm pattern 0-BN-BN in every stage");
    else add(16, S::violated, "norm pattern differs from 0-BN-BN in " + stage_list(off));

    add(17, S::advisory, "procedural: when scaling up, scale the depth profile first (see scale_depth)");
    add(18, S::advisory, "procedural: widen once depth-only scaling stops improving");
    return rep;
}

ConfigDiff compare_configs(const ArchConfig& a, const ArchConfig& b, const GuidelineParams& params) {
    using nlohmann::json;
    ConfigDiff diff;
    const json fa = json::parse(emit_config(a)).flatten();
    const json fb = json::parse(emit_config(b)).flatten();

    std::set<std::string> keys;
    for (auto it = fa.begin(); it != fa.end(); ++it) keys.insert(it.key());
    for (auto it = fb.begin(); it != fb.end(); ++it) keys.insert(it.key());
    for (const auto& k : keys) {
        if (k == "/name") continue;
        const bool ia = fa.contains(k), ib = fb.contains(k);
        const std::string va = ia ? fa.at(k).dump() : "(absent)";
        const std::string vb = ib ? fb.at(k).dump() : "(absent)";
        if (va != vb) diff.fields.push_back({k, va, vb});
    }
    // json::flatten keys sort lexically; reorder so stage 10 follows stage 9.
    std::stable_sort(diff.fields.begin(), diff.fields.end(), [](const FieldChange& x, const FieldChange& y) {
        auto key = [](const std::string& p) {
            std::vector<std::pair<long, std::string>> parts;
            std::size_t i = 1;
            while (i <= p.size()) {
                auto j = p.find('/', i);
                if (j == std::string::npos) j = p.size();
                const std::string part = p.substr(i, j - i);
                const bool num = !part.empty() && std::all_of(part.begin(), part.end(), ::isdigit);
                parts.emplace_back(num ? std::stol(part) : -1, num ? "" : part);
                i = j + 1;
            }
            return parts;
        };
        return key(x.path) < key(y.path);
    });

    const auto ra = evaluate_guidelines(a, params);
    const auto rb = evaluate_guidelines(b, params);
    for (int i = 0; i < kGuidelineCount; ++i)
        if (ra.findings[i].status != rb.findings[i].status)
            diff.guidelines.push_back({i + 1, ra.findings[i].status, rb.findings[i].status});
    return diff;
}

}  // namespace advarch
