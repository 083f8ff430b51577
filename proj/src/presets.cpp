#include "advarch/presets.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <tuple>

#include "advarch/budget_fit.hpp"

namespace advarch {

namespace {

using Builder = std::function<ArchConfig()>;

struct Entry {
    PresetInfo info;
    Builder build;
};

ArchConfig resnet(const std::string& name, const std::vector<int>& depths = {3, 4, 6, 3}) {
    ArchConfig cfg;
    cfg.name = name;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        StageConfig st = default_stage(static_cast<int>(i), cfg.stem.kind);
        st.depth = depths[i];
        cfg.stages.push_back(st);
    }
    return cfg;
}

template <typename F>
ArchConfig each(ArchConfig cfg, F f) {
    for (auto& st : cfg.stages) f(st);
    return cfg;
}

ArchConfig widths(ArchConfig cfg, const std::vector<int>& w) {
    for (std::size_t i = 0; i < w.size(); ++i) cfg.stages[i].width = w[i];
    return cfg;
}

ArchConfig groups(ArchConfig cfg, const std::vector<int>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) cfg.stages[i].groups = g[i];
    return cfg;
}

ArchConfig bottleneck(ArchConfig cfg, const std::vector<double>& b) {
    for (std::size_t i = 0; i < b.size(); ++i) cfg.stages[i].bottleneck_multiplier = b[i];
    return cfg;
}

ArchConfig move_down(ArchConfig cfg) {
    cfg.stem.kind = StemKind::conv_stage_downsample;
    cfg.stages[0].stride = 2;
    return cfg;
}

ArchConfig renamed(ArchConfig cfg, const std::string& name) {
    cfg.name = name;
    return cfg;
}

ArchConfig fitted(ArchConfig tmpl, std::int64_t budget) {
    FitConstraints c;
    c.budget = budget;
    c.free = FitMode::scale_all_widths;
    return fit_width(tmpl, c);
}

// Grouped bottleneck blocks with SE, SiLU and the first norm layer dropped, behind a
// stride-2 stem whose pooling moved into stage 1.
ArchConfig robust_structure(const std::string& name, const std::vector<int>& depths, const std::vector<int>& w) {
    ArchConfig cfg = move_down(widths(resnet(name, depths), w));
    cfg.stem.width = 96;
    return each(cfg, [](StageConfig& st) {
        st.groups = 2;
        st.bottleneck_multiplier = 0.25;
        st.se.enabled = true;
        st.se.activation = ActivationKind::relu;
        st.activation.kind = ActivationKind::silu;
        st.norm.pattern = {false, true, true};
    });
}

const std::vector<int> kBaseWidths = {256, 512, 1024, 2048};

// Fits are deterministic but not free; each is computed once per process.
const ArchConfig& cached(const std::string& key, const std::function<ArchConfig()>& make) {
    static std::recursive_mutex mu;
    static std::map<std::string, ArchConfig> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, make()).first;
    return it->second;
}

const ArchConfig& small_fit() {
    return cached("robarch-s",
                  [] { return fitted(robust_structure("robarch-s", {5, 8, 13, 1}, kBaseWidths), 26'140'000); });
}

const ArchConfig& medium_fit() {
    return cached("robarch-m",
                  [] { return fitted(robust_structure("robarch-m", {7, 11, 18, 1}, kBaseWidths), 45'900'000); });
}

const ArchConfig& s2a_fit() {
    return cached("s2a", [] {
        return fitted(groups(resnet("s2a", {5, 8, 13, 1}), {2, 2, 2, 2}), 25'840'000);
    });
}

// Stage-2/3 roadmap structure with the small model's widths, before the later edits.
ArchConfig s4_structure(const std::string& name) {
    ArchConfig cfg = robust_structure(name, {5, 8, 13, 1}, small_fit().widths());
    return each(cfg, [](StageConfig& st) {
        st.activation.kind = ActivationKind::relu;
        st.norm.pattern = {true, true, true};
    });
}

ArchConfig deeper_large(const std::string& name, const std::vector<int>& depths, std::int64_t budget) {
    return cached(name, [&] {
        ArchConfig cfg = with_depths(renamed(medium_fit(), name), depths);
        return fitted(cfg, budget);
    });
}

ArchConfig with_activation(const std::string& name, ActivationKind k) {
    return each(resnet(name), [k](StageConfig& st) { st.activation.kind = k; });
}

ArchConfig with_act_pattern(const std::string& name, std::array<bool, 3> p) {
    return each(resnet(name), [p](StageConfig& st) { st.activation.pattern = p; });
}

ArchConfig with_norm_pattern(const std::string& name, std::array<bool, 3> p) {
    return each(resnet(name), [p](StageConfig& st) { st.norm.pattern = p; });
}

ArchConfig with_se(const std::string& name, ActivationKind k) {
    return each(resnet(name), [k](StageConfig& st) {
        st.se.enabled = true;
        st.se.activation = k;
    });
}

ArchConfig with_dense(const std::string& name, int r) {
    return each(resnet(name), [r](StageConfig& st) { st.dense_ratio = std::min(r, st.depth); });
}

std::string join_depths(const std::vector<int>& d) {
    std::string s;
    for (int v : d) s += (s.empty() ? "" : "-") + std::to_string(v);
    return s;
}

std::vector<Entry> build_catalog() {
    std::vector<Entry> v;
    auto add = [&](std::string name, std::string desc, std::optional<double> reported, bool fit, Builder b) {
        v.push_back({{std::move(name), std::move(desc), reported, fit}, std::move(b)});
    };

    add("resnet50", "ResNet-50 baseline", 25.56, false, [] { return resnet("resnet50"); });
    add("robarch-s", "small robust model, widths fitted to 26.14M", 26.14, true, [] { return small_fit(); });
    add("robarch-m", "medium robust model, depth x1.4, widths fitted to 45.90M", 45.90, true,
        [] { return medium_fit(); });
    add("robarch-l", "large robust model, D-7-11-18-1, W-512-1024-2016-4032", 104.07, false,
        [] { return robust_structure("robarch-l", {7, 11, 18, 1}, {512, 1024, 2016, 4032}); });

    // Cumulative path from the baseline to the small model, then scaled up.
    add("s0", "ResNet-50", 25.56, false, [] { return resnet("s0"); });
    add("s1", "s0 + D-5-8-13-1", 25.71, false, [] { return resnet("s1", {5, 8, 13, 1}); });
    add("s2a", "s1 + g=2, e=2, b=0.25", 25.84, true, [] { return s2a_fit(); });
    add("s2b", "s1 + g=1, e=1.5, b=0.25", 25.53, true, [] {
        return cached("s2b", [] { return fitted(widths(resnet("s2b", {5, 8, 13, 1}), {256, 384, 576, 864}), 25'530'000); });
    });
    add("s3", "s2a + stem width 96 + move-down downsampling", 25.85, false, [] {
        ArchConfig cfg = move_down(renamed(s2a_fit(), "s3"));
        cfg.stem.width = 96;
        return cfg;
    });
    add("s4", "s3 + SE (ReLU)", 26.15, false, [] { return s4_structure("s4"); });
    add("s5", "s4 + SiLU", 26.15, false, [] {
        return each(s4_structure("s5"), [](StageConfig& st) { st.activation.kind = ActivationKind::silu; });
    });
    add("s6", "s5 + SE (SiLU)", 26.15, false, [] {
        return each(s4_structure("s6"), [](StageConfig& st) {
            st.activation.kind = ActivationKind::silu;
            st.se.activation = ActivationKind::silu;
        });
    });
    add("s7", "s5 + norm 0-BN-BN", 26.14, false, [] { return renamed(small_fit(), "s7"); });
    add("m1", "s7 + kernel 5, widths refitted to 45.95M", 45.95, true, [] {
        return cached("m1", [] {
            return fitted(each(renamed(small_fit(), "m1"), [](StageConfig& st) { st.kernel = 5; }), 45'950'000);
        });
    });
    add("m2", "s7 + D-7-11-18-1", 45.90, true, [] { return renamed(medium_fit(), "m2"); });
    add("m3", "s7 + W-384-760-1504-2944", 46.16, false,
        [] { return robust_structure("m3", {5, 8, 13, 1}, {384, 760, 1504, 2944}); });
    add("l1", "m2 + kernel 7, widths refitted to 103.89M", 103.89, true, [] {
        return cached("l1", [] {
            return fitted(each(renamed(medium_fit(), "l1"), [](StageConfig& st) { st.kernel = 7; }), 103'890'000);
        });
    });
    add("l2", "m2 + W-512-1024-2016-4032", 104.07, false,
        [] { return robust_structure("l2", {7, 11, 18, 1}, {512, 1024, 2016, 4032}); });
    add("l3", "m2 + D-8-13-21-2", 104.13, true, [] { return deeper_large("l3", {8, 13, 21, 2}, 104'130'000); });
    add("l4", "m2 + D-10-16-26-2", 104.14, true, [] { return deeper_large("l4", {10, 16, 26, 2}, 104'140'000); });

    // Depth study: ResNet-50 widths, stages past the fourth reuse the fourth width.
    const std::vector<std::pair<std::vector<int>, double>> depth_rows = {
        {{16, 16, 16}, 25.02},   {{10, 18, 16}, 25.15},   {{3, 22, 16}, 25.78},     {{16, 25, 14}, 25.30},
        {{2, 16, 18}, 26.26},    {{3, 29, 14}, 25.51},    {{3, 4, 20}, 25.21},      {{8, 2, 20}, 25.00},
        {{1, 5, 6, 3}, 25.70},   {{5, 2, 6, 3}, 25.14},   {{1, 4, 7, 3}, 26.53},    {{6, 4, 4, 3}, 23.53},
        {{3, 5, 2, 4}, 25.83},   {{4, 3, 10, 2}, 25.35},  {{2, 7, 13, 1}, 25.22},   {{2, 9, 13, 1}, 25.78},
        {{2, 13, 8, 2}, 25.78},  {{1, 1, 15, 1}, 25.71},  {{2, 5, 14, 1}, 25.78},   {{5, 8, 13, 1}, 25.71},
        {{2, 12, 12, 1}, 25.51}, {{4, 8, 1, 4}, 25.62},   {{1, 4, 2, 4}, 25.41},    {{2, 1, 3, 4}, 25.76},
        {{3, 24, 5, 2}, 25.58},  {{2, 8, 5, 3}, 25.49},   {{6, 4, 2, 4}, 25.76},    {{10, 6, 5, 3}, 25.49},
        {{10, 2, 2, 4}, 25.48},  {{1, 2, 3, 4}, 25.97},   {{1, 1, 3, 1, 2}, 25.42}, {{1, 1, 3, 2, 1}, 25.42},
        {{3, 6, 2, 2, 1}, 25.85}, {{2, 3, 7, 1, 1}, 26.06}, {{3, 4, 6, 2, 1}, 29.76}, {{1, 1, 1, 1, 1, 1}, 27.39},
    };
    for (const auto& [d, m] : depth_rows) {
        const std::string name = "d-" + join_depths(d);
        add(name, "ResNet-50 with D-" + join_depths(d), m, false, [name, d] { return resnet(name, d); });
    }

    struct WidthRow {
        const char* name;
        std::vector<int> w;
        std::vector<int> g;
        std::vector<double> b;
        double reported;
    };
    const std::vector<WidthRow> width_rows = {
        {"bm-0.125", {320, 672, 1456, 3136}, {1, 1, 1, 1}, {0.125, 0.125, 0.125, 0.125}, 25.47},
        {"bm-0.5", {128, 256, 568, 1304}, {1, 1, 1, 1}, {0.5, 0.5, 0.5, 0.5}, 25.57},
        {"bm-1", {64, 144, 320, 720}, {1, 1, 1, 1}, {1, 1, 1, 1}, 25.61},
        {"bm-2", {32, 72, 168, 384}, {1, 1, 1, 1}, {2, 2, 2, 2}, 25.72},
        {"bm-4", {16, 32, 88, 200}, {1, 1, 1, 1}, {4, 4, 4, 4}, 26.19},
        {"bm-0.25-0.25-2-2", {256, 512, 168, 384}, {1, 1, 1, 1}, {0.25, 0.25, 2, 2}, 26.42},
        {"bm-4-4-0.25-0.25", {24, 48, 1024, 2048}, {1, 1, 1, 1}, {4, 4, 0.25, 0.25}, 25.20},
        {"bm-0.5-0.5-0.25-0.25", {128, 256, 1024, 2048}, {1, 1, 1, 1}, {0.5, 0.5, 0.25, 0.25}, 24.83},
        {"g-2", {256, 512, 1080, 2504}, {2, 2, 2, 2}, {0.25, 0.25, 0.25, 0.25}, 26.02},
        {"g-4", {288, 576, 1248, 2592}, {4, 4, 4, 4}, {0.25, 0.25, 0.25, 0.25}, 25.58},
        {"g-8", {256, 512, 1280, 2816}, {8, 8, 8, 8}, {0.25, 0.25, 0.25, 0.25}, 25.81},
        {"g-16", {256, 576, 1344, 2816}, {16, 16, 16, 16}, {0.25, 0.25, 0.25, 0.25}, 25.61},
        {"g-dw", {304, 640, 1384, 2848}, {76, 160, 346, 712}, {0.25, 0.25, 0.25, 0.25}, 25.52},
        {"g-8-8-1-1", {256, 512, 1040, 2112}, {8, 8, 1, 1}, {0.25, 0.25, 0.25, 0.25}, 26.13},
        {"g-1-1-8-8", {256, 512, 1248, 2784}, {1, 1, 8, 8}, {0.25, 0.25, 0.25, 0.25}, 25.69},
        {"g-2-2-4-4", {256, 512, 1248, 2592}, {2, 2, 4, 4}, {0.25, 0.25, 0.25, 0.25}, 25.41},
        {"e-1", {1112, 1112, 1112, 1112}, {1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25}, 25.70},
        {"e-1.5", {512, 768, 1152, 1728}, {1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25}, 25.95},
        {"e-2.5", {144, 360, 904, 2264}, {1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25}, 26.01},
        {"e-3", {88, 264, 792, 2376}, {1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25}, 25.81},
        {"combined", {512, 768, 1152, 1728}, {2, 2, 2, 2}, {0.5, 0.5, 0.25, 0.25}, 24.43},
    };
    for (const auto& r : width_rows) {
        std::string name = r.name;
        add(name, "ResNet-50 depths with explicit widths, groups and bottleneck multipliers", r.reported, false,
            [name, r] { return bottleneck(groups(widths(resnet(name), r.w), r.g), r.b); });
    }

    const std::vector<std::tuple<std::vector<int>, std::vector<int>, double>> dw_rows = {
        {{1, 2, 4, 1}, {768, 1152, 1712, 2560}, 25.69},   {{2, 4, 7, 1}, {648, 968, 1456, 2160}, 25.55},
        {{4, 6, 10, 1}, {576, 848, 1280, 1904}, 25.51},   {{5, 8, 13, 1}, {512, 768, 1152, 1728}, 25.18},
        {{8, 12, 20, 2}, {424, 632, 944, 1416}, 25.37},   {{10, 16, 26, 2}, {376, 568, 856, 1280}, 25.56},
        {{20, 32, 52, 4}, {272, 416, 616, 928}, 25.52},
    };
    for (const auto& [d, w, m] : dw_rows) {
        const std::string name = "dw-" + join_depths(d);
        add(name, "depth and width scaled together, g=2, e=1.5", m, false,
            [name, d, w] { return groups(widths(resnet(name, d), w), {2, 2, 2, 2}); });
    }

    add("stem-width-32", "stem width 32", 25.54, false, [] {
        auto c = resnet("stem-width-32");
        c.stem.width = 32;
        return c;
    });
    add("stem-width-96", "stem width 96", 25.57, false, [] {
        auto c = resnet("stem-width-96");
        c.stem.width = 96;
        return c;
    });
    for (int k : {3, 5, 9}) {
        const std::string name = "stem-kernel-" + std::to_string(k);
        add(name, "stem kernel " + std::to_string(k), k == 9 ? 25.56 : 25.55, false, [name, k] {
            auto c = resnet(name);
            c.stem.kernel = k;
            return c;
        });
    }
    add("move-down", "stem pooling moved into stage 1 downsampling", 25.56, false,
        [] { return move_down(resnet("move-down")); });
    add("downsample-2", "stem without pooling (downsample factor 2)", 25.56, false, [] {
        auto c = resnet("downsample-2");
        c.stem.kind = StemKind::conv_nopool;
        return c;
    });
    for (int p : {4, 2}) {
        const std::string name = "patchify-" + std::to_string(p);
        add(name, "patchify stem, patch " + std::to_string(p), 25.55, false, [name, p] {
            auto c = resnet(name);
            c.stem.kind = StemKind::patchify;
            c.stem.kernel = p;
            c.stem.patch_stride = p;
            return c;
        });
    }
    for (int r = 2; r <= 5; ++r) {
        const std::string name = "dense-" + std::to_string(r);
        add(name, "dense connections, ratio " + std::to_string(r), 25.56, false, [name, r] { return with_dense(name, r); });
    }
    add("dense-5-relu-relu-0", "dense ratio 5 with activation pattern ReLU-ReLU-0", 25.56, false, [] {
        return each(with_dense("dense-5-relu-relu-0", 5),
                    [](StageConfig& st) { st.activation.pattern = {true, true, false}; });
    });

    add("kernel5", "3x3 convolutions widened to 5x5", 45.68, false,
        [] { return each(resnet("kernel5"), [](StageConfig& st) { st.kernel = 5; }); });
    add("kernel7", "3x3 convolutions widened to 7x7", 75.86, false,
        [] { return each(resnet("kernel7"), [](StageConfig& st) { st.kernel = 7; }); });
    for (int d : {2, 3}) {
        const std::string name = "dilation" + std::to_string(d);
        add(name, "dilation " + std::to_string(d), 25.56, false,
            [name, d] { return each(resnet(name), [d](StageConfig& st) { st.dilation = d; }); });
    }
    for (auto k : {ActivationKind::gelu, ActivationKind::silu, ActivationKind::prelu, ActivationKind::psilu,
                   ActivationKind::pssilu}) {
        const std::string name(to_string(k));
        add(name, "block activation " + name, 25.56, false, [name, k] { return with_activation(name, k); });
    }
    const std::vector<std::pair<std::string, std::array<bool, 3>>> patterns = {
        {"relu-relu-0", {true, true, false}}, {"relu-0-relu", {true, false, true}}, {"0-relu-relu", {false, true, true}},
        {"0-0-relu", {false, false, true}},   {"0-relu-0", {false, true, false}},   {"relu-0-0", {true, false, false}},
    };
    for (const auto& [tag, p] : patterns) {
        const std::string name = "act-" + tag;
        add(name, "activation pattern " + tag, 25.56, false, [name, p] { return with_act_pattern(name, p); });
    }
    for (auto k : {ActivationKind::relu, ActivationKind::silu, ActivationKind::gelu, ActivationKind::psilu,
                   ActivationKind::pssilu}) {
        const std::string name = "se-" + std::string(to_string(k));
        add(name, "squeeze-and-excitation with " + std::string(to_string(k)), 27.73, false,
            [name, k] { return with_se(name, k); });
    }
    add("norm-in", "instance norm in place of batch norm", 25.51, false, [] {
        return each(resnet("norm-in"), [](StageConfig& st) { st.norm.kind = NormKind::instance_norm; });
    });
    const std::vector<std::tuple<std::string, std::array<bool, 3>, double>> norms = {
        {"bn-bn-0", {true, true, false}, 25.53}, {"bn-0-bn", {true, false, true}, 25.55},
        {"0-bn-bn", {false, true, true}, 25.55}, {"0-0-bn", {false, false, true}, 25.54},
        {"0-bn-0", {false, true, false}, 25.52}, {"bn-0-0", {true, false, false}, 25.52},
    };
    for (const auto& [tag, p, m] : norms) {
        const std::string name = "norm-" + tag;
        add(name, "normalization pattern " + tag, m, false, [name, p] { return with_norm_pattern(name, p); });
    }
    return v;
}

const std::vector<Entry>& catalog() {
    static const std::vector<Entry> entries = build_catalog();
    return entries;
}

const Entry& find(std::string_view name) {
    for (const auto& e : catalog())
        if (e.info.name == name) return e;
    throw UnknownPresetError("unknown preset '" + std::string(name) + "'");
}

}  // namespace

const std::vector<PresetInfo>& preset_catalog() {
    static const std::vector<PresetInfo> infos = [] {
        std::vector<PresetInfo> out;
        for (const auto& e : catalog()) out.push_back(e.info);
        return out;
    }();
    return infos;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& e : catalog()) out.push_back(e.info.name);
    return out;
}

const PresetInfo& preset_info(std::string_view name) { return find(name).info; }

ArchConfig preset(std::string_view name) { return find(name).build(); }

ArchConfig tiny_config(int num_classes) {
    ArchConfig cfg = widths(resnet("tiny", {1, 1, 1, 1}), {8, 16, 32, 64});
    cfg.stem.width = 8;
    cfg.num_classes = num_classes;
    return cfg;
}

}  // namespace advarch
