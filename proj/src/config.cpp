#include "advarch/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace advarch {

using ojson = nlohmann::ordered_json;

namespace {

template <typename E, std::size_t N>
struct EnumTable {
    std::array<std::pair<E, std::string_view>, N> entries;

    std::string_view name(E v) const {
        for (const auto& [e, s] : entries)
            if (e == v) return s;
        return "?";
    }
    E parse(std::string_view s, std::string_view what) const {
        for (const auto& [e, n] : entries)
            if (n == s) return e;
        std::string allowed;
        for (const auto& [e, n] : entries) {
            if (!allowed.empty()) allowed += ", ";
            allowed += n;
        }
        throw ConfigError("", "unknown " + std::string(what) + " '" + std::string(s) + "' (expected one of " +
                                  allowed + ")");
    }
};

constexpr EnumTable<StemKind, 4> kStemKinds{{{{StemKind::conv_maxpool, "conv_maxpool"},
                                              {StemKind::conv_stage_downsample, "conv_stage_downsample"},
                                              {StemKind::conv_nopool, "conv_nopool"},
                                              {StemKind::patchify, "patchify"}}}};
constexpr EnumTable<ActivationKind, 6> kActKinds{{{{ActivationKind::relu, "relu"},
                                                   {ActivationKind::gelu, "gelu"},
                                                   {ActivationKind::silu, "silu"},
                                                   {ActivationKind::prelu, "prelu"},
                                                   {ActivationKind::psilu, "psilu"},
                                                   {ActivationKind::pssilu, "pssilu"}}}};
constexpr EnumTable<NormKind, 2> kNormKinds{
    {{{NormKind::batch_norm, "batch_norm"}, {NormKind::instance_norm, "instance_norm"}}}};
constexpr EnumTable<DenseMode, 2> kDenseModes{{{{DenseMode::sum, "sum"}, {DenseMode::concat, "concat"}}}};
constexpr EnumTable<SeBase, 2> kSeBases{{{{SeBase::block_input, "block_input"}, {SeBase::inner, "inner"}}}};
constexpr EnumTable<Pooling, 1> kPoolings{{{{Pooling::global_average, "global_average"}}}};

}  // namespace

std::string_view to_string(StemKind k) { return kStemKinds.name(k); }
std::string_view to_string(ActivationKind k) { return kActKinds.name(k); }
std::string_view to_string(NormKind k) { return kNormKinds.name(k); }
std::string_view to_string(DenseMode k) { return kDenseModes.name(k); }
std::string_view to_string(SeBase k) { return kSeBases.name(k); }
std::string_view to_string(Pooling k) { return kPoolings.name(k); }

StemKind parse_stem_kind(std::string_view s) { return kStemKinds.parse(s, "stem kind"); }
ActivationKind parse_activation_kind(std::string_view s) { return kActKinds.parse(s, "activation kind"); }
NormKind parse_norm_kind(std::string_view s) { return kNormKinds.parse(s, "norm kind"); }
DenseMode parse_dense_mode(std::string_view s) { return kDenseModes.parse(s, "dense mode"); }
SeBase parse_se_base(std::string_view s) { return kSeBases.parse(s, "SE base"); }
Pooling parse_pooling(std::string_view s) { return kPoolings.parse(s, "pooling"); }

int activation_scalar_count(ActivationKind k) {
    switch (k) {
        case ActivationKind::prelu:
        case ActivationKind::psilu: return 1;
        case ActivationKind::pssilu: return 2;
        default: return 0;
    }
}

bool is_parametric(ActivationKind k) { return activation_scalar_count(k) > 0; }

int round_half_away(double v) { return static_cast<int>(std::lround(v)); }

int StageConfig::inner_width() const { return round_half_away(width * bottleneck_multiplier); }

std::vector<int> ArchConfig::depths() const {
    std::vector<int> d;
    for (const auto& s : stages) d.push_back(s.depth);
    return d;
}

std::vector<int> ArchConfig::widths() const {
    std::vector<int> w;
    for (const auto& s : stages) w.push_back(s.width);
    return w;
}

StageConfig default_stage(int index, StemKind stem) {
    StageConfig st;
    st.width = 256 << std::min(index, 3);
    st.stride = index == 0 ? (stem == StemKind::conv_stage_downsample ? 2 : 1) : 2;
    return st;
}

int stem_output_channels(const ArchConfig& cfg) { return cfg.stem.width; }

int se_hidden_width(const SEConfig& se, int block_in, int inner) {
    const int base = se.base == SeBase::block_input ? block_in : inner;
    return std::max(1, round_half_away(se.ratio * base));
}

int block_input_channels(const ArchConfig& cfg, int s, int b) {
    const StageConfig& st = cfg.stages[s];
    if (b == 0) return s == 0 ? stem_output_channels(cfg) : cfg.stages[s - 1].width;
    if (st.dense_mode == DenseMode::concat) return std::min(b, st.dense_ratio) * st.width;
    return st.width;
}

bool block_has_projection(int in_ch, int out_ch, int stride) { return in_ch != out_ch || stride != 1; }

void validate(const ArchConfig& cfg) {
    if (cfg.name.empty()) throw ConfigError("name", "must be non-empty");
    if (cfg.num_classes < 1) throw ConfigError("num_classes", "must be a positive integer");
    if (cfg.input_channels < 1) throw ConfigError("input_channels", "must be a positive integer");

    const int n = static_cast<int>(cfg.stages.size());
    if (n < kMinStages || n > kMaxStages) throw ConfigError("stages", "stage count out of range [3,6]");

    const auto& stem = cfg.stem;
    if (stem.width < 1) throw ConfigError("stem.width", "must be a positive integer");
    if (stem.kind == StemKind::patchify) {
        if (stem.patch_stride != 2 && stem.patch_stride != 4)
            throw ConfigError("stem.patch_stride", "patchify stride must be 2 or 4");
        if (stem.kernel != stem.patch_stride)
            throw ConfigError("stem.kernel", "patchify kernel must equal patch_stride");
    } else if (stem.kernel < 1 || stem.kernel % 2 == 0) {
        throw ConfigError("stem.kernel", "must be a positive odd integer");
    }

    const bool moved_down = stem.kind == StemKind::conv_stage_downsample;
    if (moved_down && cfg.stages[0].stride != 2)
        throw ConfigError("stages[0].stride", "conv_stage_downsample stem requires stage 1 stride 2");
    if (!moved_down && cfg.stages[0].stride != 1)
        throw ConfigError("stages[0].stride", "stage 1 stride 2 requires the conv_stage_downsample stem");

    for (int i = 0; i < n; ++i) {
        const auto& st = cfg.stages[i];
        const std::string p = "stages[" + std::to_string(i) + "]";
        if (st.depth < 1) throw ConfigError(p + ".depth", "must be a positive integer");
        if (st.width < 1) throw ConfigError(p + ".width", "must be a positive integer");
        if (!(st.bottleneck_multiplier > 0.0))
            throw ConfigError(p + ".bottleneck_multiplier", "must be positive");
        if (st.groups < 1) throw ConfigError(p + ".groups", "must be a positive integer");
        if (st.kernel < 1 || st.kernel % 2 == 0) throw ConfigError(p + ".kernel", "must be a positive odd integer");
        if (st.dilation < 1) throw ConfigError(p + ".dilation", "must be a positive integer");
        if (st.stride != 1 && st.stride != 2) throw ConfigError(p + ".stride", "must be 1 or 2");
        if (st.dense_ratio < 1) throw ConfigError(p + ".dense_ratio", "must be a positive integer");
        if (st.dense_ratio > st.depth) throw ConfigError(p + ".dense_ratio", "dense ratio exceeds stage depth");
        const int inner = st.inner_width();
        if (inner < 1) throw ConfigError(p + ".bottleneck_multiplier", "inner width rounds to zero");
        if (inner % st.groups != 0)
            throw ConfigError(p + ".groups", "inner width " + std::to_string(inner) + " not divisible by groups " +
                                                 std::to_string(st.groups));
        if (!(st.se.ratio > 0.0 && st.se.ratio <= 1.0))
            throw ConfigError(p + ".se.ratio", "must lie in (0,1]");
    }
}

DerivedWidths derive_quantities(const ArchConfig& cfg) {
    DerivedWidths d;
    for (const auto& st : cfg.stages) {
        const int inner = st.inner_width();
        const double gw = static_cast<double>(inner) / st.groups;
        d.stages.push_back({inner, gw, round_half_away(inner / gw), static_cast<double>(inner) / st.width});
    }
    for (std::size_t i = 0; i + 1 < cfg.stages.size(); ++i)
        d.expansion.push_back(static_cast<double>(cfg.stages[i + 1].width) / cfg.stages[i].width);
    return d;
}

// ---------------------------------------------------------------------------
// JSON document format

namespace {

class Reader {
public:
    Reader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    void allow(std::initializer_list<std::string_view> keys) const {
        std::set<std::string_view> ok(keys);
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw ConfigError(sub(it.key()), "unknown field");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const ojson& at(const char* key) const { return j_.at(key); }
    std::string sub(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    void get_int(const char* key, int& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(sub(key), "expected an integer");
        out = v.get<int>();
    }
    void get_double(const char* key, double& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(sub(key), "expected a number");
        out = v.get<double>();
    }
    void get_bool(const char* key, bool& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(sub(key), "expected a boolean");
        out = v.get<bool>();
    }
    void get_string(const char* key, std::string& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(sub(key), "expected a string");
        out = v.get<std::string>();
    }
    template <typename E, typename F>
    void get_enum(const char* key, E& out, F parse) const {
        if (!has(key)) return;
        std::string s;
        get_string(key, s);
        try {
            out = parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError(sub(key), e.what());
        }
    }
    void get_pattern(const char* key, std::array<bool, 3>& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 3) throw ConfigError(sub(key), "expected an array of 3 booleans");
        for (std::size_t i = 0; i < 3; ++i) {
            if (!v[i].is_boolean()) throw ConfigError(sub(key) + "[" + std::to_string(i) + "]", "expected a boolean");
            out[i] = v[i].get<bool>();
        }
    }

private:
    const ojson& j_;
    std::string path_;
};

StageConfig read_stage(const ojson& j, const std::string& path, int index, StemKind stem) {
    StageConfig st = default_stage(index, stem);
    Reader r(j, path);
    r.allow({"depth", "width", "bottleneck_multiplier", "groups", "kernel", "dilation", "stride", "dense_ratio",
             "dense_mode", "se", "activation", "norm"});
    r.get_int("depth", st.depth);
    r.get_int("width", st.width);
    r.get_double("bottleneck_multiplier", st.bottleneck_multiplier);
    r.get_int("groups", st.groups);
    r.get_int("kernel", st.kernel);
    r.get_int("dilation", st.dilation);
    r.get_int("stride", st.stride);
    r.get_int("dense_ratio", st.dense_ratio);
    r.get_enum("dense_mode", st.dense_mode, parse_dense_mode);
    if (r.has("se")) {
        Reader se(r.at("se"), r.sub("se"));
        se.allow({"enabled", "ratio", "base", "activation"});
        se.get_bool("enabled", st.se.enabled);
        se.get_double("ratio", st.se.ratio);
        se.get_enum("base", st.se.base, parse_se_base);
        se.get_enum("activation", st.se.activation, parse_activation_kind);
    }
    if (r.has("activation")) {
        Reader a(r.at("activation"), r.sub("activation"));
        a.allow({"kind", "pattern"});
        a.get_enum("kind", st.activation.kind, parse_activation_kind);
        a.get_pattern("pattern", st.activation.pattern);
    }
    if (r.has("norm")) {
        Reader nr(r.at("norm"), r.sub("norm"));
        nr.allow({"kind", "pattern"});
        nr.get_enum("kind", st.norm.kind, parse_norm_kind);
        nr.get_pattern("pattern", st.norm.pattern);
    }
    return st;
}

int line_of_offset(std::string_view text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

ojson pattern_json(const std::array<bool, 3>& p) { return ojson::array({p[0], p[1], p[2]}); }

}  // namespace

ArchConfig parse_config(std::string_view text) {
    ojson doc;
    try {
        doc = ojson::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("line " + std::to_string(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0)),
                          std::string("syntax error: ") + e.what());
    }

    ArchConfig cfg;
    Reader r(doc, "");
    r.allow({"name", "num_classes", "input_channels", "stem", "stages", "head"});
    r.get_string("name", cfg.name);
    r.get_int("num_classes", cfg.num_classes);
    r.get_int("input_channels", cfg.input_channels);

    if (r.has("stem")) {
        Reader s(r.at("stem"), "stem");
        s.allow({"kind", "width", "kernel", "patch_stride"});
        s.get_enum("kind", cfg.stem.kind, parse_stem_kind);
        s.get_int("width", cfg.stem.width);
        s.get_int("patch_stride", cfg.stem.patch_stride);
        if (cfg.stem.kind == StemKind::patchify) cfg.stem.kernel = cfg.stem.patch_stride;
        s.get_int("kernel", cfg.stem.kernel);
    }

    if (!r.has("stages")) throw ConfigError("stages", "missing required field");
    const auto& stages = r.at("stages");
    if (!stages.is_array()) throw ConfigError("stages", "expected an array");
    for (std::size_t i = 0; i < stages.size(); ++i)
        cfg.stages.push_back(
            read_stage(stages[i], "stages[" + std::to_string(i) + "]", static_cast<int>(i), cfg.stem.kind));

    if (r.has("head")) {
        Reader h(r.at("head"), "head");
        h.allow({"pooling", "bias"});
        h.get_enum("pooling", cfg.head.pooling, parse_pooling);
        h.get_bool("bias", cfg.head.bias);
    }

    validate(cfg);
    return cfg;
}

std::string emit_config(const ArchConfig& cfg) {
    ojson doc;
    doc["name"] = cfg.name;
    doc["num_classes"] = cfg.num_classes;
    doc["input_channels"] = cfg.input_channels;
    doc["stem"] = {{"kind", to_string(cfg.stem.kind)},
                   {"width", cfg.stem.width},
                   {"kernel", cfg.stem.kernel},
                   {"patch_stride", cfg.stem.patch_stride}};
    ojson stages = ojson::array();
    for (const auto& st : cfg.stages) {
        ojson s;
        s["depth"] = st.depth;
        s["width"] = st.width;
        s["bottleneck_multiplier"] = st.bottleneck_multiplier;
        s["groups"] = st.groups;
        s["kernel"] = st.kernel;
        s["dilation"] = st.dilation;
        s["stride"] = st.stride;
        s["dense_ratio"] = st.dense_ratio;
        s["dense_mode"] = to_string(st.dense_mode);
        s["se"] = {{"enabled", st.se.enabled},
                   {"ratio", st.se.ratio},
                   {"base", to_string(st.se.base)},
                   {"activation", to_string(st.se.activation)}};
        s["activation"] = {{"kind", to_string(st.activation.kind)}, {"pattern", pattern_json(st.activation.pattern)}};
        s["norm"] = {{"kind", to_string(st.norm.kind)}, {"pattern", pattern_json(st.norm.pattern)}};
        stages.push_back(std::move(s));
    }
    doc["stages"] = std::move(stages);
    doc["head"] = {{"pooling", to_string(cfg.head.pooling)}, {"bias", cfg.head.bias}};
    return doc.dump(2) + "\n";
}

ArchConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config_file(const ArchConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
    out << emit_config(cfg);
}

}  // namespace advarch
