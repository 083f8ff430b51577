#include "advarch/analyzer.hpp"

namespace advarch {

namespace {

int conv_out(int in, int kernel, int stride, int pad, int dilation) {
    return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

class Walker {
public:
    Walker(const ArchConfig& cfg, std::optional<int> res) : cfg_(cfg), spatial_(res.value_or(0)) {}

    std::vector<LayerRow> run() {
        stem();
        for (int s = 0; s < static_cast<int>(cfg_.stages.size()); ++s)
            for (int b = 0; b < cfg_.stages[s].depth; ++b) block(s, b);
        head();
        return std::move(rows_);
    }

private:
    bool sized() const { return spatial_ > 0; }

    // Returns the output spatial size without updating the running size.
    int conv(const std::string& path, int cin, int cout, int k, int stride, int pad, int groups, int dilation,
             int in_spatial) {
        LayerRow r;
        r.path = path;
        r.kind = "conv";
        r.in_channels = cin;
        r.out_channels = cout;
        r.kernel = k;
        r.stride = stride;
        r.groups = groups;
        r.dilation = dilation;
        r.params = static_cast<std::int64_t>(k) * k * (cin / groups) * cout;
        r.tensors = 1;
        const int out = sized() ? conv_out(in_spatial, k, stride, pad, dilation) : 0;
        r.out_h = r.out_w = out;
        r.macs = static_cast<std::int64_t>(out) * out * r.params;
        rows_.push_back(std::move(r));
        return out;
    }

    void norm(const std::string& path, NormKind kind, int c, int spatial) {
        LayerRow r;
        r.path = path;
        r.kind = kind == NormKind::batch_norm ? "batch_norm" : "instance_norm";
        r.in_channels = r.out_channels = c;
        r.params = kind == NormKind::batch_norm ? 2 * c : 0;
        r.tensors = kind == NormKind::batch_norm ? 2 : 0;
        r.out_h = r.out_w = spatial;
        rows_.push_back(std::move(r));
    }

    void act(const std::string& path, ActivationKind kind, int c, int spatial) {
        LayerRow r;
        r.path = path;
        r.kind = "activation:" + std::string(to_string(kind));
        r.in_channels = r.out_channels = c;
        r.params = activation_scalar_count(kind);
        r.tensors = static_cast<int>(r.params);  // one scalar tensor each (pssilu: beta, alpha)
        r.out_h = r.out_w = spatial;
        rows_.push_back(std::move(r));
    }

    void linear(const std::string& path, int cin, int cout, bool bias) {
        LayerRow r;
        r.path = path;
        r.kind = "linear";
        r.in_channels = cin;
        r.out_channels = cout;
        r.params = static_cast<std::int64_t>(cin) * cout + (bias ? cout : 0);
        r.tensors = bias ? 2 : 1;
        r.out_h = r.out_w = sized() ? 1 : 0;
        r.macs = static_cast<std::int64_t>(cin) * cout;
        rows_.push_back(std::move(r));
    }

    void pool(const std::string& path, const std::string& kind, int c, int k, int stride, int out) {
        LayerRow r;
        r.path = path;
        r.kind = kind;
        r.in_channels = r.out_channels = c;
        r.kernel = k;
        r.stride = stride;
        r.out_h = r.out_w = out;
        rows_.push_back(std::move(r));
    }

    void stem() {
        const auto& st = cfg_.stem;
        const auto& first = cfg_.stages.front();
        const bool patch = st.kind == StemKind::patchify;
        const int stride = patch ? st.patch_stride : 2;
        const int pad = patch ? 0 : (st.kernel - 1) / 2;
        spatial_ = conv("stem.conv", cfg_.input_channels, st.width, st.kernel, stride, pad, 1, 1, spatial_);
        norm("stem.norm", first.norm.kind, st.width, spatial_);
        act("stem.act", first.activation.kind, st.width, spatial_);
        if (st.kind == StemKind::conv_maxpool) {
            const int out = sized() ? conv_out(spatial_, 3, 2, 1, 1) : 0;
            pool("stem.pool", "max_pool", st.width, 3, 2, out);
            spatial_ = out;
        }
    }

    void block(int s, int b) {
        const auto& st = cfg_.stages[s];
        const std::string p = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".";
        const int cin = block_input_channels(cfg_, s, b);
        const int inner = st.inner_width();
        const int cout = st.width;
        const int stride = block_stride(st, b);
        const int in_spatial = spatial_;

        conv(p + "conv1", cin, inner, 1, 1, 0, 1, 1, in_spatial);
        if (st.norm.pattern[0]) norm(p + "norm1", st.norm.kind, inner, in_spatial);
        if (st.activation.pattern[0]) act(p + "act1", st.activation.kind, inner, in_spatial);

        const int pad = st.dilation * (st.kernel - 1) / 2;
        const int out_spatial = conv(p + "conv2", inner, inner, st.kernel, stride, pad, st.groups, st.dilation, in_spatial);
        if (st.norm.pattern[1]) norm(p + "norm2", st.norm.kind, inner, out_spatial);
        if (st.activation.pattern[1]) act(p + "act2", st.activation.kind, inner, out_spatial);

        if (st.se.enabled) {
            const int hidden = se_hidden_width(st.se, cin, inner);
            pool(p + "se.pool", "avg_pool", inner, 0, 1, sized() ? 1 : 0);
            linear(p + "se.reduce", inner, hidden, true);
            act(p + "se.act", st.se.activation, hidden, sized() ? 1 : 0);
            linear(p + "se.expand", hidden, inner, true);
        }

        conv(p + "conv3", inner, cout, 1, 1, 0, 1, 1, out_spatial);
        if (st.norm.pattern[2]) norm(p + "norm3", st.norm.kind, cout, out_spatial);

        if (block_has_projection(cin, cout, stride)) {
            conv(p + "shortcut.conv", cin, cout, 1, stride, 0, 1, 1, in_spatial);
            norm(p + "shortcut.norm", NormKind::batch_norm, cout, out_spatial);
        }
        if (st.activation.pattern[2]) act(p + "act3", st.activation.kind, cout, out_spatial);
        spatial_ = out_spatial;
    }

    void head() {
        const int c = cfg_.stages.back().width;
        pool("head.pool", "avg_pool", c, 0, 1, sized() ? 1 : 0);
        linear("head.fc", c, cfg_.num_classes, cfg_.head.bias);
    }

    const ArchConfig& cfg_;
    int spatial_;
    std::vector<LayerRow> rows_;
};

}  // namespace

int downsampling_factor(const ArchConfig& cfg) {
    int f = cfg.stem.kind == StemKind::patchify ? cfg.stem.patch_stride : 2;
    if (cfg.stem.kind == StemKind::conv_maxpool) f *= 2;
    for (const auto& st : cfg.stages) f *= st.stride;
    return f;
}

std::vector<LayerRow> enumerate_layers(const ArchConfig& cfg, std::optional<int> resolution) {
    validate(cfg);
    if (resolution) {
        const int f = downsampling_factor(cfg);
        if (*resolution < 1 || *resolution % f != 0)
            throw ResolutionError("resolution " + std::to_string(*resolution) + " not divisible by downsampling factor " +
                                  std::to_string(f));
    }
    return Walker(cfg, resolution).run();
}

ParamReport count_params(const ArchConfig& cfg) {
    ParamReport rep;
    for (auto& r : enumerate_layers(cfg, std::nullopt)) {
        if (r.tensors == 0 && r.kind != "batch_norm" && r.kind != "instance_norm") continue;
        rep.total += r.params;
        rep.tensor_count += r.tensors;
        rep.rows.push_back({std::move(r.path), std::move(r.kind), r.in_channels, r.out_channels, r.params});
    }
    return rep;
}

MacReport count_macs(const ArchConfig& cfg, int resolution) {
    MacReport rep;
    rep.resolution = resolution;
    for (auto& r : enumerate_layers(cfg, resolution)) {
        if (r.kind != "conv" && r.kind != "linear") continue;
        rep.total += r.macs;
        rep.rows.push_back({std::move(r.path), r.out_h, r.out_w, r.macs});
    }
    rep.total_gmacs = static_cast<double>(rep.total) / 1e9;
    return rep;
}

LayerTable layer_table(const ArchConfig& cfg, int resolution) {
    LayerTable t;
    t.resolution = resolution;
    t.rows = enumerate_layers(cfg, resolution);
    for (const auto& r : t.rows) {
        t.total_params += r.params;
        t.total_macs += r.macs;
        t.tensor_count += r.tensors;
    }
    return t;
}

std::vector<std::int64_t> stage_param_totals(const ArchConfig& cfg) {
    std::vector<std::int64_t> totals(cfg.stages.size(), 0);
    for (const auto& r : enumerate_layers(cfg, std::nullopt)) {
        if (r.path.rfind("stages.", 0) != 0) continue;
        const auto s = std::stoul(r.path.substr(7, r.path.find('.', 7) - 7));
        totals[s] += r.params;
    }
    return totals;
}

}  // namespace advarch
