#include "advarch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace advarch {

void Dataset::validate() const {
    if (images.ndim() != 4) throw DatasetError("images must be [N,C,H,W], got " + shape_string(images.shape));
    if (labels.empty()) throw DatasetError("dataset is empty");
    if (static_cast<std::size_t>(images.dim(0)) != labels.size())
        throw DatasetError("dimension mismatch: " + std::to_string(images.dim(0)) + " images but " +
                           std::to_string(labels.size()) + " labels");
    if (class_count < 1) throw DatasetError("class_count must be positive");
    for (int y : labels)
        if (y < 0 || y >= class_count)
            throw DatasetError("label " + std::to_string(y) + " outside [0," + std::to_string(class_count) + ")");
    for (float v : images.data)
        if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("pixel value outside [0,1]");
}

Tensor<float> Dataset::gather_images(const std::vector<std::size_t>& idx) const {
    const std::size_t per = images.size() / std::max<std::size_t>(1, labels.size());
    Tensor<float> out({static_cast<int>(idx.size()), images.dim(1), images.dim(2), images.dim(3)});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= labels.size()) throw DatasetError("sample index out of range");
        std::copy_n(images.ptr() + idx[i] * per, per, out.ptr() + i * per);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels.at(i));
    return out;
}

void SynthSpec::validate() const {
    if (class_count < 2) throw DatasetError("class_count must be at least 2");
    if (samples_per_class < 1) throw DatasetError("samples_per_class must be positive");
    if (channels < 1) throw DatasetError("channels must be positive");
    if (grid < 1 || resolution < 1 || resolution % grid != 0)
        throw DatasetError("grid must divide the resolution");
    if (!(margin > 0)) throw DatasetError("margin must be positive");
    if (shortcut < 0 || noise_std < 0) throw DatasetError("shortcut and noise_std must be non-negative");
    if (margin / 2 + shortcut > 0.5) throw DatasetError("margin/2 + shortcut must not exceed 0.5");
    if (active_blocks < 0 || active_blocks > grid * grid) throw DatasetError("active_blocks must be in [0, grid*grid]");
    const int nb = active_blocks ? active_blocks : grid * grid;
    if (nb < 62 && (1ULL << nb) < static_cast<unsigned long long>(class_count))
        throw DatasetError("grid too small for distinct class patterns");
}

SynthSpec benchmark_synth_spec(std::uint64_t seed) {
    SynthSpec s;
    s.samples_per_class = 200;
    s.active_blocks = 2;
    s.margin = 0.1;
    s.noise_std = 0.15;
    s.shortcut = 0.014;
    s.seed = seed;
    return s;
}

namespace {

struct Signs {
    std::vector<std::vector<int>> blocks;  // per class, one +/-1 per active block
    std::vector<int> offset;               // per class +/-1
};

Signs draw_signs(const SynthSpec& s) {
    s.validate();
    Rng r(derive_seed(s.seed, SeedPurpose::data));
    const int nb = s.active_blocks ? s.active_blocks : s.grid * s.grid;
    auto coin = [&r] { return r.uniform() < 0.5 ? -1 : 1; };
    Signs out;
    for (int k = 0; k < s.class_count; ++k) {
        std::vector<int> p(nb);
        if (k == 1 && s.class_count == 2) {
            for (int b = 0; b < nb; ++b) p[b] = -out.blocks[0][b];
        } else {
            do {
                for (auto& v : p) v = coin();
            } while (std::find(out.blocks.begin(), out.blocks.end(), p) != out.blocks.end());
        }
        out.blocks.push_back(std::move(p));
        out.offset.push_back(s.class_count == 2 ? (k == 0 ? 1 : -1) : coin());
    }
    return out;
}

}  // namespace

std::vector<Tensor<double>> synth_templates(const SynthSpec& s) {
    const Signs signs = draw_signs(s);
    const int R = s.resolution, bs = R / s.grid;
    std::vector<Tensor<double>> out;
    for (int k = 0; k < s.class_count; ++k) {
        Tensor<double> t({s.channels, R, R});
        for (int c = 0; c < s.channels; ++c)
            for (int h = 0; h < R; ++h)
                for (int w = 0; w < R; ++w) {
                    const std::size_t block = static_cast<std::size_t>((h / bs) * s.grid + w / bs);
                    const int sign = block < signs.blocks[k].size() ? signs.blocks[k][block] : 0;
                    t[(c * R + h) * R + w] = 0.5 + sign * s.margin / 2 + s.shortcut * signs.offset[k];
                }
        out.push_back(std::move(t));
    }
    return out;
}

double synth_margin(const SynthSpec& s) {
    const Signs signs = draw_signs(s);
    const int nb = s.grid * s.grid;
    double best = INFINITY;
    for (int j = 0; j < s.class_count; ++j)
        for (int k = j + 1; k < s.class_count; ++k) {
            // Pixels within a block are equal, so the l-inf distance is a max over blocks.
            double d = 0;
            for (int b = 0; b < nb; ++b) {
                auto sign = [&](int c) { return b < static_cast<int>(signs.blocks[c].size()) ? signs.blocks[c][b] : 0; };
                const double diff = (sign(j) - sign(k)) * s.margin / 2 + (signs.offset[j] - signs.offset[k]) * s.shortcut;
                d = std::max(d, std::abs(diff));
            }
            best = std::min(best, d);
        }
    return best;
}

Dataset synth_generate(const SynthSpec& s, std::uint64_t stream) {
    const auto templates = synth_templates(s);
    const int K = s.class_count, N = K * s.samples_per_class, R = s.resolution;
    Rng noise(derive_seed(s.seed + 0x9E3779B97F4A7C15ULL * (stream + 1), SeedPurpose::data));
    Dataset ds;
    ds.class_count = K;
    ds.images = Tensor<float>({N, s.channels, R, R});
    const std::size_t per = templates[0].size();
    for (int n = 0; n < N; ++n) {
        const int y = n % K;
        ds.labels.push_back(y);
        for (std::size_t i = 0; i < per; ++i) {
            const double v = templates[y][i] + (s.noise_std > 0 ? s.noise_std * noise.normal() : 0.0);
            ds.images[n * per + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return ds;
}

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

std::string hex(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);
    if (img.size() < 16) throw DatasetError("truncated payload: image header in " + images_path);
    if (lab.size() < 8) throw DatasetError("truncated payload: label header in " + labels_path);
    if (be32(img, 0) != 0x803) throw DatasetError("bad magic " + hex(be32(img, 0)) + " in " + images_path);
    if (be32(lab, 0) != 0x801) throw DatasetError("bad magic " + hex(be32(lab, 0)) + " in " + labels_path);

    const std::uint32_t n = be32(img, 4), h = be32(img, 8), w = be32(img, 12), nl = be32(lab, 4);
    if (n != nl)
        throw DatasetError("dimension mismatch: " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    if (n == 0 || h == 0 || w == 0) throw DatasetError("dimension mismatch: empty image set");
    const std::uint64_t pixels = std::uint64_t{n} * h * w;
    if (img.size() - 16 < pixels) throw DatasetError("truncated payload in " + images_path);
    if (lab.size() - 8 < n) throw DatasetError("truncated payload in " + labels_path);

    Dataset ds;
    ds.images = Tensor<float>({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
    for (std::uint64_t i = 0; i < pixels; ++i) ds.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
    int top = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels.push_back(lab[8 + i]);
        top = std::max(top, static_cast<int>(lab[8 + i]));
    }
    ds.class_count = top + 1;
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    ds.validate();
    if (ds.channels() != 1) throw DatasetError("IDX holds single-channel images only");
    if (ds.class_count > 256) throw DatasetError("IDX labels are single bytes");
    std::ofstream img(images_path, std::ios::binary), lab(labels_path, std::ios::binary);
    if (!img || !lab) throw DatasetError("cannot write IDX files");
    put_be32(img, 0x803);
    put_be32(img, static_cast<std::uint32_t>(ds.size()));
    put_be32(img, static_cast<std::uint32_t>(ds.height()));
    put_be32(img, static_cast<std::uint32_t>(ds.width()));
    for (float v : ds.images.data) img.put(static_cast<char>(std::lround(v * 255.0f)));
    put_be32(lab, 0x801);
    put_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) lab.put(static_cast<char>(y));
}

}  // namespace advarch
