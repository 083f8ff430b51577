#include "advarch/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace advarch {

namespace {

using ojson = nlohmann::ordered_json;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in[off + i])} << (8 * i);
    return v;
}

void put_blob(std::string& out, const Tensor<float>& t) {
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

std::string serialize_checkpoint(const NetworkF& net) {
    ojson manifest;
    manifest["format"] = "advarch-checkpoint";
    manifest["version"] = kCheckpointVersion;
    manifest["dtype"] = "f32";
    manifest["config"] = ojson::parse(emit_config(net.config()));
    ojson tensors = ojson::array();
    std::size_t offset = 0;
    auto entry = [&](const std::string& name, const char* kind, const Tensor<float>& t) {
        const std::size_t bytes = t.size() * 4;
        tensors.push_back({{"name", name}, {"kind", kind}, {"shape", t.shape}, {"offset", offset}, {"length", bytes}});
        offset += bytes;
    };
    for (const auto& p : net.parameters()) entry(p.name, "param", p.var->value);
    for (const auto& b : net.buffers()) entry(b.name, "buffer", b.value);
    manifest["tensors"] = std::move(tensors);

    const std::string text = manifest.dump();
    std::string out(kCheckpointMagic);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& p : net.parameters()) put_blob(out, p.var->value);
    for (const auto& b : net.buffers()) put_blob(out, b.value);
    return out;
}

NetworkF deserialize_checkpoint(std::string_view bytes) {
    const std::size_t head = kCheckpointMagic.size() + 4;
    if (bytes.size() < head || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
        throw CheckpointError("not a checkpoint (bad magic)");
    const std::size_t mlen = get_u32(bytes, kCheckpointMagic.size());
    if (bytes.size() - head < mlen) throw CheckpointError("manifest truncated");

    ojson m;
    try {
        m = ojson::parse(bytes.substr(head, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("manifest is not valid JSON: ") + e.what());
    }
    try {
        const int version = m.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw CheckpointError("unknown checkpoint format version " + std::to_string(version));
        if (m.at("dtype").get<std::string>() != "f32") throw CheckpointError("unsupported dtype " + m.at("dtype").dump());

        const ArchConfig cfg = parse_config(m.at("config").dump());
        const std::string_view blobs = bytes.substr(head + mlen);
        std::size_t expected = 0;
        for (const auto& t : m.at("tensors")) expected += t.at("length").get<std::size_t>();
        if (blobs.size() != expected)
            throw CheckpointError("blob length mismatch: manifest describes " + std::to_string(expected) +
                                  " bytes, file holds " + std::to_string(blobs.size()));

        std::vector<std::pair<std::string, Tensor<float>>> params, buffers;
        for (const auto& t : m.at("tensors")) {
            const auto shape = t.at("shape").get<std::vector<int>>();
            const std::size_t off = t.at("offset").get<std::size_t>(), len = t.at("length").get<std::size_t>();
            if (len != shape_numel(shape) * 4 || off + len > blobs.size())
                throw CheckpointError("blob length mismatch for " + t.at("name").get<std::string>());
            Tensor<float> v(shape);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<float>(get_u32(blobs, off + 4 * i));
            const std::string kind = t.at("kind").get<std::string>();
            if (kind != "param" && kind != "buffer") throw CheckpointError("unknown tensor kind " + kind);
            (kind == "param" ? params : buffers).emplace_back(t.at("name").get<std::string>(), std::move(v));
        }
        return NetworkF::from_state(cfg, params, buffers);
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const NetworkF& net, const std::string& path) {
    const std::string bytes = serialize_checkpoint(net);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path);
}

NetworkF load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path);
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

}  // namespace advarch
