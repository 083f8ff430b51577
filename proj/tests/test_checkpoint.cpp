#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>

#include "advarch/checkpoint.hpp"
#include "advarch/presets.hpp"
#include "advarch/trainer.hpp"

using namespace advarch;
namespace fs = std::filesystem;

namespace {

// Parametric activations, SE and instance norm so every tensor kind is exercised.
ArchConfig feature_rich() {
    ArchConfig cfg = tiny_config(2);
    cfg.stages[1].se.enabled = true;
    cfg.stages[1].se.activation = ActivationKind::pssilu;
    cfg.stages[1].activation.kind = ActivationKind::prelu;
    cfg.stages[2].activation.kind = ActivationKind::psilu;
    cfg.stages[3].norm.kind = NormKind::instance_norm;
    return cfg;
}

struct Trained {
    NetworkF net;
    Dataset holdout;
};

// Briefly trained so that running statistics differ from their initial values.
Trained trained() {
    SynthSpec s = benchmark_synth_spec(5);
    s.samples_per_class = 32;
    SynthSpec hs = s;
    hs.samples_per_class = 16;
    auto net = NetworkF::instantiate(feature_rich(), 5);
    auto holdout = synth_generate(hs, 1);
    TrainConfig cfg = benchmark_train_config(TrainMode::fast_at, 5);
    cfg.epochs = 2;
    cfg.eval_every_epoch = false;
    fast_at(net, synth_generate(s, 0), holdout, cfg);
    return {std::move(net), std::move(holdout)};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "advarch_test_checkpoint";
    fs::create_directories(dir);
    return dir / name;
}

void require_same_state(const NetworkF& a, const NetworkF& b) {
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters()[i].name == b.parameters()[i].name);
        CHECK(a.parameters()[i].var->value == b.parameters()[i].var->value);
    }
    REQUIRE(a.buffers().size() == b.buffers().size());
    for (std::size_t i = 0; i < a.buffers().size(); ++i) {
        CHECK(a.buffers()[i].name == b.buffers()[i].name);
        CHECK(a.buffers()[i].value == b.buffers()[i].value);
    }
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    auto t = trained();
    bool moved = false;
    for (const auto& b : t.net.buffers())
        if (b.name.ends_with("running_mean"))
            for (float v : b.value.data) moved |= v != 0.0f;
    REQUIRE(moved);

    const std::string bytes = serialize_checkpoint(t.net);
    const auto back = deserialize_checkpoint(bytes);
    require_same_state(t.net, back);
    CHECK(emit_config(back.config()) == emit_config(t.net.config()));
    CHECK(serialize_checkpoint(back) == bytes);

    save_checkpoint(t.net, scratch("net.ckpt").string());
    require_same_state(t.net, load_checkpoint(scratch("net.ckpt").string()));
}

TEST_CASE("reloaded checkpoint gives identical robust accuracy") {
    auto t = trained();
    auto back = deserialize_checkpoint(serialize_checkpoint(t.net));
    const auto a = robust_accuracy(t.net, t.holdout, standard_budgets(5), 3);
    const auto b = robust_accuracy(back, t.holdout, standard_budgets(5), 3);
    CHECK(a.natural_correct == b.natural_correct);
    for (std::size_t i = 0; i < a.per_eps.size(); ++i) CHECK(a.per_eps[i].correct == b.per_eps[i].correct);
}

TEST_CASE("layout: magic, manifest length, manifest, blobs") {
    auto net = NetworkF::instantiate(tiny_config(2), 1);
    const std::string bytes = serialize_checkpoint(net);
    CHECK(bytes.substr(0, 8) == kCheckpointMagic);
    std::uint32_t mlen = 0;
    for (int i = 0; i < 4; ++i) mlen |= std::uint32_t{static_cast<unsigned char>(bytes[8 + i])} << (8 * i);
    const std::string manifest = bytes.substr(12, mlen);
    CHECK(manifest.find("\"version\":1") != std::string::npos);
    CHECK(manifest.find("\"dtype\":\"f32\"") != std::string::npos);
    std::size_t elements = 0;
    for (const auto& p : net.parameters()) elements += p.var->value.size();
    for (const auto& b : net.buffers()) elements += b.value.size();
    CHECK(bytes.size() == 12 + mlen + 4 * elements);

    // The first blob is the first parameter, little-endian.
    const float first = net.parameters().front().var->value[0];
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t{static_cast<unsigned char>(bytes[12 + mlen + i])} << (8 * i);
    CHECK(std::bit_cast<float>(bits) == first);
}

TEST_CASE("corrupt checkpoints are rejected") {
    auto net = NetworkF::instantiate(tiny_config(2), 1);
    const std::string bytes = serialize_checkpoint(net);

    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)),
                         doctest::Contains("blob length mismatch"), CheckpointError);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes + "xxxx"), doctest::Contains("blob length mismatch"),
                         CheckpointError);

    std::string v2 = bytes;
    v2.replace(v2.find("\"version\":1"), 11, "\"version\":7");
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(v2), doctest::Contains("unknown checkpoint format version 7"),
                         CheckpointError);

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(magic), doctest::Contains("bad magic"), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 20)), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt").string()), CheckpointError);
}
