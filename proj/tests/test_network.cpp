#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "advarch/analyzer.hpp"
#include "advarch/network.hpp"
#include "advarch/presets.hpp"

using namespace advarch;

namespace {

Tensor<float> random_input(std::vector<int> shape, std::uint64_t seed) {
    Rng r(seed);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(r.uniform());
    return t;
}

// A small configuration touching every optional feature of the block.
ArchConfig feature_config() {
    ArchConfig cfg = tiny_config(3);
    cfg.stages[0].depth = 3;
    cfg.stages[0].dense_ratio = 2;
    cfg.stages[0].dense_mode = DenseMode::concat;
    cfg.stages[1].depth = 2;
    cfg.stages[1].dense_ratio = 2;
    cfg.stages[1].se.enabled = true;
    cfg.stages[1].se.activation = ActivationKind::pssilu;
    cfg.stages[1].activation.kind = ActivationKind::prelu;
    cfg.stages[2].activation.kind = ActivationKind::psilu;
    cfg.stages[2].groups = 2;
    cfg.stages[2].kernel = 5;
    cfg.stages[3].norm.kind = NormKind::instance_norm;
    cfg.stages[3].activation.kind = ActivationKind::gelu;
    cfg.stages[3].dilation = 2;
    return cfg;
}

}  // namespace

TEST_CASE("resnet50 parameters mirror the analyzer rows") {
    auto net = NetworkF::instantiate(preset("resnet50"), 1);
    CHECK(net.parameters().size() == 161);
    CHECK(net.parameter_count() == 25557032);

    std::vector<std::string> expected;
    for (const auto& r : count_params(preset("resnet50")).rows) {
        if (r.kind == "conv") expected.push_back(r.path + ".weight");
        if (r.kind == "batch_norm" || r.kind == "linear") {
            expected.push_back(r.path + ".weight");
            expected.push_back(r.path + ".bias");
        }
    }
    REQUIRE(expected.size() == net.parameters().size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(net.parameters()[i].name == expected[i]);
    CHECK(net.buffers().size() == 2 * 53);
}

TEST_CASE("parameter count equals the analyzer for every preset") {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& name : preset_names()) {
        const ArchConfig cfg = preset(name);
        auto net = NetworkF::instantiate(cfg, 0);
        const auto rep = count_params(cfg);
        INFO(name);
        CHECK(net.parameter_count() == rep.total);
        CHECK(static_cast<int>(net.parameters().size()) == rep.tensor_count);
    }
    MESSAGE("instantiated " << preset_names().size() << " presets in "
                            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
}

TEST_CASE("initialization follows the documented scheme") {
    auto net = NetworkD::instantiate(preset("resnet50"), 3);
    for (const auto& p : net.parameters()) {
        const auto& v = p.var->value.data;
        if (p.name.find("norm") != std::string::npos) {
            const double want = p.name.ends_with(".weight") ? 1.0 : 0.0;
            CHECK(std::all_of(v.begin(), v.end(), [&](double x) { return x == want; }));
        }
    }
    // Fan-out normal: conv2 of stage 3 has 3*3*512 fan-out over 2.4M samples.
    const auto it = std::find_if(net.parameters().begin(), net.parameters().end(),
                                 [](const auto& p) { return p.name == "stages.3.blocks.0.conv2.weight"; });
    REQUIRE(it != net.parameters().end());
    const auto& v = it->var->value.data;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double stddev = std::sqrt(var / v.size());
    CHECK(std::abs(mean) < 1e-3);
    CHECK(stddev == doctest::Approx(std::sqrt(2.0 / (9 * 512))).epsilon(0.01));

    const auto& head = net.parameters().back();
    CHECK(head.name == "head.fc.bias");
    CHECK(std::all_of(head.var->value.data.begin(), head.var->value.data.end(), [](double x) { return x == 0; }));

    auto prm = NetworkD::instantiate(feature_config(), 3);
    for (const auto& p : prm.parameters()) {
        if (p.name.ends_with(".beta") || p.name.ends_with("act1.weight") || p.name.ends_with("act2.weight") ||
            p.name.ends_with("act3.weight"))
            CHECK(p.var->value.data == std::vector<double>{1.0});
        if (p.name.ends_with(".alpha")) CHECK(p.var->value.data == std::vector<double>{0.0});
    }
}

TEST_CASE("same seed gives bit-identical parameters") {
    auto a = NetworkF::instantiate(tiny_config(), 42);
    auto b = NetworkF::instantiate(tiny_config(), 42);
    auto c = NetworkF::instantiate(tiny_config(), 43);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        same = same && a.parameters()[i].var->value == b.parameters()[i].var->value;
        differs = differs || !(a.parameters()[i].var->value == c.parameters()[i].var->value);
    }
    CHECK(same);
    CHECK(differs);
}

TEST_CASE("tiny network forward shape and eval purity") {
    auto net = NetworkF::instantiate(tiny_config(), 7);
    const auto x = random_input({4, 3, 32, 32}, 1);
    auto logits = net.forward(x);
    CHECK(logits->value.shape == std::vector<int>{4, 2});
    for (float v : logits->value.data) CHECK(std::isfinite(v));

    net.eval();
    const auto y1 = net.predict(x);
    const auto y2 = net.predict(x);
    CHECK(y1 == y2);
}

TEST_CASE("zero input through resnet50 in eval mode") {
    auto net = NetworkF::instantiate(preset("resnet50"), 5);
    net.eval();
    const auto y = net.predict(Tensor<float>({1, 3, 64, 64}));
    CHECK(y.shape == std::vector<int>{1, 1000});
    CHECK(std::all_of(y.data.begin(), y.data.end(), [](float v) { return std::isfinite(v); }));
}

TEST_CASE("every parameter receives a gradient") {
    for (auto mode : {Mode::train, Mode::eval}) {
        auto net = NetworkD::instantiate(feature_config(), 11);
        net.set_mode(mode);
        const auto x = random_input({2, 3, 64, 64}, 2).cast<double>();
        auto logits = net.forward(x, true);
        CHECK(logits->value.shape == std::vector<int>{2, 3});
        const auto g = net.backward(ops::softmax_cross_entropy(logits, {0, 2}));
        REQUIRE(g.params.size() == net.parameters().size());
        for (std::size_t i = 0; i < g.params.size(); ++i) {
            INFO(g.params[i].first);
            CHECK(g.params[i].first == net.parameters()[i].name);
            CHECK(g.params[i].second.shape == net.parameters()[i].var->value.shape);
            const auto& d = g.params[i].second.data;
            CHECK(std::any_of(d.begin(), d.end(), [](double v) { return v != 0.0; }));
        }
        CHECK(g.input.shape == x.shape);
    }
}

TEST_CASE("feature config matches the analyzer") {
    const auto cfg = feature_config();
    CHECK(NetworkF::instantiate(cfg, 0).parameter_count() == count_params(cfg).total);
}

TEST_CASE("forward rejects bad inputs and backward needs a forward") {
    auto net = NetworkF::instantiate(tiny_config(), 1);
    CHECK_THROWS_AS(net.forward(Tensor<float>({1, 1, 32, 32})), ShapeError);
    CHECK_THROWS_WITH_AS(net.forward(Tensor<float>({1, 3, 30, 32})),
                         "input [1,3,30,32] not divisible by downsampling factor 32", ShapeError);
    auto loss = ops::sum(make_leaf(Tensor<float>({1}, 1.0f), true));
    CHECK_THROWS_WITH_AS(net.backward(loss), "backward called before forward", std::logic_error);
}

TEST_CASE("train mode updates running statistics") {
    auto net = NetworkD::instantiate(tiny_config(), 1);
    const auto before = net.buffers()[0].value;
    net.train();
    net.forward(random_input({2, 3, 32, 32}, 3).cast<double>());
    CHECK_FALSE(net.buffers()[0].value == before);
    const auto after = net.buffers()[0].value;
    net.eval();
    net.forward(random_input({2, 3, 32, 32}, 4).cast<double>());
    CHECK(net.buffers()[0].value == after);
}

TEST_CASE("clone and cast are independent copies") {
    auto net = NetworkF::instantiate(tiny_config(), 9);
    auto copy = net.clone();
    copy.parameters()[0].var->value[0] += 1.0f;
    CHECK(net.parameters()[0].var->value[0] != copy.parameters()[0].var->value[0]);

    net.eval();
    auto wide = net.cast<double>();
    const auto x = random_input({2, 3, 32, 32}, 5);
    const auto yf = net.predict(x);
    const auto yd = wide.predict(x.cast<double>());
    for (std::size_t i = 0; i < yf.size(); ++i) CHECK(yf[i] == doctest::Approx(yd[i]).epsilon(1e-4));
}

TEST_CASE("from_state restores parameters and rejects mismatches") {
    auto net = NetworkF::instantiate(tiny_config(), 9);
    std::vector<std::pair<std::string, Tensor<float>>> ps, bs;
    for (const auto& p : net.parameters()) ps.emplace_back(p.name, p.var->value);
    for (const auto& b : net.buffers()) bs.emplace_back(b.name, b.value);
    auto back = NetworkF::from_state(tiny_config(), ps, bs);
    for (std::size_t i = 0; i < ps.size(); ++i) CHECK(back.parameters()[i].var->value == ps[i].second);

    ps[0].second.shape = {1};
    ps[0].second.data = {0.0f};
    CHECK_THROWS_AS(NetworkF::from_state(tiny_config(), ps, bs), std::invalid_argument);
    ps.pop_back();
    CHECK_THROWS_AS(NetworkF::from_state(tiny_config(), ps, bs), std::invalid_argument);
}
