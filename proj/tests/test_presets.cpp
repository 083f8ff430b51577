#include <cmath>
#include <set>

#include "advarch/analyzer.hpp"
#include "advarch/budget_fit.hpp"
#include "advarch/presets.hpp"
#include "doctest.h"

using namespace advarch;

TEST_CASE("every catalog entry builds, validates and matches its published total") {
    std::set<std::string> names;
    for (const auto& info : preset_catalog()) {
        CAPTURE(info.name);
        CHECK(names.insert(info.name).second);
        const auto cfg = preset(info.name);
        CHECK_NOTHROW(validate(cfg));
        CHECK(cfg.name == info.name);
        REQUIRE(info.reported_mparams.has_value());
        const double m = static_cast<double>(count_params(cfg).total) / 1e6;
        const double rep = *info.reported_mparams;
        if (info.fitted)
            CHECK(std::fabs(m - rep) <= 0.005 * rep);
        else
            CHECK(std::fabs(m - rep) <= 0.005 + 1e-9);
    }
}

TEST_CASE("resnet50 preset") {
    const auto c = preset("resnet50");
    CHECK(c.depths() == std::vector<int>{3, 4, 6, 3});
    CHECK(c.widths() == std::vector<int>{256, 512, 1024, 2048});
    for (const auto& st : c.stages) {
        CHECK(st.groups == 1);
        CHECK(st.bottleneck_multiplier == 0.25);
    }
    CHECK(c.stem.kind == StemKind::conv_maxpool);
    CHECK(c.stem.width == 64);
    CHECK(c.stem.kernel == 7);
}

TEST_CASE("robarch-l preset") {
    const auto c = preset("robarch-l");
    CHECK(c.depths() == std::vector<int>{7, 11, 18, 1});
    CHECK(c.widths() == std::vector<int>{512, 1024, 2016, 4032});
    for (const auto& st : c.stages) {
        CHECK(st.groups == 2);
        CHECK(st.bottleneck_multiplier == 0.25);
        CHECK(st.se.enabled);
        CHECK(st.activation.kind == ActivationKind::silu);
        CHECK(st.norm.pattern == std::array<bool, 3>{false, true, true});
    }
    CHECK(c.stem.kind == StemKind::conv_stage_downsample);
    CHECK(c.stem.width == 96);
    CHECK(count_params(c).total == 104'065'776);
}

TEST_CASE("m3 widths on the small structure") {
    const auto c = preset("m3");
    CHECK(std::fabs(count_params(c).total / 1e6 - 46.16) <= 0.005);
    auto s7 = preset("s7");
    for (std::size_t i = 0; i < 4; ++i) s7.stages[i].width = c.stages[i].width;
    s7.name = "m3";
    CHECK(s7 == c);
}

TEST_CASE("roadmap steps differ only in their named edit") {
    const auto s5 = preset("s5");
    auto s7 = preset("s7");
    s7.name = "s5";
    for (auto& st : s7.stages) st.norm.pattern = {true, true, true};
    CHECK(s5 == s7);

    auto m2 = preset("m2");
    CHECK(m2.depths() == scale_depth(preset("s7").depths(), 1.4));
    CHECK(preset("l3").depths() == std::vector<int>{8, 13, 21, 2});
    CHECK(preset("l4").depths() == scale_depth({5, 8, 13, 1}, 2.0));
}

TEST_CASE("small and medium fits") {
    const auto s = preset("robarch-s");
    const auto m = preset("robarch-m");
    CHECK(std::fabs(count_params(s).total - 26'140'000.0) <= 0.005 * 26'140'000);
    CHECK(std::fabs(count_params(m).total - 45'900'000.0) <= 0.005 * 45'900'000);
    for (const auto* c : {&s, &m})
        for (const auto& st : c->stages) {
            CHECK(st.width % 8 == 0);
            CHECK(st.inner_width() % st.groups == 0);
        }
    // Repeated lookups return the same cached fit.
    CHECK(preset("robarch-s") == s);
}

TEST_CASE("unknown preset") {
    CHECK_THROWS_AS(preset("resnet51"), UnknownPresetError);
    CHECK_THROWS_WITH(preset("nope"), "unknown preset 'nope'");
}
