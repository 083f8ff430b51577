#include "advarch/budget_fit.hpp"

#include <cmath>
#include <future>
#include <thread>

#include "advarch/analyzer.hpp"

namespace advarch {

std::string_view to_string(FitMode m) {
    return m == FitMode::scale_all_widths ? "scale_all_widths" : "base_width_with_fixed_e";
}

FitMode parse_fit_mode(std::string_view s) {
    if (s == "scale_all_widths") return FitMode::scale_all_widths;
    if (s == "base_width_with_fixed_e") return FitMode::base_width_with_fixed_e;
    throw std::invalid_argument("unknown fit mode '" + std::string(s) + "'");
}

namespace {

bool width_valid(const StageConfig& st, int w) {
    StageConfig probe = st;
    probe.width = w;
    const int inner = probe.inner_width();
    return inner >= 1 && inner % st.groups == 0;
}

}  // namespace

int snap_width(const StageConfig& st, double target, int rounding) {
    constexpr long kSearch = 1 << 16;
    const long k0 = std::max(1L, std::lround(target / rounding));
    long up = k0;
    while (up < k0 + kSearch && !width_valid(st, static_cast<int>(up * rounding))) ++up;
    long down = k0 - 1;
    while (down >= 1 && !width_valid(st, static_cast<int>(down * rounding))) --down;
    const bool up_ok = up < k0 + kSearch;
    if (!up_ok && down < 1) throw FitError("no valid width near " + std::to_string(target));
    if (!up_ok) return static_cast<int>(down * rounding);
    if (down < 1) return static_cast<int>(up * rounding);
    // Nearest valid lattice point; ties go up so the map stays nondecreasing.
    const double du = up * rounding - target;
    const double dd = target - down * rounding;
    return static_cast<int>((dd < du ? down : up) * rounding);
}

std::vector<int> widths_at_scale(const ArchConfig& tmpl, FitMode mode, double s, int rounding) {
    std::vector<int> w(tmpl.stages.size());
    if (mode == FitMode::scale_all_widths) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = snap_width(tmpl.stages[i], s * tmpl.stages[i].width, rounding);
        return w;
    }
    const double base = tmpl.stages[0].width;
    w[0] = snap_width(tmpl.stages[0], s * base, rounding);
    for (std::size_t i = 1; i < w.size(); ++i)
        w[i] = snap_width(tmpl.stages[i], w[0] * (tmpl.stages[i].width / base), rounding);
    return w;
}

namespace {

ArchConfig apply_widths(ArchConfig cfg, const std::vector<int>& w) {
    for (std::size_t i = 0; i < w.size(); ++i) cfg.stages[i].width = w[i];
    return cfg;
}

}  // namespace

FitResult fit_width_detailed(const ArchConfig& tmpl, const FitConstraints& c) {
    validate(tmpl);
    if (c.budget <= 0) throw FitError("budget must be positive");
    if (c.rounding < 1) throw FitError("rounding must be a positive integer");

    auto params_at = [&](double s) { return count_params(apply_widths(tmpl, widths_at_scale(tmpl, c.free, s, c.rounding))).total; };

    double lo = kMinScale;
    double hi = kMaxScale;
    if (params_at(hi) < c.budget || params_at(lo) > c.budget)
        throw FitError("budget " + std::to_string(c.budget) + " unreachable within scale bounds [0.05, 20]");

    // count_params is nondecreasing in s, so bisect to the step where it crosses the budget.
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (params_at(mid) >= c.budget ? hi : lo) = mid;
    }

    FitResult best;
    bool have = false;
    auto consider = [&](const std::vector<int>& w, double s) {
        FitResult r;
        r.config = apply_widths(tmpl, w);
        r.params = count_params(r.config).total;
        r.scale = s;
        const auto err = std::llabs(r.params - c.budget);
        const auto best_err = std::llabs(best.params - c.budget);
        if (!have || err < best_err || (err == best_err && r.params < best.params)) {
            best = std::move(r);
            have = true;
        }
    };
    const auto w_lo = widths_at_scale(tmpl, c.free, lo, c.rounding);
    const auto w_hi = widths_at_scale(tmpl, c.free, hi, c.rounding);
    consider(w_lo, lo);
    consider(w_hi, hi);

    if (c.free == FitMode::scale_all_widths) {
        // Stages cross lattice steps at different s, so mixing per-stage choices between
        // (and one step beyond) the two bracketing configs can land closer to the budget.
        std::vector<std::vector<int>> options(w_lo.size());
        for (std::size_t i = 0; i < w_lo.size(); ++i) {
            const int a = std::min(w_lo[i], w_hi[i]) - c.rounding;
            const int b = std::max(w_lo[i], w_hi[i]) + c.rounding;
            for (int v = std::max(c.rounding, a); v <= b; v += c.rounding)
                if (width_valid(tmpl.stages[i], v)) options[i].push_back(v);
        }
        std::vector<int> w(w_lo.size());
        auto walk = [&](auto&& self, std::size_t i) -> void {
            if (i == w.size()) {
                consider(w, static_cast<double>(w[0]) / tmpl.stages[0].width);
                return;
            }
            for (int v : options[i]) {
                w[i] = v;
                self(self, i + 1);
            }
        };
        walk(walk, 0);
    }
    if (std::llabs(best.params - c.budget) > c.tolerance * static_cast<double>(c.budget))
        throw FitError("closest fit has " + std::to_string(best.params) + " parameters, outside tolerance of budget " +
                       std::to_string(c.budget));
    return best;
}

ArchConfig fit_width(const ArchConfig& tmpl, const FitConstraints& c) { return fit_width_detailed(tmpl, c).config; }

std::vector<int> scale_depth(const std::vector<int>& depths, double factor) {
    if (!(factor > 0.0)) throw std::invalid_argument("depth scale factor must be positive");
    std::vector<int> out;
    out.reserve(depths.size());
    for (int d : depths) out.push_back(std::max(1, round_half_away(d * factor)));
    return out;
}

ArchConfig with_depths(ArchConfig cfg, const std::vector<int>& depths) {
    if (depths.empty()) throw std::invalid_argument("empty depth vector");
    while (cfg.stages.size() < depths.size()) {
        StageConfig next = cfg.stages.back();
        next.stride = 2;
        cfg.stages.push_back(next);
    }
    cfg.stages.resize(depths.size());
    for (std::size_t i = 0; i < depths.size(); ++i) cfg.stages[i].depth = depths[i];
    return cfg;
}

std::vector<SweepRow> sweep_depth_width(const ArchConfig& base, const std::vector<std::vector<int>>& depth_grid,
                                        const FitConstraints& c, int jobs) {
    auto run_row = [&](const std::vector<int>& depths) {
        SweepRow row;
        row.depths = depths;
        try {
            if (depths.size() != base.stages.size())
                throw FitError("depth vector length " + std::to_string(depths.size()) + " does not match " +
                               std::to_string(base.stages.size()) + " stages");
            auto r = fit_width_detailed(with_depths(base, depths), c);
            row.params = r.params;
            row.config = std::move(r.config);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    };

    std::vector<SweepRow> rows(depth_grid.size());
    const std::size_t workers = static_cast<std::size_t>(std::max(1, jobs));
    for (std::size_t start = 0; start < depth_grid.size(); start += workers) {
        std::vector<std::future<SweepRow>> batch;
        for (std::size_t i = start; i < std::min(depth_grid.size(), start + workers); ++i)
            batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, run_row,
                                       std::cref(depth_grid[i])));
        for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
    }
    return rows;
}

}  // namespace advarch
