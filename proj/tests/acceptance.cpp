// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Tolerances are pinned here and printed next to the measured values.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "advarch/adversarial.hpp"
#include "advarch/analyzer.hpp"
#include "advarch/budget_fit.hpp"
#include "advarch/checkpoint.hpp"
#include "advarch/dataset.hpp"
#include "advarch/grad_check.hpp"
#include "advarch/guidelines.hpp"
#include "advarch/presets.hpp"
#include "advarch/reports.hpp"
#include "advarch/trainer.hpp"
#include "depth_study.hpp"
#include "resnet50_oracle.hpp"

using namespace advarch;
using S = FindingStatus;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks for one criterion; the first few are printed.
struct Check {
    std::vector<std::string> failures;
    std::ostringstream notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    template <typename V>
    void note(const std::string& key, V value) {
        notes << (notes.tellp() > 0 ? " " : "") << key << "=" << value;
    }
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double mparams(const ArchConfig& c) { return static_cast<double>(count_params(c).total) / 1e6; }

ArchConfig edit(ArchConfig c, const std::function<void(StageConfig&)>& f) {
    for (auto& s : c.stages) f(s);
    return c;
}

// ---- 1. golden parameter counts ----------------------------------------------

void golden_counts(Check& ck) {
    struct Golden {
        std::string name;
        ArchConfig cfg;
        double expected;  // millions
        double tol;       // millions
    };
    const auto base = preset("resnet50");
    const std::vector<Golden> rows = {
        {"kernel5", edit(base, [](StageConfig& s) { s.kernel = 5; }), 45.68, 0.005},
        {"kernel7", edit(base, [](StageConfig& s) { s.kernel = 7; }), 75.86, 0.005},
        {"se-relu", preset("se-relu"), 27.73, 0.005},
        {"d-5-8-13-1", preset("d-5-8-13-1"), 25.71, 0.005},
        {"W-512-768-1152-1728", preset("e-1.5"), 25.95, 0.005},
        {"g-2", preset("g-2"), 26.02, 0.005},
        {"norm-0-bn-bn", preset("norm-0-bn-bn"), 25.55, 0.005},
        {"norm-in", preset("norm-in"), 25.51, 0.005},
        {"stem-width-96", preset("stem-width-96"), 25.57, 0.005},
        {"robarch-l", preset("robarch-l"), 104.07, 0.01 * 104.07},
        {"m3", preset("m3"), 46.16, 0.01 * 46.16},
    };

    auto t0 = Clock::now();
    const auto oracle = oracle::resnet50_oracle(224);
    const auto p = count_params(base);
    ck.expect(p.total == oracle.params && p.total == 25'557'032,
              "resnet50 total " + std::to_string(p.total) + " vs oracle " + std::to_string(oracle.params));
    ck.expect(p.tensor_count == oracle.tensors, "resnet50 tensor count " + std::to_string(p.tensor_count));
    ck.expect(seconds_since(t0) < 1.0, "resnet50 count took >= 1 s");
    ck.note("resnet50", p.total);

    for (const auto& g : rows) {
        t0 = Clock::now();
        const double got = mparams(g.cfg);
        const double dt = seconds_since(t0);
        ck.expect(std::abs(got - g.expected) <= g.tol + 1e-12,
                  g.name + " " + fmt(got) + "M vs " + fmt(g.expected, 2) + "M +/- " + fmt(g.tol, 3));
        ck.expect(dt < 1.0, g.name + " took >= 1 s");
    }
    const double se_delta = mparams(preset("se-relu")) - mparams(base);
    ck.expect(std::abs(se_delta - 2.17) <= 0.005, "se delta " + fmt(se_delta));
    ck.note("se_delta", fmt(se_delta, 3));
    ck.note("robarch-l", fmt(mparams(preset("robarch-l")), 2));
    ck.note("m3", fmt(mparams(preset("m3")), 2));
}

// ---- 2. budget fitting ----------------------------------------------------------

void budget_fitting(Check& ck) {
    // Start from a deliberately off-budget template with the small model's structure.
    auto tmpl = preset("robarch-s");
    for (int i = 0; i < 4; ++i) tmpl.stages[i].width = 256 << i;

    FitConstraints c;
    c.budget = 26'140'000;
    const auto s = fit_width_detailed(tmpl, c);
    const double s_dev = 100.0 * static_cast<double>(s.params - c.budget) / static_cast<double>(c.budget);
    ck.expect(std::abs(s_dev) <= 0.5, "robarch-s deviation " + fmt(s_dev) + "%");
    ck.expect(s.params == count_params(s.config).total, "robarch-s reported params disagree with the analyzer");

    const auto m_depths = scale_depth({5, 8, 13, 1}, 1.4);
    ck.expect(m_depths == std::vector<int>{7, 11, 18, 1}, "scale_depth x1.4 gave " + dash_join(m_depths));
    const auto l_depths = scale_depth({5, 8, 13, 1}, 2.0);
    ck.expect(l_depths == std::vector<int>{10, 16, 26, 2}, "scale_depth x2 gave " + dash_join(l_depths));

    c.budget = 45'900'000;
    const auto m = fit_width_detailed(with_depths(tmpl, m_depths), c);
    const double m_dev = 100.0 * static_cast<double>(m.params - c.budget) / static_cast<double>(c.budget);
    ck.expect(std::abs(m_dev) <= 0.5, "robarch-m deviation " + fmt(m_dev) + "%");

    ck.note("s", dash_join(s.config.widths()) + "/" + std::to_string(s.params));
    ck.note("m", dash_join(m.config.widths()) + "/" + std::to_string(m.params));
}

// ---- 3. MACs ----------------------------------------------------------------------

void macs(Check& ck) {
    const auto t0 = Clock::now();
    const auto r = count_macs(preset("resnet50"), 224);
    const double dt = seconds_since(t0);
    const auto oracle = oracle::resnet50_oracle(224);
    const double rel = std::abs(static_cast<double>(r.total - oracle.macs)) / static_cast<double>(oracle.macs);
    ck.expect(rel <= 0.02, "relative MAC error " + fmt(rel, 6));
    ck.expect(dt < 1.0, "MAC count took " + fmt(dt, 3) + " s");
    ck.note("gmacs", fmt(r.total_gmacs, 4));
    ck.note("oracle_gmacs", fmt(static_cast<double>(oracle.macs) / 1e9, 4));
}

// ---- 4. gradients ---------------------------------------------------------------

void gradients(Check& ck) {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_name;
    int cases = 0;
    for (const auto& name : grad_check_primitives())
        for (const auto& c : random_grad_cases(name, 5, 2024)) {
            const auto rep = grad_check(c, DType::f64, 1e-5);
            ++cases;
            ck.expect(rep.pass && rep.checked > 0, name + " rel err " + fmt(rep.max_rel_error, 10));
            if (rep.max_rel_error > worst) worst = rep.max_rel_error, worst_name = name;
        }
    ck.expect(grad_check_primitives().size() == 19, "primitive count " + std::to_string(grad_check_primitives().size()));
    double net_worst = 0;
    for (bool train_mode : {false, true}) {
        const auto rep = grad_check_network(tiny_config(2), {2, 3, 32, 32}, 5, 1e-4, train_mode, 96);
        ck.expect(rep.pass, std::string("tiny network (") + (train_mode ? "train" : "eval") + ") rel err " +
                                fmt(rep.max_rel_error, 8));
        net_worst = std::max(net_worst, rep.max_rel_error);
    }
    const double dt = seconds_since(t0);
    ck.expect(dt < 60.0, "gradient suite took " + fmt(dt, 1) + " s");
    ck.note("cases", cases);
    ck.note("worst", worst_name + ":" + fmt(worst, 9));
    ck.note("network", fmt(net_worst, 9));
}

// ---- 5. attack invariants -------------------------------------------------------

// loss_i = -y_i * (w . x_i)
class LinearLoss : public Objective<double> {
public:
    LinearLoss(std::vector<double> w, std::vector<int> y) : w_(std::move(w)), y_(std::move(y)) {}
    std::vector<double> loss(const Tensor<double>& x) override {
        std::vector<double> out;
        for (std::size_t i = 0; i < y_.size(); ++i) {
            double s = 0;
            for (std::size_t j = 0; j < w_.size(); ++j) s += w_[j] * x[i * w_.size() + j];
            out.push_back(-y_[i] * s);
        }
        return out;
    }
    Tensor<double> grad(const Tensor<double>& x) override {
        Tensor<double> g(x.shape);
        for (std::size_t i = 0; i < y_.size(); ++i)
            for (std::size_t j = 0; j < w_.size(); ++j) g[i * w_.size() + j] = -y_[i] * w_[j];
        return g;
    }

private:
    std::vector<double> w_;
    std::vector<int> y_;
};

// -(x - c)^T A (x - c) on one 2-d sample.
class QuadraticLoss : public Objective<double> {
public:
    QuadraticLoss(double a, double b, double d, double c0, double c1) : a_(a), b_(b), d_(d), c0_(c0), c1_(c1) {}
    double value(double x0, double x1) const {
        const double u = x0 - c0_, v = x1 - c1_;
        return -(a_ * u * u + 2 * b_ * u * v + d_ * v * v);
    }
    std::vector<double> loss(const Tensor<double>& x) override { return {value(x[0], x[1])}; }
    Tensor<double> grad(const Tensor<double>& x) override {
        const double u = x[0] - c0_, v = x[1] - c1_;
        return Tensor<double>({1, 2}, {-2 * (a_ * u + b_ * v), -2 * (b_ * u + d_ * v)});
    }

private:
    double a_, b_, d_, c0_, c1_;
};

// A fresh random direction on every call, so iterates wander over the whole ball.
class ShakyLoss : public Objective<double> {
public:
    explicit ShakyLoss(std::uint64_t seed) : rng_(seed) {}
    std::vector<double> loss(const Tensor<double>& x) override { return std::vector<double>(x.dim(0), 0.0); }
    Tensor<double> grad(const Tensor<double>& x) override {
        Tensor<double> g(x.shape);
        for (auto& v : g.data) v = rng_.uniform() < 0.1 ? 0.0 : rng_.uniform(-1, 1);
        return g;
    }

private:
    Rng rng_;
};

void attacks(Check& ck) {
    // Feasibility of every PGD iterate.
    Rng r(5);
    long steps = 0, violations = 0;
    while (steps < 10000) {
        const double eps = r.uniform() < 0.1 ? 0.0 : r.uniform(0, 16.0 / 255);
        AttackConfig c = AttackConfig::pgd(eps, 1 + static_cast<int>(r.below(50)), 1 + static_cast<int>(r.below(2)));
        c.alpha = eps == 0 ? 0.0 : r.uniform(0.1, 2.0) * eps;
        c.rand_init = r.uniform() < 0.7;
        Tensor<double> x({3, 2, 3, 3});
        for (auto& v : x.data) {
            const double u = r.uniform();
            v = u < 0.1 ? 0.0 : u > 0.9 ? 1.0 : r.uniform();
        }
        ShakyLoss obj(r.next_u64());
        Rng arng(r.next_u64());
        pgd<double>(obj, x, c, arng, [&](int, int, const Tensor<double>& it) {
            ++steps;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(it[i] - x[i]) > eps + 1e-7 || it[i] < 0 || it[i] > 1) ++violations;
        });
    }
    ck.expect(violations == 0, std::to_string(violations) + " infeasible coordinates");
    ck.note("pgd_steps", steps);

    // FGSM against the brute-force corner optimum.
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 1 + static_cast<int>(r.below(10));
        std::vector<double> w(d);
        for (auto& v : w) v = r.uniform() < 0.1 ? 0.0 : r.uniform(-1, 1);
        const int y = r.uniform() < 0.5 ? -1 : 1;
        Tensor<double> x({1, d});
        for (auto& v : x.data) v = r.uniform() < 0.2 ? r.uniform(0, 0.05) : r.uniform();
        const double eps = r.uniform(0.001, 0.2);
        LinearLoss obj(w, {y});
        Rng arng(trial);
        const double got = obj.loss(fgsm<double>(obj, x, AttackConfig::fgsm(eps), arng))[0];
        double best = -INFINITY;
        for (int mask = 0; mask < (1 << d); ++mask) {
            Tensor<double> corner = x;
            for (int j = 0; j < d; ++j)
                corner[j] = (mask >> j) & 1 ? std::min(1.0, x[j] + eps) : std::max(0.0, x[j] - eps);
            best = std::max(best, obj.loss(corner)[0]);
        }
        if (got != best) ++mismatches;
    }
    ck.expect(mismatches == 0, std::to_string(mismatches) + " FGSM trials off the corner optimum");
    ck.note("fgsm_trials", 200);

    // PGD-100 against a grid search over the eps box.
    struct Quad {
        double a, b, d, c0, c1;
    };
    const Tensor<double> x({1, 2}, {0.5, 0.5});
    const double eps = 0.1;
    double worst = 0;
    for (const auto& q : std::vector<Quad>{{1, 0, 1, 0.7, 0.53}, {2, 0.5, 1, 0.9, 0.45}, {1, -0.8, 1, 0.55, 0.8},
                                           {3, 1, 1, 0.2, 0.56}}) {
        QuadraticLoss obj(q.a, q.b, q.d, q.c0, q.c1);
        Rng rng(1);
        const auto adv = pgd<double>(obj, x, AttackConfig::pgd(eps, 100), rng);
        const int G = 2000;
        double best = -INFINITY;
        for (int i = 0; i <= G; ++i)
            for (int j = 0; j <= G; ++j)
                best = std::max(best, obj.value(0.5 - eps + 2 * eps * i / G, 0.5 - eps + 2 * eps * j / G));
        worst = std::max(worst, std::abs(obj.value(adv[0], adv[1]) - best));
    }
    ck.expect(worst < 1e-3, "PGD-100 gap to grid optimum " + fmt(worst, 8));
    ck.note("pgd100_gap", fmt(worst, 8));
}

// ---- 6. desk-scale adversarial training -----------------------------------------

double trained_robust_accuracy(TrainMode mode, std::uint64_t seed) {
    SynthSpec hs = benchmark_synth_spec(seed);
    hs.samples_per_class = 100;
    const auto train_set = synth_generate(benchmark_synth_spec(seed), 0);
    const auto holdout = synth_generate(hs, 1);
    auto net = NetworkF::instantiate(tiny_config(2), seed);
    TrainConfig cfg = benchmark_train_config(mode, seed);
    cfg.eval_every_epoch = false;
    train(net, train_set, holdout, cfg);
    return robust_accuracy(net, holdout, {AttackConfig::pgd(4.0 / 255, 10)}, seed).adversarial_accuracy;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

void adversarial_training(Check& ck) {
    const auto t0 = Clock::now();
    std::vector<double> fa, nat;
    for (std::uint64_t seed : {1, 2, 3}) {
        fa.push_back(trained_robust_accuracy(TrainMode::fast_at, seed));
        nat.push_back(trained_robust_accuracy(TrainMode::natural, seed));
    }
    const double dt = seconds_since(t0);
    const double mfa = median3(fa), mnat = median3(nat);
    ck.expect(mfa >= 0.9, "fast_at median robust accuracy " + fmt(mfa, 3));
    ck.expect(mfa - mnat >= 0.20, "gap over natural " + fmt(100 * (mfa - mnat), 1) + " points");
    ck.expect(dt <= 600.0, "training took " + fmt(dt, 1) + " s");
    ck.note("fast_at", fmt(fa[0], 3) + "/" + fmt(fa[1], 3) + "/" + fmt(fa[2], 3));
    ck.note("natural", fmt(nat[0], 3) + "/" + fmt(nat[1], 3) + "/" + fmt(nat[2], 3));
    ck.note("median_gap_pts", fmt(100 * (mfa - mnat), 1));
}

// ---- 7. guideline linter --------------------------------------------------------

void guidelines(Check& ck) {
    int rows = 0;
    for (const auto& row : depth_study_rows()) {
        ++rows;
        const auto got = check_depth_rule(row.d);
        ck.expect(got.has_value() && *got == row.expected, "depth rule on " + dash_join(row.d));
    }
    int presets = 0;
    for (const auto& info : preset_catalog()) {
        if (info.name.rfind("d-", 0) != 0) continue;
        ++presets;
        const auto cfg = preset(info.name);
        const auto direct = check_depth_rule(cfg.depths());
        const auto status = evaluate_guidelines(cfg).findings.at(1).status;
        if (cfg.stages.size() != 4)
            ck.expect(!direct && status == S::not_applicable, info.name + " should be not applicable");
        else
            ck.expect(direct && (status == S::satisfied) == *direct, info.name + " report disagrees with the rule");
    }

    auto expect_status = [&](const std::string& name, int id, S want) {
        const auto got = evaluate_guidelines(preset(name)).findings.at(static_cast<std::size_t>(id - 1)).status;
        ck.expect(got == want, name + " G" + std::to_string(id) + " is " + std::string(to_string(got)));
    };
    const std::vector<std::pair<int, S>> resnet = {
        {1, S::satisfied},  {2, S::violated},  {3, S::satisfied}, {6, S::violated},        {7, S::violated},
        {8, S::satisfied},  {10, S::satisfied}, {11, S::advisory}, {12, S::satisfied},      {13, S::violated},
        {14, S::not_applicable}, {15, S::satisfied}, {16, S::violated}, {4, S::advisory}, {5, S::advisory},
        {9, S::advisory},   {17, S::advisory}, {18, S::advisory}};
    for (const auto& [id, want] : resnet) expect_status("resnet50", id, want);
    expect_status("dilation2", 10, S::violated);
    expect_status("norm-in", 15, S::violated);
    for (int id : {1, 2, 3, 6, 7, 8, 10, 11, 12, 13, 14, 15, 16}) expect_status("robarch-s", id, S::satisfied);

    ck.note("depth_rows", rows);
    ck.note("depth_presets", presets);
}

// ---- 8. determinism ------------------------------------------------------------

void determinism(Check& ck) {
    SynthSpec s = benchmark_synth_spec(7);
    s.samples_per_class = 32;
    SynthSpec hs = s;
    hs.samples_per_class = 16;
    const auto train_set = synth_generate(s, 0);
    const auto holdout = synth_generate(hs, 1);
    ck.expect(synth_generate(s, 0).images == train_set.images, "synthetic data differs between calls");

    for (auto mode : {TrainMode::fast_at, TrainMode::standard_at, TrainMode::natural}) {
        TrainConfig cfg = benchmark_train_config(mode, 7);
        cfg.epochs = 2;
        cfg.inner_steps = 3;
        std::string ckpt[2], hist[2], report[2], robust[2];
        for (int run = 0; run < 2; ++run) {
            auto net = NetworkF::instantiate(tiny_config(2), 7);
            const auto h = train(net, train_set, holdout, cfg);
            ckpt[run] = serialize_checkpoint(net);
            hist[run] = history_csv(h);
            report[run] = train_report_json(net.config(), cfg, h);
            robust[run] = robustness_report_json(net.config().name,
                                                 robust_accuracy(net, holdout, standard_budgets(5), 7), 5, 1, 7);
        }
        const std::string m = to_string(mode);
        ck.expect(ckpt[0] == ckpt[1], m + " checkpoints differ");
        ck.expect(hist[0] == hist[1], m + " histories differ");
        ck.expect(report[0] == report[1], m + " train reports differ");
        ck.expect(robust[0] == robust[1], m + " robustness reports differ");

        const auto back = deserialize_checkpoint(ckpt[0]);
        ck.expect(serialize_checkpoint(back) == ckpt[0], m + " checkpoint round trip is not bit-exact");
    }
    for (const char* name : {"resnet50", "robarch-m", "norm-in"}) {
        const auto cfg = preset(name);
        ck.expect(analyze_report_json(cfg, 224) == analyze_report_json(cfg, 224), std::string(name) + " analyze");
        ck.expect(guideline_report_json(evaluate_guidelines(cfg)) == guideline_report_json(evaluate_guidelines(cfg)),
                  std::string(name) + " guideline report");
    }
    ck.note("modes", 3);
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        void (*run)(Check&);
    };
    const Criterion all[] = {
        {1, "golden parameter counts", golden_counts},
        {2, "budget fitting", budget_fitting},
        {3, "ResNet-50 MACs", macs},
        {4, "gradient suite", gradients},
        {5, "attack invariants", attacks},
        {6, "desk-scale adversarial training", adversarial_training},
        {7, "guideline linter", guidelines},
        {8, "determinism", determinism},
    };
    int failed = 0;
    for (const auto& c : all) {
        Check ck;
        const auto t0 = Clock::now();
        try {
            c.run(ck);
        } catch (const std::exception& e) {
            ck.failures.push_back(std::string("exception: ") + e.what());
        }
        const double dt = seconds_since(t0);
        const bool ok = ck.failures.empty();
        failed += ok ? 0 : 1;
        std::printf("%s %d %s (%.2f s) %s\n", ok ? "PASS" : "FAIL", c.id, c.name, dt, ck.notes.str().c_str());
        for (std::size_t i = 0; i < std::min<std::size_t>(ck.failures.size(), 5); ++i)
            std::printf("    %s\n", ck.failures[i].c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(all)) - failed, std::size(all));
    return failed == 0 ? 0 : 1;
}
