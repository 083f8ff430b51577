#include <doctest.h>

#include <cmath>

#include "advarch/adversarial.hpp"
#include "advarch/presets.hpp"
#include "advarch/trainer.hpp"

using namespace advarch;

namespace {

// loss_i = -y_i * (w . x_i), so the gradient is -y_i * w.
class LinearLoss : public Objective<double> {
public:
    LinearLoss(std::vector<double> w, std::vector<int> y) : w_(std::move(w)), y_(std::move(y)) {}
    double f(const Tensor<double>& x, std::size_t i) const {
        double s = 0;
        for (std::size_t j = 0; j < w_.size(); ++j) s += w_[j] * x[i * w_.size() + j];
        return s;
    }
    std::vector<double> loss(const Tensor<double>& x) override {
        std::vector<double> out;
        for (std::size_t i = 0; i < y_.size(); ++i) out.push_back(-y_[i] * f(x, i));
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

// Concave quadratic -(x - c)^T A (x - c) on one 2-d sample.
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

// Random linear loss whose direction changes on every call; exercises projection only.
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

class ConstantNet : public Objective<double> {
public:
    std::vector<double> loss(const Tensor<double>& x) override { return std::vector<double>(x.dim(0), 1.0); }
    Tensor<double> grad(const Tensor<double>& x) override { return Tensor<double>(x.shape); }
};

double max_dev(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor<double> random_images(std::vector<int> shape, Rng& r) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        const double u = r.uniform();
        // Put a share of pixels on or near the valid-range bounds.
        v = u < 0.1 ? 0.0 : u > 0.9 ? 1.0 : r.uniform();
    }
    return t;
}

}  // namespace

TEST_CASE("project_linf examples") {
    const double eps4 = 4.0 / 255, eps8 = 8.0 / 255;
    const Tensor<double> x({1}, {0.5});
    CHECK(project_linf(Tensor<double>({1}, {0.6}), x, eps4)[0] == doctest::Approx(0.5 + eps4).epsilon(1e-15));
    CHECK(project_linf(Tensor<double>({1}, {0.6}), x, eps4)[0] == doctest::Approx(0.51569).epsilon(1e-5));
    CHECK(project_linf(Tensor<double>({1}, {0.51}), x, eps4)[0] == 0.51);
    CHECK(project_linf(Tensor<double>({1}, {-0.05}), Tensor<double>({1}, {0.001}), eps8)[0] == 0.0);
    CHECK_THROWS_AS(project_linf(Tensor<double>({2}), x, eps4), ShapeError);
}

TEST_CASE("sgn convention") {
    CHECK(sgn(0.0) == 0.0);
    CHECK(sgn(-0.0) == 0.0);
    CHECK(sgn(3.5) == 1.0);
    CHECK(sgn(-1e-300) == -1.0);
    CHECK(sgn(0.0f) == 0.0f);
}

TEST_CASE("AttackConfig validation") {
    CHECK_THROWS_AS(AttackConfig::pgd(0.1, 0), AttackError);
    AttackConfig c = AttackConfig::pgd(0.1, 10);
    CHECK(c.alpha == doctest::Approx(0.02));
    CHECK(c.rand_init);
    c.eps = -1;
    CHECK_THROWS_AS(c.validate(), AttackError);
    c = AttackConfig::pgd(0.1, 10);
    c.alpha = 0;
    CHECK_THROWS_AS(c.validate(), AttackError);
    c.eps = 0;
    CHECK_NOTHROW(c.validate());
    c.restarts = 0;
    CHECK_THROWS_AS(c.validate(), AttackError);
}

TEST_CASE("FGSM on a linear model steps to the sign corner") {
    LinearLoss obj({1, -2}, {1});
    const Tensor<double> x({1, 2}, {0.5, 0.5});
    Rng rng(0);
    const auto adv = fgsm<double>(obj, x, AttackConfig::fgsm(0.1), rng);
    CHECK(adv[0] == doctest::Approx(0.4));
    CHECK(adv[1] == doctest::Approx(0.6));
    CHECK(obj.f(x, 0) == doctest::Approx(-0.5));
    CHECK(obj.f(adv, 0) == doctest::Approx(-0.8));
}

TEST_CASE("zero gradient leaves the input untouched") {
    ConstantNet obj;
    Rng rng(3);
    Tensor<double> x = random_images({2, 3, 4, 4}, rng);
    CHECK(fgsm<double>(obj, x, AttackConfig::fgsm(0.1), rng) == x);
    AttackConfig c = AttackConfig::pgd(0.1, 5);
    c.rand_init = false;
    CHECK(pgd<double>(obj, x, c, rng) == x);
}

TEST_CASE("FGSM reaches the brute-force optimum of a linear loss over the eps-box") {
    Rng r(11);
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
            Tensor<double> c = x;
            for (int j = 0; j < d; ++j) {
                const double lo = std::max(0.0, x[j] - eps), hi = std::min(1.0, x[j] + eps);
                c[j] = (mask >> j) & 1 ? hi : lo;
            }
            best = std::max(best, obj.loss(c)[0]);
        }
        CAPTURE(trial);
        CHECK(got == best);
    }
}

TEST_CASE("every PGD iterate stays in the eps-ball and the pixel range") {
    Rng r(5);
    long steps = 0;
    int violations = 0;
    while (steps < 10000) {
        const double eps = r.uniform() < 0.1 ? 0.0 : r.uniform(0, 16.0 / 255);
        const int K = 1 + static_cast<int>(r.below(50));
        AttackConfig c = AttackConfig::pgd(eps, K, 1 + static_cast<int>(r.below(2)));
        c.alpha = eps == 0 ? 0.0 : r.uniform(0.1, 2.0) * eps;
        c.rand_init = r.uniform() < 0.7;
        const Tensor<double> x = random_images({3, 2, 3, 3}, r);
        ShakyLoss obj(r.next_u64());
        Rng arng(r.next_u64());
        pgd<double>(obj, x, c, arng, [&](int, int, const Tensor<double>& it) {
            ++steps;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(it[i] - x[i]) > eps + 1e-7 || it[i] < 0 || it[i] > 1) ++violations;
        });
    }
    CHECK(steps >= 10000);
    CHECK(violations == 0);
}

TEST_CASE("PGD iterates on a network stay feasible in f32") {
    auto net = NetworkF::instantiate(tiny_config(2), 1);
    Rng r(9);
    Tensor<float> x({2, 3, 32, 32});
    for (auto& v : x.data) v = static_cast<float>(r.uniform());
    x[0] = 0.0f;
    x[1] = 1.0f;
    NetworkObjective<float> obj(net, {0, 1});
    const double eps = 8.0 / 255;
    int violations = 0;
    Rng arng(2);
    pgd<float>(obj, x, AttackConfig::pgd(eps, 20), arng, [&](int, int, const Tensor<float>& it) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(static_cast<double>(it[i]) - x[i]) > eps + 1e-7 || it[i] < 0 || it[i] > 1) ++violations;
    });
    CHECK(violations == 0);
}

TEST_CASE("PGD-100 on a 2-d quadratic matches a grid search over the box") {
    struct Case {
        double a, b, d, c0, c1;
    };
    const std::vector<Case> cases = {{1, 0, 1, 0.7, 0.53}, {2, 0.5, 1, 0.9, 0.45}, {1, -0.8, 1, 0.55, 0.8},
                                     {3, 1, 1, 0.2, 0.56}};
    const Tensor<double> x({1, 2}, {0.5, 0.5});
    const double eps = 0.1;
    for (const auto& k : cases) {
        QuadraticLoss obj(k.a, k.b, k.d, k.c0, k.c1);
        Rng rng(1);
        const auto adv = pgd<double>(obj, x, AttackConfig::pgd(eps, 100), rng);
        const int G = 2000;
        double best = -INFINITY, bx = 0, by = 0;
        for (int i = 0; i <= G; ++i)
            for (int j = 0; j <= G; ++j) {
                const double u = 0.5 - eps + 2 * eps * i / G, v = 0.5 - eps + 2 * eps * j / G;
                const double l = obj.value(u, v);
                if (l > best) best = l, bx = u, by = v;
            }
        CAPTURE(k.c0);
        CAPTURE(k.c1);
        CHECK(std::abs(obj.value(adv[0], adv[1]) - best) < 1e-3);
        CHECK(std::abs(adv[0] - bx) < 0.01);
        CHECK(std::abs(adv[1] - by) < 0.01);
    }
}

TEST_CASE("PGD on a linear model reaches the FGSM corner once alpha*K >= eps") {
    LinearLoss obj({0.3, -1, 0.7, 2}, {1, -1});
    Tensor<double> x({2, 4}, {0.5, 0.2, 0.7, 0.4, 0.1, 0.9, 0.5, 0.5});
    Rng rng(4);
    const auto corner = fgsm<double>(obj, x, AttackConfig::fgsm(0.05), rng);
    for (int K : {1, 3, 10}) {
        AttackConfig c = AttackConfig::pgd(0.05, K);
        c.rand_init = false;
        c.alpha = 0.05 / K * 1.3;
        CHECK(max_dev(pgd<double>(obj, x, c, rng), corner) < 1e-12);
    }
}

TEST_CASE("PGD with K = 1, no random start and alpha = eps equals FGSM") {
    auto net = NetworkD::instantiate(tiny_config(2), 3);
    Rng r(8);
    Tensor<double> x({3, 3, 32, 32});
    for (auto& v : x.data) v = r.uniform();
    NetworkObjective<double> obj(net, {0, 1, 1});
    Rng a(1), b(1);
    AttackConfig c = AttackConfig::fgsm(4.0 / 255);
    CHECK(pgd<double>(obj, x, c, a) == fgsm<double>(obj, x, c, b));
}

TEST_CASE("attacks are deterministic for a fixed seed") {
    auto net = NetworkF::instantiate(tiny_config(2), 3);
    Rng r(8);
    Tensor<float> x({2, 3, 32, 32});
    for (auto& v : x.data) v = static_cast<float>(r.uniform());
    NetworkObjective<float> obj(net, {0, 1});
    Rng a(42), b(42);
    CHECK(pgd<float>(obj, x, AttackConfig::pgd(4.0 / 255, 5, 2), a) ==
          pgd<float>(obj, x, AttackConfig::pgd(4.0 / 255, 5, 2), b));
}

TEST_CASE("restarts keep the per-sample iterate with the highest loss") {
    auto net = NetworkD::instantiate(tiny_config(2), 5);
    Rng r(8);
    Tensor<double> x({4, 3, 32, 32});
    for (auto& v : x.data) v = r.uniform();
    const std::vector<int> y = {0, 1, 0, 1};
    NetworkObjective<double> obj(net, y);
    const AttackConfig multi = AttackConfig::pgd(8.0 / 255, 3, 3);
    // Re-run each restart alone with the same random stream to get its endpoint.
    Rng shared(77);
    const auto best = obj.loss(pgd<double>(obj, x, multi, shared));
    Rng replay(77);
    AttackConfig single = multi;
    single.restarts = 1;
    for (int k = 0; k < 3; ++k) {
        const auto l = obj.loss(pgd<double>(obj, x, single, replay));
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(best[i] >= l[i]);
    }
}

TEST_CASE("NetworkObjective restores mode and trainability") {
    auto net = NetworkF::instantiate(tiny_config(2), 1);
    net.train();
    {
        NetworkObjective<float> obj(net, {0});
        CHECK(net.mode() == Mode::eval);
        for (const auto& p : net.parameters()) CHECK_FALSE(p.var->requires_grad);
    }
    CHECK(net.mode() == Mode::train);
    for (const auto& p : net.parameters()) CHECK(p.var->requires_grad);
}

// An untrained network scores chance on clean inputs on average, but its decision
// boundary sits close to every sample, so an attack pushes it below chance rather
// than leaving it there.
TEST_CASE("robust_accuracy on an untrained network") {
    SynthSpec s;
    s.seed = 3;
    const auto data = synth_generate(s);
    double natural = 0;
    const int seeds = 8;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto net = NetworkF::instantiate(tiny_config(2), static_cast<std::uint64_t>(seed));
        const auto r = robust_accuracy(net, data, standard_budgets(10), 0);
        CAPTURE(seed);
        MESSAGE("natural " << r.natural_accuracy << " eps2 " << r.per_eps[0].accuracy << " eps4 " << r.per_eps[1].accuracy
                           << " eps8 " << r.per_eps[2].accuracy);
        natural += r.natural_accuracy;
        CHECK(r.adversarial_accuracy <= 0.5 + 0.1);
        CHECK(r.per_eps.size() == 3);
        CHECK(r.samples == data.size());
    }
    CHECK(std::abs(natural / seeds - 0.5) <= 0.1);
}

TEST_CASE("eps = 0 reproduces natural accuracy") {
    const auto data = synth_generate(benchmark_synth_spec(2), 1);
    auto net = NetworkF::instantiate(tiny_config(2), 2);
    const auto r = robust_accuracy(net, data, {AttackConfig::pgd(0.0, 10)}, 9);
    CHECK(r.per_eps[0].accuracy == r.natural_accuracy);
    CHECK(r.adversarial_accuracy == r.natural_accuracy);
}

TEST_CASE("empty dataset is rejected") {
    auto net = NetworkF::instantiate(tiny_config(2), 2);
    Dataset empty;
    CHECK_THROWS_WITH_AS(robust_accuracy(net, empty, standard_budgets(), 0), "empty dataset", AttackError);
}

TEST_CASE("robust accuracy of a trained model shrinks as eps grows") {
    const auto train_set = synth_generate(benchmark_synth_spec(1), 0);
    SynthSpec hs = benchmark_synth_spec(1);
    hs.samples_per_class = 100;
    const auto holdout = synth_generate(hs, 1);
    auto net = NetworkF::instantiate(tiny_config(2), 1);
    TrainConfig cfg = benchmark_train_config(TrainMode::fast_at, 1);
    cfg.eval_every_epoch = false;
    fast_at(net, train_set, holdout, cfg);

    const auto a = robust_accuracy(net, holdout, standard_budgets(10), 5);
    MESSAGE("natural " << a.natural_accuracy << " eps2 " << a.per_eps[0].accuracy << " eps4 " << a.per_eps[1].accuracy
                       << " eps8 " << a.per_eps[2].accuracy);
    CHECK(a.per_eps[2].accuracy <= a.per_eps[1].accuracy);
    CHECK(a.per_eps[1].accuracy <= a.per_eps[0].accuracy);
    CHECK(a.adversarial_accuracy == a.per_eps[2].accuracy);
    const auto b = robust_accuracy(net, holdout, standard_budgets(10), 5);
    CHECK(a.per_eps[0].correct == b.per_eps[0].correct);
    CHECK(a.per_eps[2].correct == b.per_eps[2].correct);
}
