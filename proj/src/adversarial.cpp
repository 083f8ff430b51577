#include "advarch/adversarial.hpp"

#include <algorithm>
#include <cmath>

namespace advarch {

AttackConfig AttackConfig::fgsm(double eps, bool rand_init) {
    return {eps, eps, 1, 1, rand_init};
}

AttackConfig AttackConfig::pgd(double eps, int steps, int restarts) {
    if (steps < 1) throw AttackError("steps must be at least 1");
    return {eps, 2 * eps / steps, steps, restarts, true};
}

void AttackConfig::validate() const {
    if (!(eps >= 0) || !std::isfinite(eps)) throw AttackError("eps must be a finite non-negative number");
    if (steps < 1) throw AttackError("steps must be at least 1");
    if (restarts < 1) throw AttackError("restarts must be at least 1");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw AttackError("alpha must be a finite non-negative number");
    // A zero step only makes sense when the ball itself is empty.
    if (alpha == 0 && eps > 0) throw AttackError("alpha must be positive when eps > 0");
}

template <typename T>
Tensor<T> project_linf(const Tensor<T>& x_adv, const Tensor<T>& x, double eps) {
    if (x_adv.shape != x.shape)
        throw ShapeError("projection shape mismatch: " + shape_string(x_adv.shape) + " vs " + shape_string(x.shape));
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = static_cast<double>(x[i]);
        const double v = std::clamp(static_cast<double>(x_adv[i]), c - eps, c + eps);
        out[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

namespace {

template <typename T>
Tensor<T> random_start(const Tensor<T>& x, double eps, Rng& rng) {
    Tensor<T> s(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = static_cast<T>(x[i] + eps * rng.uniform(-1.0, 1.0));
    return project_linf(s, x, eps);
}

template <typename T>
Tensor<T> sign_step(Objective<T>& obj, const Tensor<T>& cur, const Tensor<T>& x, const AttackConfig& cfg) {
    const Tensor<T> g = obj.grad(cur);
    if (g.shape != cur.shape) throw ShapeError("objective gradient has shape " + shape_string(g.shape));
    Tensor<T> next(cur.shape);
    for (std::size_t i = 0; i < cur.size(); ++i) next[i] = static_cast<T>(cur[i] + cfg.alpha * sgn(g[i]));
    return project_linf(next, x, cfg.eps);
}

}  // namespace

template <typename T>
Tensor<T> fgsm(Objective<T>& obj, const Tensor<T>& x, const AttackConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.steps != 1 || cfg.restarts != 1) throw AttackError("fgsm takes exactly one step and one restart");
    const Tensor<T> start = cfg.rand_init ? random_start(x, cfg.eps, rng) : x;
    return sign_step(obj, start, x, cfg);
}

template <typename T>
Tensor<T> pgd(Objective<T>& obj, const Tensor<T>& x, const AttackConfig& cfg, Rng& rng, const StepObserver<T>& observe) {
    cfg.validate();
    if (x.ndim() < 1) throw ShapeError("attack input needs a batch dimension");
    const std::size_t n = static_cast<std::size_t>(x.dim(0));
    const std::size_t per = n ? x.size() / n : 0;

    Tensor<T> best;
    std::vector<double> best_loss;
    for (int r = 0; r < cfg.restarts; ++r) {
        Tensor<T> cur = cfg.rand_init ? random_start(x, cfg.eps, rng) : x;
        for (int k = 0; k < cfg.steps; ++k) {
            cur = sign_step(obj, cur, x, cfg);
            if (observe) observe(r, k, cur);
        }
        if (cfg.restarts == 1) return cur;
        const std::vector<double> l = obj.loss(cur);
        if (r == 0) {
            best = std::move(cur);
            best_loss = l;
            continue;
        }
        for (std::size_t s = 0; s < n; ++s)
            if (l[s] > best_loss[s]) {
                best_loss[s] = l[s];
                std::copy_n(cur.ptr() + s * per, per, best.ptr() + s * per);
            }
    }
    return best;
}

template <typename T>
NetworkObjective<T>::NetworkObjective(Network<T>& net, std::vector<int> labels)
    : net_(net), labels_(std::move(labels)), saved_mode_(net.mode()) {
    for (const auto& p : net_.parameters()) saved_trainable_.push_back(p.var->requires_grad);
    net_.eval();
    net_.set_parameters_trainable(false);
}

template <typename T>
NetworkObjective<T>::~NetworkObjective() {
    net_.set_mode(saved_mode_);
    auto& ps = net_.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].var->requires_grad = saved_trainable_[i];
}

template <typename T>
std::vector<double> NetworkObjective<T>::loss(const Tensor<T>& x) {
    return ops::cross_entropy_per_sample(net_.predict(x), labels_);
}

template <typename T>
Tensor<T> NetworkObjective<T>::grad(const Tensor<T>& x) {
    auto logits = net_.forward(x, true);
    return net_.backward(ops::softmax_cross_entropy(logits, labels_)).input;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    if (logits.ndim() != 2) throw ShapeError("argmax expects [B,K], got " + shape_string(logits.shape));
    const int B = logits.dim(0), K = logits.dim(1);
    std::vector<int> out(B);
    for (int b = 0; b < B; ++b) {
        const T* row = logits.ptr() + static_cast<std::size_t>(b) * K;
        out[b] = static_cast<int>(std::max_element(row, row + K) - row);
    }
    return out;
}

std::vector<AttackConfig> standard_budgets(int steps, int restarts) {
    return {AttackConfig::pgd(2.0 / 255, steps, restarts), AttackConfig::pgd(4.0 / 255, steps, restarts),
            AttackConfig::pgd(8.0 / 255, steps, restarts)};
}

template <typename T>
RobustnessResult robust_accuracy(Network<T>& net, const Dataset& data, const std::vector<AttackConfig>& attacks,
                                 std::uint64_t seed, int batch_size) {
    if (data.size() == 0) throw AttackError("empty dataset");
    if (batch_size < 1) throw AttackError("batch_size must be positive");
    for (const auto& a : attacks) a.validate();

    RobustnessResult res;
    res.samples = data.size();
    std::vector<Rng> rngs(attacks.size(), Rng(derive_seed(seed, SeedPurpose::attack)));
    res.per_eps.resize(attacks.size());
    for (std::size_t a = 0; a < attacks.size(); ++a) res.per_eps[a].eps = attacks[a].eps;

    const Mode saved = net.mode();
    net.eval();
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
        const Tensor<T> x = data.gather_images(idx).template cast<T>();
        const std::vector<int> y = data.gather_labels(idx);

        auto count = [&](const Tensor<T>& input) {
            const auto pred = argmax_rows(net.predict(input));
            std::size_t c = 0;
            for (std::size_t i = 0; i < y.size(); ++i) c += pred[i] == y[i];
            return c;
        };
        res.natural_correct += count(x);
        for (std::size_t a = 0; a < attacks.size(); ++a) {
            Tensor<T> adv;
            {
                NetworkObjective<T> obj(net, y);
                adv = pgd(obj, x, attacks[a], rngs[a]);
            }
            res.per_eps[a].correct += count(adv);
        }
    }
    net.set_mode(saved);

    const double n = static_cast<double>(res.samples);
    res.natural_accuracy = static_cast<double>(res.natural_correct) / n;
    res.adversarial_accuracy = res.natural_accuracy;
    for (auto& e : res.per_eps) e.accuracy = static_cast<double>(e.correct) / n;
    if (!res.per_eps.empty()) {
        res.adversarial_accuracy = res.per_eps.front().accuracy;
        for (const auto& e : res.per_eps) res.adversarial_accuracy = std::min(res.adversarial_accuracy, e.accuracy);
    }
    return res;
}

#define ADVARCH_ATTACKS(T)                                                                                       \
    template Tensor<T> project_linf(const Tensor<T>&, const Tensor<T>&, double);                                 \
    template Tensor<T> fgsm(Objective<T>&, const Tensor<T>&, const AttackConfig&, Rng&);                         \
    template Tensor<T> pgd(Objective<T>&, const Tensor<T>&, const AttackConfig&, Rng&, const StepObserver<T>&);  \
    template class NetworkObjective<T>;                                                                          \
    template std::vector<int> argmax_rows(const Tensor<T>&);                                                     \
    template RobustnessResult robust_accuracy(Network<T>&, const Dataset&, const std::vector<AttackConfig>&,      \
                                              std::uint64_t, int);

ADVARCH_ATTACKS(float)
ADVARCH_ATTACKS(double)
#undef ADVARCH_ATTACKS

}  // namespace advarch
