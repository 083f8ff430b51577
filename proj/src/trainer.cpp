#include "advarch/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace advarch {

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::fast_at: return "fast_at";
        case TrainMode::standard_at: return "standard_at";
        case TrainMode::natural: return "natural";
    }
    return "?";
}

TrainMode parse_train_mode(const std::string& s) {
    if (s == "fast_at") return TrainMode::fast_at;
    if (s == "standard_at") return TrainMode::standard_at;
    if (s == "natural") return TrainMode::natural;
    throw std::invalid_argument("unknown training mode '" + s + "' (fast_at, standard_at, natural)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (epochs < 1) fail("epochs must be positive");
    if (!(test_eps >= 0)) fail("test_eps must be non-negative");
    if (!(train_eps_multiplier >= 0)) fail("train_eps_multiplier must be non-negative");
    if (inner_steps < 1) fail("inner_steps must be positive");
    if (inner_alpha && !(*inner_alpha >= 0)) fail("inner_alpha must be non-negative");
    if (!(lr_max > 0)) fail("lr_max must be positive");
    if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0,1)");
    if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
    if (batch_size < 1) fail("batch_size must be positive");
    if (eval_steps < 1) fail("eval_steps must be positive");
}

TrainConfig benchmark_train_config(TrainMode mode, std::uint64_t seed) {
    TrainConfig c;
    c.mode = mode;
    c.epochs = 10;
    c.batch_size = 32;
    c.seed = seed;
    return c;
}

double cyclic_lr(double t, double total, double lr_max) {
    if (total <= 0 || t < 0 || t > total) throw std::invalid_argument("cyclic_lr needs 0 <= t <= T and T > 0");
    const double half = total / 2;
    return t <= half ? lr_max * t / half : lr_max * (total - t) / half;
}

double step_decay_lr(int epoch, int epochs, double lr_max) {
    double lr = lr_max;
    if (2 * epoch >= epochs) lr *= 0.1;
    if (4 * epoch >= 3 * epochs) lr *= 0.1;
    return lr;
}

template <typename T>
void Sgd<T>::step(std::vector<NamedParam<T>>& params, double lr) {
    if (velocity_.empty())
        for (const auto& p : params) velocity_.emplace_back(p.var->value.size(), T(0));
    const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), eta = static_cast<T>(lr);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k].var->value.data;
        const auto& g = params[k].var->grad.data;
        auto& v = velocity_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T gi = (g.empty() ? T(0) : g[i]) + wd * w[i];
            v[i] = mu * v[i] + gi;
            w[i] -= eta * v[i];
        }
    }
}

namespace {

template <typename T>
std::size_t correct(const Tensor<T>& logits, const std::vector<int>& y) {
    const auto pred = argmax_rows(logits);
    std::size_t c = 0;
    for (std::size_t i = 0; i < y.size(); ++i) c += pred[i] == y[i];
    return c;
}

template <typename T>
TrainHistory run(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg) {
    cfg.validate();
    train_set.validate();
    holdout.validate();

    const std::size_t n = train_set.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(per_epoch) * cfg.epochs;
    const double eps = cfg.train_eps();

    AttackConfig inner;
    if (cfg.mode == TrainMode::fast_at) {
        inner = AttackConfig::fgsm(eps, true);
    } else if (cfg.mode == TrainMode::standard_at) {
        inner = {eps, cfg.inner_alpha.value_or(2 * eps / cfg.inner_steps), cfg.inner_steps, 1, cfg.inner_rand_init};
    }

    Rng shuffle(derive_seed(cfg.seed, SeedPurpose::shuffle));
    Rng attack(derive_seed(cfg.seed, SeedPurpose::attack));
    Sgd<T> opt(cfg.momentum, cfg.weight_decay);
    TrainHistory hist;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        EpochRecord rec;
        rec.epoch = epoch + 1;
        double loss_sum = 0;
        std::size_t nat_ok = 0, adv_ok = 0;

        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::vector<std::size_t> idx(order.begin() + b * cfg.batch_size,
                                               order.begin() + std::min(n, (b + 1) * cfg.batch_size));
            const Tensor<T> x = train_set.gather_images(idx).template cast<T>();
            const std::vector<int> y = train_set.gather_labels(idx);

            Tensor<T> x_train = x;
            if (cfg.mode != TrainMode::natural) {
                NetworkObjective<T> obj(net, y);
                nat_ok += correct(net.predict(x), y);
                x_train = cfg.mode == TrainMode::fast_at ? fgsm(obj, x, inner, attack) : pgd(obj, x, inner, attack);
            }

            const double lr = cfg.mode == TrainMode::standard_at ? step_decay_lr(epoch, cfg.epochs, cfg.lr_max)
                                                                 : cyclic_lr(static_cast<double>(step + 1), total_steps, cfg.lr_max);
            net.train();
            net.zero_grad();
            auto logits = net.forward(x_train);
            auto loss = ops::softmax_cross_entropy(logits, y);
            const double lv = loss->value[0];
            if (!std::isfinite(lv))
                throw TrainError("loss diverged at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(b + 1));
            net.backward(loss);
            opt.step(net.parameters(), lr);

            const std::size_t ok = correct(logits->value, y);
            adv_ok += ok;
            if (cfg.mode == TrainMode::natural) nat_ok += ok;
            loss_sum += lv * static_cast<double>(y.size());
            rec.lr = lr;
        }
        net.zero_grad();
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.natural_train_acc = static_cast<double>(nat_ok) / static_cast<double>(n);
        rec.adversarial_train_acc = static_cast<double>(adv_ok) / static_cast<double>(n);

        if (cfg.eval_every_epoch || epoch + 1 == cfg.epochs) {
            const auto r = robust_accuracy(net, holdout, {AttackConfig::pgd(cfg.test_eps, cfg.eval_steps)},
                                           derive_seed(cfg.seed, SeedPurpose::eval));
            rec.holdout_natural_acc = r.natural_accuracy;
            rec.holdout_pgd_acc = r.per_eps.front().accuracy;
        }
        hist.epochs.push_back(rec);
    }
    net.eval();
    hist.final_holdout_pgd_acc = hist.epochs.back().holdout_pgd_acc;
    return hist;
}

void require_mode(const TrainConfig& cfg, TrainMode want) {
    if (cfg.mode != want)
        throw std::invalid_argument("config mode is " + to_string(cfg.mode) + ", expected " + to_string(want));
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

template <typename T>
TrainHistory train(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg) {
    return run(net, train_set, holdout, cfg);
}

template <typename T>
TrainHistory fast_at(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg) {
    require_mode(cfg, TrainMode::fast_at);
    return run(net, train_set, holdout, cfg);
}

template <typename T>
TrainHistory standard_at(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg) {
    require_mode(cfg, TrainMode::standard_at);
    return run(net, train_set, holdout, cfg);
}

template <typename T>
TrainHistory natural(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg) {
    require_mode(cfg, TrainMode::natural);
    return run(net, train_set, holdout, cfg);
}

std::optional<int> detect_catastrophic_overfitting(const TrainHistory& history, double drop_points) {
    std::optional<double> peak;
    const EpochRecord* prev = nullptr;
    for (const auto& rec : history.epochs) {
        if (rec.holdout_pgd_acc) {
            const double acc = *rec.holdout_pgd_acc;
            const bool train_held = prev && rec.adversarial_train_acc >= prev->adversarial_train_acc;
            if (peak && (*peak - acc) * 100.0 > drop_points && train_held) return rec.epoch;
            peak = peak ? std::max(*peak, acc) : acc;
        }
        prev = &rec;
    }
    return std::nullopt;
}

std::string history_csv(const TrainHistory& history) {
    std::string out =
        "epoch,lr,train_loss,natural_train_acc,adversarial_train_acc,holdout_natural_acc,holdout_pgd_acc\n";
    for (const auto& r : history.epochs) {
        out += std::to_string(r.epoch) + "," + fmt(r.lr) + "," + fmt(r.train_loss) + "," + fmt(r.natural_train_acc) +
               "," + fmt(r.adversarial_train_acc) + "," + (r.holdout_natural_acc ? fmt(*r.holdout_natural_acc) : "") +
               "," + (r.holdout_pgd_acc ? fmt(*r.holdout_pgd_acc) : "") + "\n";
    }
    return out;
}

#define ADVARCH_TRAIN(T)                                                                                        \
    template class Sgd<T>;                                                                                      \
    template TrainHistory train(Network<T>&, const Dataset&, const Dataset&, const TrainConfig&);              \
    template TrainHistory fast_at(Network<T>&, const Dataset&, const Dataset&, const TrainConfig&);            \
    template TrainHistory standard_at(Network<T>&, const Dataset&, const Dataset&, const TrainConfig&);        \
    template TrainHistory natural(Network<T>&, const Dataset&, const Dataset&, const TrainConfig&);

ADVARCH_TRAIN(float)
ADVARCH_TRAIN(double)
#undef ADVARCH_TRAIN

}  // namespace advarch
