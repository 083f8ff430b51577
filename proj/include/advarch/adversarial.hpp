#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "advarch/dataset.hpp"
#include "advarch/network.hpp"

namespace advarch {

class AttackError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// l-inf threat model on inputs scaled to [0,1]. eps and alpha are in pixel units.
struct AttackConfig {
    double eps = 4.0 / 255;
    double alpha = 1.0 / 255;
    int steps = 1;
    int restarts = 1;
    bool rand_init = false;

    /// alpha = eps, one step.
    static AttackConfig fgsm(double eps, bool rand_init = false);
    /// alpha = 2 eps / steps, random start.
    static AttackConfig pgd(double eps, int steps, int restarts = 1);

    void validate() const;
};

/// Loss surface seen by an attack. `loss` is per sample; `grad` is the gradient of
/// any positive combination of per-sample losses in which samples do not interact
/// (only its sign is used).
template <typename T>
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::vector<double> loss(const Tensor<T>& x) = 0;
    virtual Tensor<T> grad(const Tensor<T>& x) = 0;
};

/// Cross-entropy of a network under eval-mode normalization. Parameters are frozen
/// for the lifetime of the objective and the previous mode is restored after.
template <typename T>
class NetworkObjective : public Objective<T> {
public:
    NetworkObjective(Network<T>& net, std::vector<int> labels);
    ~NetworkObjective() override;
    NetworkObjective(const NetworkObjective&) = delete;
    NetworkObjective& operator=(const NetworkObjective&) = delete;

    std::vector<double> loss(const Tensor<T>& x) override;
    Tensor<T> grad(const Tensor<T>& x) override;

private:
    Network<T>& net_;
    std::vector<int> labels_;
    Mode saved_mode_;
    std::vector<bool> saved_trainable_;
};

/// clamp(x_adv, x - eps, x + eps), then clamp to [0,1].
template <typename T>
Tensor<T> project_linf(const Tensor<T>& x_adv, const Tensor<T>& x, double eps);

/// -1, 0 or +1.
template <typename T>
T sgn(T v) {
    return static_cast<T>((T(0) < v) - (v < T(0)));
}

/// Called after every projected step with (restart, step, iterate).
template <typename T>
using StepObserver = std::function<void(int, int, const Tensor<T>&)>;

template <typename T>
Tensor<T> fgsm(Objective<T>& obj, const Tensor<T>& x, const AttackConfig& cfg, Rng& rng);

/// `steps` signed-gradient ascent steps with projection after each; with several
/// restarts the per-sample iterate with the highest final loss wins.
template <typename T>
Tensor<T> pgd(Objective<T>& obj, const Tensor<T>& x, const AttackConfig& cfg, Rng& rng,
              const StepObserver<T>& observe = {});

struct EpsAccuracy {
    double eps = 0;
    std::size_t correct = 0;
    double accuracy = 0;
};

struct RobustnessResult {
    std::size_t samples = 0;
    std::size_t natural_correct = 0;
    double natural_accuracy = 0;
    /// Lowest accuracy across the evaluated budgets.
    double adversarial_accuracy = 0;
    std::vector<EpsAccuracy> per_eps;
};

/// Clean and attacked accuracy in batches. Every budget reuses the same attack
/// seed so random starts are the same draws scaled by eps.
template <typename T>
RobustnessResult robust_accuracy(Network<T>& net, const Dataset& data, const std::vector<AttackConfig>& attacks,
                                 std::uint64_t seed, int batch_size = 128);

/// PGD configurations for eps in {2,4,8}/255.
std::vector<AttackConfig> standard_budgets(int steps = 10, int restarts = 1);

/// Index of the largest logit per row.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace advarch
