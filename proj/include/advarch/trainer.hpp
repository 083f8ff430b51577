#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advarch/adversarial.hpp"
#include "advarch/dataset.hpp"
#include "advarch/network.hpp"

namespace advarch {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TrainMode { fast_at, standard_at, natural };
std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::fast_at;
    int epochs = 15;
    double test_eps = 4.0 / 255;
    double train_eps_multiplier = 1.25;
    int inner_steps = 10;           // standard_at
    bool inner_rand_init = true;    // standard_at
    std::optional<double> inner_alpha;  // standard_at; default 2 eps / inner_steps
    double lr_max = 0.2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 64;
    std::uint64_t seed = 0;
    int eval_steps = 10;            // holdout PGD steps
    bool eval_every_epoch = true;   // otherwise only after the last epoch

    double train_eps() const { return test_eps * train_eps_multiplier; }
    void validate() const;
};

/// Desk-scale recipe used with benchmark_synth_spec: 10 epochs, batch 32.
TrainConfig benchmark_train_config(TrainMode mode, std::uint64_t seed);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double lr = 0;  // at the last step of the epoch
    double train_loss = 0;          // mean loss on the inputs actually trained on
    double natural_train_acc = 0;   // clean batches, eval-mode prediction before the update
    double adversarial_train_acc = 0;
    std::optional<double> holdout_natural_acc;
    std::optional<double> holdout_pgd_acc;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::optional<double> final_holdout_pgd_acc;
};

/// Triangular schedule: 0 at t = 0, lr_max at t = T/2, 0 at t = T.
double cyclic_lr(double t, double total, double lr_max);
/// lr_max, then x0.1 from 50% of the epochs and x0.01 from 75%.
double step_decay_lr(int epoch, int epochs, double lr_max);

/// SGD with momentum; weight decay is added to the gradient before the momentum update:
/// v = mu v + (g + wd w); w -= lr v.
template <typename T>
class Sgd {
public:
    Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
    void step(std::vector<NamedParam<T>>& params, double lr);

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<T>> velocity_;
};

/// Runs the loop selected by cfg.mode.
template <typename T>
TrainHistory train(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg);

/// The three entry points check that cfg.mode matches.
template <typename T>
TrainHistory fast_at(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg);
template <typename T>
TrainHistory standard_at(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg);
template <typename T>
TrainHistory natural(Network<T>& net, const Dataset& train_set, const Dataset& holdout, const TrainConfig& cfg);

/// First 1-based epoch whose holdout PGD accuracy sits more than 20 points below its
/// running maximum while adversarial train accuracy did not fall from the previous
/// epoch. Epochs without a holdout evaluation are skipped.
std::optional<int> detect_catastrophic_overfitting(const TrainHistory& history, double drop_points = 20.0);

/// Fixed-header CSV, one row per epoch.
std::string history_csv(const TrainHistory& history);

}  // namespace advarch
