#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bat/attacks.hpp"
#include "bat/data.hpp"
#include "bat/network.hpp"
#include "bat/objectives.hpp"

namespace bat {

struct Milestone {
    int epoch;
    double factor;
};

struct TrainConfig {
    int epochs = 40;
    std::size_t batch_size = 128;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int warmup_epochs = 2;
    std::vector<Milestone> milestones{{30, 0.1}, {36, 0.1}};
    std::uint64_t seed = 0;
    ObjectiveSpec objective;
    AttackConfig attack;       // training adversary
    AttackConfig eval_attack;  // per-epoch robust accuracy (best-epoch selection)
    // R' is logged for every variant; this index is used when the training
    // attack has no interpolation index of its own.
    int log_interp = kFaitDefaultInterp;
    // Off keeps the metrics stream a pure function of (config, seed).
    bool record_wall_time = false;

    void validate() const;

    // Desk-scale defaults for the two-moons testbed.
    static TrainConfig two_moons(const ObjectiveSpec& objective, std::uint64_t seed = 0);
};

class TrainingDiverged : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Learning rate at fractional epoch t: linear ramp from 0 over the warmup
// epochs, then base_lr times the product of every milestone factor whose
// epoch has been reached.
double lr_at(double epoch, const TrainConfig& cfg);

// Per-parameter momentum buffers, ordered as Params::tensors().
using Velocity = std::vector<std::vector<double>>;

Velocity zero_velocity(const Params& params);

// g = grad + wd * param;  v = momentum * v + g;  param -= lr * v
void sgd_step(Params& params, std::span<const Tensor> grads, Velocity& velocity, double lr, const TrainConfig& cfg);

struct MetricsRecord {
    int epoch = 0;
    double clean_acc = 0.0;
    double robust_acc = 0.0;
    double loss_total = 0.0;
    double loss_acc = 0.0;
    double loss_rob = 0.0;     // R_theta
    double loss_rprime = 0.0;  // R'_theta
    double loss_mer = 0.0;
    double ent_clean = 0.0;
    double ent_adv = 0.0;
    double lambda_rob = 0.0;   // lambda times the optimized robustness term
    double lr = 0.0;
    double seconds = 0.0;
    bool best = false;
};

struct TrainResult {
    Params final_params;
    Params best_params;
    std::vector<MetricsRecord> metrics;
    std::optional<int> best_epoch;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set,
                  const EpochCallback& on_epoch = {});

// CSV columns: epoch, clean_acc, robust_acc, loss_total, loss_acc, loss_rob,
// loss_rprime, loss_mer, ent_clean, ent_adv, lr, seconds
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& m);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics);

}  // namespace bat
