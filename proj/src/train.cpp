#include "bat/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

namespace bat {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(base_lr > 0.0)) throw std::invalid_argument("train.lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (warmup_epochs < 0) throw std::invalid_argument("train.warmup_epochs must be >= 0");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (!(milestones[i].factor > 0.0)) throw std::invalid_argument("milestone factors must be > 0");
        if (i > 0 && milestones[i].epoch <= milestones[i - 1].epoch) {
            throw std::invalid_argument("train.milestones must be strictly increasing");
        }
    }
    if (!milestones.empty() && warmup_epochs >= milestones.front().epoch) {
        throw std::invalid_argument("train.warmup_epochs must end before the first milestone");
    }
    objective.validate();
    attack.validate();
    eval_attack.validate();
    if (objective.needs_interp() && !attack.interp) {
        throw std::invalid_argument(objective.display_name() + " requires attack.interp (0 < I < K)");
    }
    if (!attack.interp && attack.iters > 1 && (log_interp <= 0 || log_interp >= attack.iters)) {
        throw std::invalid_argument("train.log_interp must satisfy 0 < I < K");
    }
}

TrainConfig TrainConfig::two_moons(const ObjectiveSpec& objective, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.objective = objective;
    cfg.attack = AttackConfig::synthetic_default();
    cfg.attack.inner_loss = default_inner_loss(objective);
    if (objective.needs_interp()) cfg.attack.interp = kFaitDefaultInterp;
    cfg.eval_attack = AttackConfig::synthetic_default();
    cfg.eval_attack.iters = 20;
    cfg.eval_attack.inner_loss = InnerLoss::CE;
    return cfg;
}

double lr_at(double epoch, const TrainConfig& cfg) {
    if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs) {
        return cfg.base_lr * std::max(epoch, 0.0) / static_cast<double>(cfg.warmup_epochs);
    }
    double lr = cfg.base_lr;
    for (const auto& m : cfg.milestones) {
        if (epoch >= m.epoch) lr *= m.factor;
    }
    return lr;
}

Velocity zero_velocity(const Params& params) {
    Velocity v;
    for (const auto& t : params.tensors()) v.emplace_back(t.numel(), 0.0);
    return v;
}

void sgd_step(Params& params, std::span<const Tensor> grads, Velocity& velocity, double lr, const TrainConfig& cfg) {
    auto& layers = params.layers();
    if (grads.size() != layers.size() * 2 || velocity.size() != grads.size()) {
        throw ShapeError("sgd_step: gradient/velocity count does not match parameters");
    }
    for (std::size_t k = 0; k < grads.size(); ++k) {
        Tensor& param = k % 2 == 0 ? layers[k / 2].weight : layers[k / 2].bias;
        auto w = param.mutable_data();
        const auto g = grads[k].data();
        auto& v = velocity[k];
        if (g.size() != w.size() || v.size() != w.size()) throw ShapeError("sgd_step: gradient shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double step = g[i] + cfg.weight_decay * w[i];
            v[i] = cfg.momentum * v[i] + step;
            w[i] -= lr * v[i];
        }
    }
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kAttackStream = 0x41545441434BULL;
constexpr std::uint64_t kEvalStream = 0x4556414CULL;

struct Accumulator {
    double total = 0, acc = 0, rob = 0, rprime = 0, mer = 0, ent_clean = 0, ent_adv = 0;
    std::size_t count = 0;

    void add(const ObjectiveResult& r, std::size_t m) {
        const double w = static_cast<double>(m);
        total += w * r.breakdown.total;
        acc += w * r.breakdown.acc_term;
        rob += w * r.r_theta;
        rprime += w * r.r_prime.value_or(r.r_theta);
        mer += w * r.breakdown.mer_term;
        ent_clean += w * r.breakdown.mean_entropy_clean;
        ent_adv += w * r.breakdown.mean_entropy_adv;
        count += m;
    }
};

}  // namespace

TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set,
                  const EpochCallback& on_epoch) {
    spec.validate();
    cfg.validate();
    train_set.validate();
    if (train_set.dim() != spec.input_dim) throw ShapeError("training data dimension does not match the network");

    TrainResult result;
    Params params = Params::init(spec, cfg.seed);
    result.final_params = params;
    result.best_params = params.frozen();
    if (cfg.epochs == 0) return result;

    AttackConfig attack = cfg.attack;
    if (!attack.interp && attack.iters > 1) attack.interp = cfg.log_interp;

    Velocity velocity = zero_velocity(params);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kShuffleStream));
    const std::uint64_t attack_seed = mix_seed(cfg.seed, kAttackStream);
    const std::uint64_t eval_seed = mix_seed(cfg.seed, kEvalStream);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    double best_robust = -1.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) try {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Accumulator sums;
        double lr = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const std::span<const std::size_t> ids(order.data() + begin, end - begin);
            const Tensor x = gather_rows(train_set.features, ids);
            std::vector<std::size_t> y;
            y.reserve(ids.size());
            for (auto i : ids) y.push_back(train_set.labels[i]);

            const AttackStream stream{attack_seed, static_cast<std::uint64_t>(epoch), 0};
            const AdvBatch adv = pgd_attack(spec, params, x, y, attack, stream, ids);

            lr = lr_at(static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(n_batches), cfg);
            try {
                const Tensor logits_clean = forward(spec, params, x);
                const Tensor logits_adv = forward(spec, params, adv.x_adv);
                std::optional<Tensor> logits_interp;
                if (adv.x_interp) logits_interp = forward(spec, params, *adv.x_interp);
                const ObjectiveResult r = objective_from_logits(cfg.objective, y, logits_clean,
                                                                logits_interp ? &*logits_interp : nullptr, logits_adv);
                if (!std::isfinite(r.breakdown.total)) throw NonFiniteError("loss");
                const auto grads = grad_params(r.loss, params);
                sgd_step(params, grads, velocity, lr, cfg);
                for (const auto& t : params.tensors()) {
                    for (double v : t.data()) {
                        if (!std::isfinite(v)) throw NonFiniteError("parameter update");
                    }
                }
                sums.add(r, ids.size());
            } catch (const NonFiniteError& e) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b) + " (lr " + std::to_string(lr) + "): " + e.what() +
                                       "; lower the learning rate or check the probability clamp");
            }
        }

        MetricsRecord m;
        m.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(sums.count);
        m.loss_total = sums.total * inv;
        m.loss_acc = sums.acc * inv;
        m.loss_rob = sums.rob * inv;
        m.loss_rprime = sums.rprime * inv;
        m.loss_mer = sums.mer * inv;
        m.ent_clean = sums.ent_clean * inv;
        m.ent_adv = sums.ent_adv * inv;
        const double optimized_rob = cfg.objective.needs_interp() ? m.loss_rprime : m.loss_rob;
        m.lambda_rob = cfg.objective.variant == Variant::PgdAt ? 0.0 : cfg.objective.lambda * optimized_rob;
        m.lr = lr;
        m.clean_acc = evaluate_clean_accuracy(spec, params, eval_set);
        m.robust_acc = evaluate_robust_accuracy(spec, params, eval_set, cfg.eval_attack, eval_seed);
        if (cfg.record_wall_time) {
            m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
        if (m.robust_acc > best_robust) {
            best_robust = m.robust_acc;
            result.best_epoch = epoch;
            result.best_params = params.frozen();
        }
        result.metrics.push_back(m);
        if (on_epoch) on_epoch(m);
    } catch (const NonFiniteError& e) {
        // Attack generation or evaluation on already-broken parameters.
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": " + e.what() +
                               "; lower the learning rate or check the probability clamp");
    }
    if (result.best_epoch) result.metrics[static_cast<std::size_t>(*result.best_epoch)].best = true;
    result.final_params = params;
    return result;
}

std::string metrics_csv_header() {
    return "epoch,clean_acc,robust_acc,loss_total,loss_acc,loss_rob,loss_rprime,loss_mer,ent_clean,ent_adv,lr,seconds";
}

std::string metrics_csv_row(const MetricsRecord& m) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f", m.epoch,
                  m.clean_acc, m.robust_acc, m.loss_total, m.loss_acc, m.loss_rob, m.loss_rprime, m.loss_mer,
                  m.ent_clean, m.ent_adv, m.lr, m.seconds);
    return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& metrics) {
    out << metrics_csv_header() << '\n';
    for (const auto& m : metrics) out << metrics_csv_row(m) << '\n';
}

}  // namespace bat
