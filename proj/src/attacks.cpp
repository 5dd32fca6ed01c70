#include "bat/attacks.hpp"

#include <algorithm>
#include <random>

#include "bat/simplex.hpp"

namespace bat {

std::string to_string(InnerLoss loss) {
    switch (loss) {
        case InnerLoss::CE:
            return "ce";
        case InnerLoss::KL:
            return "kl";
        case InnerLoss::SE:
            return "se";
    }
    return "?";
}

InnerLoss parse_inner_loss(const std::string& name) {
    if (name == "ce") return InnerLoss::CE;
    if (name == "kl") return InnerLoss::KL;
    if (name == "se") return InnerLoss::SE;
    throw std::invalid_argument("unknown inner loss '" + name + "' (expected ce, kl or se)");
}

void AttackConfig::validate() const {
    if (!(eps >= 0.0)) throw std::invalid_argument("attack eps must be >= 0");
    if (iters < 0) throw std::invalid_argument("attack iters must be >= 0");
    if (iters > 0 && !(step > 0.0)) throw std::invalid_argument("attack step must be > 0 when iters > 0");
    if (interp && (*interp <= 0 || *interp >= iters)) {
        throw std::invalid_argument("attack interp must satisfy 0 < I < K (I=" + std::to_string(*interp) +
                                    ", K=" + std::to_string(iters) + ")");
    }
    if (restarts < 1) throw std::invalid_argument("attack restarts must be >= 1");
    if (!(rand_init_scale >= 0.0)) throw std::invalid_argument("attack rand_init_scale must be >= 0");
    if (!(box_lo < box_hi)) throw std::invalid_argument("attack box must satisfy lo < hi");
}

AttackConfig AttackConfig::image_default() {
    AttackConfig cfg;
    cfg.eps = 8.0 / 255.0;
    cfg.step = 2.0 / 255.0;
    cfg.iters = 10;
    cfg.box_lo = 0.0;
    cfg.box_hi = 1.0;
    return cfg;
}

AttackConfig AttackConfig::synthetic_default() { return AttackConfig{}; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2) + b * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Tensor project_linf_box(const Tensor& candidate, const Tensor& center, const AttackConfig& cfg) {
    if (candidate.shape() != center.shape()) {
        throw ShapeError("project_linf_box: shape mismatch " + shape_string(candidate.shape()) + " vs " +
                         shape_string(center.shape()));
    }
    const auto c = candidate.data();
    const auto x = center.data();
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lo = std::max(x[i] - cfg.eps, cfg.box_lo);
        const double hi = std::min(x[i] + cfg.eps, cfg.box_hi);
        out[i] = std::clamp(c[i], lo, hi);
    }
    return Tensor::from(candidate.shape(), std::move(out));
}

namespace {

// Sum over the batch of the per-example inner loss. Examples do not interact,
// so the input gradient of row i is that example's own gradient.
Tensor inner_objective(const NetworkSpec& spec, const Params& params, const Tensor& x_adv,
                       std::span<const std::size_t> labels, const Tensor& p_clean, InnerLoss loss) {
    const Tensor p_adv = softmax_rows(forward(spec, params, x_adv));
    switch (loss) {
        case InnerLoss::CE:
            return sum(cross_entropy_rows(p_adv, labels));
        case InnerLoss::KL:
            return sum(bregman_rows(Psi::NegEntropy, p_clean, p_adv));
        case InnerLoss::SE:
            return sum(bregman_rows(Psi::Square, p_clean, p_adv));
    }
    throw std::logic_error("unreachable");
}

}  // namespace

AdvBatch pgd_attack(const NetworkSpec& spec, const Params& params, const Tensor& x,
                    std::span<const std::size_t> labels, const AttackConfig& cfg, const AttackStream& stream,
                    std::span<const std::size_t> example_ids) {
    cfg.validate();
    if (x.rank() != 2) throw ShapeError("pgd_attack: input must be a matrix");
    const std::size_t m = x.rows(), d = x.cols();
    if (example_ids.size() != m) throw ShapeError("pgd_attack: one example id per row required");
    if (cfg.inner_loss == InnerLoss::CE && labels.size() != m) throw ShapeError("pgd_attack: one label per row required");

    const Params frozen = params.frozen();
    const Tensor center = x.detach();
    // p(x) is a constant of the inner problem.
    const Tensor p_clean = softmax_rows(forward(spec, frozen, center));

    std::vector<double> start(center.data().begin(), center.data().end());
    if (cfg.rand_init_scale > 0.0) {
        const std::uint64_t base = mix_seed(mix_seed(stream.seed, stream.epoch), stream.restart);
        for (std::size_t i = 0; i < m; ++i) {
            std::mt19937_64 rng(mix_seed(base, example_ids[i]));
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (std::size_t j = 0; j < d; ++j) start[i * d + j] += cfg.rand_init_scale * gauss(rng);
        }
    }
    // The noisy start is kept as is; only the update steps are projected.
    Tensor x_adv = Tensor::from(x.shape(), std::move(start));

    AdvBatch out;
    for (int k = 1; k <= cfg.iters; ++k) {
        Tensor probe = x_adv.detach();
        probe.set_requires_grad(true);
        const Tensor loss = inner_objective(spec, frozen, probe, labels, p_clean, cfg.inner_loss);
        const auto grad = gradients(loss, std::span<const Tensor>(&probe, 1))[0];
        std::vector<double> next(x_adv.data().begin(), x_adv.data().end());
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double g = grad[i];
            next[i] += cfg.step * static_cast<double>((g > 0.0) - (g < 0.0));
        }
        x_adv = project_linf_box(Tensor::from(x.shape(), std::move(next)), center, cfg);
        if (cfg.interp && k == *cfg.interp) out.x_interp = x_adv;
    }
    // With K = 0 the noisy start is returned projected.
    out.x_adv = cfg.iters == 0 ? project_linf_box(x_adv, center, cfg) : x_adv;
    return out;
}

std::vector<std::size_t> predict(const NetworkSpec& spec, const Params& params, const Tensor& x) {
    const Tensor logits = forward(spec, params.frozen(), x.detach());
    const std::size_t m = logits.rows(), n = logits.cols();
    std::vector<std::size_t> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = logits.data().subspan(i * n, n);
        out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double evaluate_clean_accuracy(const NetworkSpec& spec, const Params& params, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const auto pred = predict(spec, params, data.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_robust_accuracy(const NetworkSpec& spec, const Params& params, const Dataset& data,
                                const AttackConfig& cfg, std::uint64_t seed, std::size_t batch_size) {
    cfg.validate();
    if (data.size() == 0) return 0.0;
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    const Params frozen = params.frozen();
    std::vector<bool> robust(data.size(), true);
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(data.size(), begin + batch_size);
        std::vector<std::size_t> ids(end - begin);
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = begin + i;
        const Tensor x = gather_rows(data.features, ids);
        const std::vector<std::size_t> y(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                         data.labels.begin() + static_cast<std::ptrdiff_t>(end));
        for (int r = 0; r < cfg.restarts; ++r) {
            const AttackStream stream{seed, 0, static_cast<std::uint64_t>(r)};
            const auto adv = pgd_attack(spec, frozen, x, y, cfg, stream, ids);
            const auto pred = predict(spec, frozen, adv.x_adv);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (pred[i] != y[i]) robust[ids[i]] = false;
            }
        }
    }
    const auto hits = std::count(robust.begin(), robust.end(), true);
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace bat
