#include "bat/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace bat {

std::string to_string(Variant variant) {
    switch (variant) {
        case Variant::PgdAt:
            return "pgd_at";
        case Variant::Trades:
            return "trades";
        case Variant::Fait:
            return "fait";
        case Variant::TradesMer:
            return "trades_mer";
        case Variant::FaitMer:
            return "fait_mer";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "pgd_at") return Variant::PgdAt;
    if (name == "trades") return Variant::Trades;
    if (name == "fait") return Variant::Fait;
    if (name == "trades_mer") return Variant::TradesMer;
    if (name == "fait_mer") return Variant::FaitMer;
    throw std::invalid_argument("unknown objective variant '" + name +
                                "' (expected pgd_at, trades, fait, trades_mer or fait_mer)");
}

void ObjectiveSpec::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("objective lambda must be >= 0");
    if (!(beta_cle >= 0.0) || !(beta_adv >= 0.0)) throw std::invalid_argument("objective betas must be >= 0");
}

std::string ObjectiveSpec::display_name() const {
    if (psi == Psi::Square) {
        switch (variant) {
            case Variant::Trades:
                return "SCORE";
            case Variant::Fait:
                return "FAIT_psi=S";
            case Variant::TradesMer:
                return "TRADES-MER_psi=S";
            case Variant::FaitMer:
                return "FAIT-MER_psi=S";
            case Variant::PgdAt:
                break;
        }
    }
    switch (variant) {
        case Variant::PgdAt:
            return "PGD-AT";
        case Variant::Trades:
            return lambda == 0.0 ? "STANDARD" : "TRADES";
        case Variant::Fait:
            return "FAIT";
        case Variant::TradesMer:
            return "TRADES-MER";
        case Variant::FaitMer:
            return "FAIT-MER";
    }
    return "?";
}

ObjectiveSpec ObjectiveSpec::standard() { return {Variant::Trades, 0.0, 0.0, 0.0, Psi::NegEntropy}; }
ObjectiveSpec ObjectiveSpec::pgd_at() { return {Variant::PgdAt, 0.0, 0.0, 0.0, Psi::NegEntropy}; }
ObjectiveSpec ObjectiveSpec::trades(double lambda) { return {Variant::Trades, lambda, 0.0, 0.0, Psi::NegEntropy}; }
ObjectiveSpec ObjectiveSpec::fait(double lambda) { return {Variant::Fait, lambda, 0.0, 0.0, Psi::NegEntropy}; }

ObjectiveSpec ObjectiveSpec::trades_mer(double lambda, double beta_cle, double beta_adv) {
    return {Variant::TradesMer, lambda, beta_cle, beta_adv, Psi::NegEntropy};
}

ObjectiveSpec ObjectiveSpec::fait_mer(double lambda, double beta_cle, double beta_adv) {
    return {Variant::FaitMer, lambda, beta_cle, beta_adv, Psi::NegEntropy};
}

ObjectiveSpec ObjectiveSpec::score(double lambda) { return {Variant::Trades, lambda, 0.0, 0.0, Psi::Square}; }
ObjectiveSpec ObjectiveSpec::fait_square(double lambda) { return {Variant::Fait, lambda, 0.0, 0.0, Psi::Square}; }

ObjectiveSpec ObjectiveSpec::trades_mer_square(double lambda, double beta_cle, double beta_adv) {
    return {Variant::TradesMer, lambda, beta_cle, beta_adv, Psi::Square};
}

InnerLoss default_inner_loss(const ObjectiveSpec& spec) {
    if (spec.variant == Variant::PgdAt) return InnerLoss::CE;
    return spec.psi == Psi::NegEntropy ? InnerLoss::KL : InnerLoss::SE;
}

// ---- per-example ----------------------------------------------------------------

namespace {

// The entropy-like quantity MER maximizes: H for -H, -S for S.
double mer_entropy(Psi psi, const ProbDist& p) { return psi == Psi::NegEntropy ? entropy(p) : -psi_value(Psi::Square, p); }

}  // namespace

double accuracy_loss(const ProbDist& p_clean, const OneHotLabel& y) { return kl(y, p_clean); }

double robustness_loss(Psi psi, const ProbDist& p_clean, const ProbDist& p_adv) { return bregman(psi, p_clean, p_adv); }

double fait_robustness_loss(Psi psi, const ProbDist& p_clean, const ProbDist& p_interp, const ProbDist& p_adv) {
    return bregman(psi, p_clean, p_interp) + bregman(psi, p_interp, p_adv);
}

double fait_robustness_loss_lemma_order(Psi psi, const ProbDist& p_clean, const ProbDist& p_interp,
                                        const ProbDist& p_adv) {
    return bregman(psi, p_interp, p_clean) + bregman(psi, p_adv, p_interp);
}

double mer_penalty(Psi psi, double beta_cle, double beta_adv, const ProbDist& p_clean, const ProbDist& p_adv) {
    return -(beta_cle * mer_entropy(psi, p_clean) + beta_adv * mer_entropy(psi, p_adv));
}

LossBreakdown total_loss(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                         std::span<const ProbDist> p_clean, std::optional<std::span<const ProbDist>> p_interp,
                         std::span<const ProbDist> p_adv) {
    spec.validate();
    const std::size_t m = labels.size();
    if (m == 0 || p_clean.size() != m || p_adv.size() != m) throw std::invalid_argument("total_loss: batch sizes differ");
    if (spec.needs_interp() && (!p_interp || p_interp->size() != m)) {
        throw std::invalid_argument("total_loss: " + spec.display_name() + " needs interpolation outputs");
    }
    LossBreakdown b;
    for (std::size_t i = 0; i < m; ++i) {
        const OneHotLabel y(labels[i], p_clean[i].size());
        b.mean_entropy_clean += entropy(p_clean[i]);
        b.mean_entropy_adv += entropy(p_adv[i]);
        if (spec.variant == Variant::PgdAt) {
            b.acc_term += accuracy_loss(p_adv[i], y);
            b.rob_term += robustness_loss(spec.psi, p_clean[i], p_adv[i]);
            continue;
        }
        b.acc_term += accuracy_loss(p_clean[i], y);
        b.rob_term += spec.needs_interp() ? fait_robustness_loss(spec.psi, p_clean[i], (*p_interp)[i], p_adv[i])
                                          : robustness_loss(spec.psi, p_clean[i], p_adv[i]);
        if (spec.uses_mer()) b.mer_term += mer_penalty(spec.psi, spec.beta_cle, spec.beta_adv, p_clean[i], p_adv[i]);
    }
    const double inv = 1.0 / static_cast<double>(m);
    b.acc_term *= inv;
    b.rob_term *= inv;
    b.mer_term *= inv;
    b.mean_entropy_clean *= inv;
    b.mean_entropy_adv *= inv;
    b.total = spec.variant == Variant::PgdAt ? b.acc_term : b.acc_term + spec.lambda * b.rob_term + b.mer_term;
    return b;
}

// ---- tensors ----------------------------------------------------------------------

namespace {

Tensor mer_entropy_rows(Psi psi, const Tensor& probs) {
    return psi == Psi::NegEntropy ? entropy_rows(probs) : scale(psi_rows(Psi::Square, probs), -1.0);
}

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    return s / static_cast<double>(t.numel());
}

}  // namespace

ObjectiveResult objective_from_probs(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                                     const Tensor& p_clean, const Tensor* p_interp, const Tensor& p_adv) {
    spec.validate();
    if (p_clean.shape() != p_adv.shape() || p_clean.rows() != labels.size()) {
        throw ShapeError("objective: clean/adversarial batches and labels disagree");
    }
    if (spec.needs_interp() && p_interp == nullptr) {
        throw std::invalid_argument("objective: " + spec.display_name() + " needs interpolation outputs");
    }
    if (p_interp && p_interp->shape() != p_clean.shape()) throw ShapeError("objective: interpolation batch shape differs");

    ObjectiveResult out;
    const Tensor r_rows = bregman_rows(spec.psi, p_clean, p_adv);
    std::optional<Tensor> rp_rows;
    if (p_interp) rp_rows = add(bregman_rows(spec.psi, p_clean, *p_interp), bregman_rows(spec.psi, *p_interp, p_adv));
    out.r_theta = mean_of(r_rows);
    if (rp_rows) out.r_prime = mean_of(*rp_rows);

    auto& b = out.breakdown;
    b.mean_entropy_clean = mean_of(entropy_rows(p_clean.detach()));
    b.mean_entropy_adv = mean_of(entropy_rows(p_adv.detach()));

    if (spec.variant == Variant::PgdAt) {
        const Tensor acc = cross_entropy_rows(p_adv, labels);
        out.loss = mean(acc);
        b.acc_term = out.loss.item();
        b.rob_term = out.r_theta;
        b.total = b.acc_term;
        return out;
    }

    const Tensor acc = cross_entropy_rows(p_clean, labels);
    const Tensor& rob = spec.needs_interp() ? *rp_rows : r_rows;
    Tensor per_example = add(acc, scale(rob, spec.lambda));
    b.acc_term = mean_of(acc);
    b.rob_term = mean_of(rob);
    if (spec.uses_mer()) {
        const Tensor mer = scale(add(scale(mer_entropy_rows(spec.psi, p_clean), spec.beta_cle),
                                     scale(mer_entropy_rows(spec.psi, p_adv), spec.beta_adv)),
                                 -1.0);
        per_example = add(per_example, mer);
        b.mer_term = mean_of(mer);
    }
    out.loss = mean(per_example);
    b.total = out.loss.item();
    return out;
}

ObjectiveResult objective_from_logits(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                                      const Tensor& logits_clean, const Tensor* logits_interp,
                                      const Tensor& logits_adv) {
    const Tensor p_clean = softmax_rows(logits_clean);
    const Tensor p_adv = softmax_rows(logits_adv);
    if (logits_interp) {
        const Tensor p_interp = softmax_rows(*logits_interp);
        return objective_from_probs(spec, labels, p_clean, &p_interp, p_adv);
    }
    return objective_from_probs(spec, labels, p_clean, nullptr, p_adv);
}

}  // namespace bat
