#pragma once

// Outer-minimization losses.
//
//   A      = CE(p(x), y)
//   R      = D_psi(p(x), p(x'))
//   R'     = D_psi(p(x), p(x*)) + D_psi(p(x*), p(x'))
//   MER    = -(beta_cle * H_psi(p(x)) + beta_adv * H_psi(p(x')))
//
// with H_psi the Shannon entropy for psi = -H and -S(p) = -sum p_i^2 for
// psi = S. PGD-AT minimizes CE(p(x'), y); TRADES A + lambda R; FAIT
// A + lambda R'; the -MER variants add the MER term.

#include <optional>
#include <span>
#include <string>

#include "bat/attacks.hpp"
#include "bat/simplex.hpp"
#include "bat/tensor.hpp"

namespace bat {

enum class Variant { PgdAt, Trades, Fait, TradesMer, FaitMer };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& name);

struct ObjectiveSpec {
    Variant variant = Variant::Trades;
    double lambda = 9.0;
    double beta_cle = 0.0;
    double beta_adv = 0.0;
    Psi psi = Psi::NegEntropy;

    bool needs_interp() const { return variant == Variant::Fait || variant == Variant::FaitMer; }
    bool uses_mer() const { return variant == Variant::TradesMer || variant == Variant::FaitMer; }
    void validate() const;

    // Report name, e.g. "TRADES", "SCORE", "FAIT_psi=S".
    std::string display_name() const;

    static ObjectiveSpec standard();  // TRADES with lambda = 0: plain CE training
    static ObjectiveSpec pgd_at();
    static ObjectiveSpec trades(double lambda = 9.0);
    static ObjectiveSpec fait(double lambda = 12.0);
    static ObjectiveSpec trades_mer(double lambda = 21.0, double beta_cle = 1.0, double beta_adv = 0.0);
    static ObjectiveSpec fait_mer(double lambda = 30.0, double beta_cle = 1.0, double beta_adv = 0.0);
    static ObjectiveSpec score(double lambda = 4.0);
    static ObjectiveSpec fait_square(double lambda = 8.0);
    static ObjectiveSpec trades_mer_square(double lambda = 10.0, double beta_cle = 1.0, double beta_adv = 0.0);
};

// Interpolation index paired with the FAIT presets.
inline constexpr int kFaitDefaultInterp = 2;

// The inner loss each variant pairs with: CE for PGD-AT, KL for the -H
// family, SE for the S family.
InnerLoss default_inner_loss(const ObjectiveSpec& spec);

struct LossBreakdown {
    double total = 0.0;
    double acc_term = 0.0;
    double rob_term = 0.0;
    double mer_term = 0.0;
    double mean_entropy_clean = 0.0;
    double mean_entropy_adv = 0.0;
};

// ---- per-example forms -------------------------------------------------------

double accuracy_loss(const ProbDist& p_clean, const OneHotLabel& y);
double robustness_loss(Psi psi, const ProbDist& p_clean, const ProbDist& p_adv);
// R' as trained: D(p_clean, p_interp) + D(p_interp, p_adv).
double fait_robustness_loss(Psi psi, const ProbDist& p_clean, const ProbDist& p_interp, const ProbDist& p_adv);
// Argument order under which the three-point bound holds:
// D(p_interp, p_clean) + D(p_adv, p_interp) <= D(p_adv, p_clean) whenever
// p_interp lies on the segment from p_clean to p_adv.
double fait_robustness_loss_lemma_order(Psi psi, const ProbDist& p_clean, const ProbDist& p_interp,
                                        const ProbDist& p_adv);
double mer_penalty(Psi psi, double beta_cle, double beta_adv, const ProbDist& p_clean, const ProbDist& p_adv);

// Batch average of the per-example breakdown.
LossBreakdown total_loss(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                         std::span<const ProbDist> p_clean, std::optional<std::span<const ProbDist>> p_interp,
                         std::span<const ProbDist> p_adv);

// ---- differentiable form -----------------------------------------------------

struct ObjectiveResult {
    Tensor loss;  // scalar, batch mean
    LossBreakdown breakdown;
    // Diagnostics logged for every variant.
    double r_theta = 0.0;
    std::optional<double> r_prime;
};

// Probabilities in, loss out; gradients flow through all three arguments.
ObjectiveResult objective_from_probs(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                                     const Tensor& p_clean, const Tensor* p_interp, const Tensor& p_adv);

ObjectiveResult objective_from_logits(const ObjectiveSpec& spec, std::span<const std::size_t> labels,
                                      const Tensor& logits_clean, const Tensor* logits_interp,
                                      const Tensor& logits_adv);

}  // namespace bat
