#pragma once

// Probability-simplex math: softmax, entropy, the generator functions psi and
// the Bregman divergence they induce.
//
//   D_psi(p, q) = psi(p) - psi(q) - <grad psi(q), p - q>
//
// psi = sum p_i ln p_i gives the KL divergence, psi = sum p_i^2 the squared
// error. Every logarithm sees its argument clamped to >= kProbFloor.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bat/tensor.hpp"

namespace bat {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kSimplexSumTolerance = 1e-9;

enum class Psi { NegEntropy, Square };

std::string to_string(Psi psi);
Psi parse_psi(const std::string& name);

class ProbDist {
   public:
    // Throws std::invalid_argument unless every component is in [0, 1] and
    // the components sum to 1 within kSimplexSumTolerance.
    explicit ProbDist(std::vector<double> probs);

    static ProbDist uniform(std::size_t n);

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> values() const { return p_; }

    // Lowest index among the maxima.
    std::size_t argmax() const;

    // (1 - alpha) * a + alpha * b
    static ProbDist mix(const ProbDist& a, const ProbDist& b, double alpha);

   private:
    std::vector<double> p_;
};

struct OneHotLabel {
    std::size_t index;
    std::size_t count;

    OneHotLabel(std::size_t index, std::size_t count);
};

ProbDist softmax(std::span<const double> logits);
double entropy(const ProbDist& p);

double psi_value(Psi psi, const ProbDist& p);
std::vector<double> psi_gradient(Psi psi, const ProbDist& p);

double bregman(Psi psi, const ProbDist& p, const ProbDist& q);
double kl(const ProbDist& p, const ProbDist& q);
// KL(y || q) = -ln q_y; the label's zero entries contribute exactly 0.
double kl(const OneHotLabel& y, const ProbDist& q);
double se(const ProbDist& p, const ProbDist& q);

ProbDist one_hot(const OneHotLabel& label);

// ---- differentiable row-wise forms ------------------------------------------
//
// Inputs are [m, n] tensors whose rows are distributions; outputs are [m].

Tensor entropy_rows(const Tensor& probs);
Tensor psi_rows(Psi psi, const Tensor& probs);
Tensor bregman_rows(Psi psi, const Tensor& p, const Tensor& q);
Tensor kl_rows(const Tensor& p, const Tensor& q);
Tensor se_rows(const Tensor& p, const Tensor& q);
// -ln max(p[i, y_i], kProbFloor)
Tensor cross_entropy_rows(const Tensor& probs, std::span<const std::size_t> labels);

// Helpers between the two representations.
Tensor to_tensor(std::span<const ProbDist> rows);
std::vector<ProbDist> to_dists(const Tensor& probs);

}  // namespace bat
