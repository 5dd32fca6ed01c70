#pragma once

// Numerical checks of the binary-case results on robustness-loss geometry.
//
// A binary distribution is represented by its projection onto the label,
// a = p(x)^T y and b = p(x')^T y, so R = KL(Bern(a) || Bern(b)).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bat/attacks.hpp"
#include "bat/data.hpp"
#include "bat/network.hpp"
#include "bat/simplex.hpp"

namespace bat {

struct BinaryPair {
    double a;  // clean projection onto y
    double b;  // adversarial projection onto y

    BinaryPair(double a, double b);
};

enum class Condition { C1, C2, C3 };

std::string to_string(Condition c);

// C1: a > 1/2 >= b;  C2: a, b <= 1/2;  C3: a, b > 1/2.
// The remaining pattern a <= 1/2 < b (adversary more correct than the
// clean point) has no condition and yields nullopt.
std::optional<Condition> classify_condition(const BinaryPair& pair);

// KL(Bern(a) || Bern(b))
double binary_robustness_loss(const BinaryPair& pair);

// KL(p2 || p1) - KL(p2 || p*) - KL(p* || p1) with p* = (1 - alpha) p1 + alpha p2.
double check_lemma1(const ProbDist& p1, const ProbDist& p2, double alpha);

struct SweepReport {
    std::string name;
    std::uint64_t cases = 0;
    std::uint64_t violations = 0;
    double worst_margin = 0.0;  // smallest observed slack
    double resolution = 0.0;    // grid step; 0 for random sweeps
    std::uint64_t seed = 0;
    std::string note;

    bool passed() const { return violations == 0; }
};

inline constexpr double kLemmaTolerance = 1e-12;
inline constexpr double kTheoremTolerance = 1e-12;

// n random triples per dimension: p1, p2 uniform on the simplex (every
// fourth pair pushed toward a vertex, with a 1e-10 component floor) and
// alpha uniform on [0, 1].
SweepReport sweep_lemma1(std::uint64_t n, const std::vector<std::size_t>& dims, std::uint64_t seed);

inline constexpr double kBregmanKlTolerance = 1e-10;
inline constexpr double kBregmanSeTolerance = 1e-12;

// Compares the generic Bregman form against its closed-form specialization
// (KL for NegEntropy, squared error for Square) on n random simplex pairs per
// dimension. worst_margin is tolerance minus the largest deviation.
SweepReport sweep_bregman_identity(Psi psi, std::uint64_t n, const std::vector<std::size_t>& dims, std::uint64_t seed);

struct TheoremVerdict {
    bool admissible;   // hypotheses hold for the pair of pairs
    double r1;
    double r2;
    double margin;     // r1 - r2
    bool holds;        // admissible && margin >= -tolerance
};

// Entropy dominance of model 2 over model 1 on both points plus agreement
// of the predicted class on both points.
bool entropy_dominates(const BinaryPair& model1, const BinaryPair& model2);

TheoremVerdict check_theorem1(const BinaryPair& pair1, const BinaryPair& pair2);
TheoremVerdict check_theorem2(const BinaryPair& pair1, const BinaryPair& pair2);

// Exhaustive grids over [lo, 1 - lo] at step `resolution` (both multiples
// of 0.01 in practice). The matched-gap grid keeps a1 - b1 = a2 - b2 exactly, on the
// integer grid.
SweepReport sweep_theorem1(double resolution = 0.01, double lo = 0.01);
SweepReport sweep_theorem2(Condition region, double resolution = 0.01, double lo = 0.01);

// Sampled surrogates for the "for every point of B(D, eps)" quantifiers.
struct DominanceReport {
    bool entropy_dominance;  // H(p1(x~)) <= H(p2(x~)) on every sample
    bool adv_convergence;    // argmax agrees on every sample
    std::uint64_t samples;
    std::uint64_t seed;
    double worst_entropy_gap;  // min over samples of H2 - H1
};

using Classifier = std::function<Tensor(const Tensor&)>;  // batch -> logits

DominanceReport entropy_dominance_sampled(const Classifier& model1, const Classifier& model2, const Dataset& data,
                                          const AttackConfig& ball, std::size_t n_samples, std::uint64_t seed);

Classifier as_classifier(const NetworkSpec& spec, const Params& params);
// Logits divided by temperature.
Classifier with_temperature(Classifier base, double temperature);
// Output classes permuted: new logit j is old logit perm[j].
Classifier with_permuted_classes(Classifier base, std::vector<std::size_t> perm);

}  // namespace bat
