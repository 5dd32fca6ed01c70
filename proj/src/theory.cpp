#include "bat/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace bat {

BinaryPair::BinaryPair(double a_, double b_) : a(a_), b(b_) {
    if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0)) {
        throw std::invalid_argument("binary projections must lie strictly inside (0, 1)");
    }
}

std::string to_string(Condition c) {
    switch (c) {
        case Condition::C1:
            return "C1";
        case Condition::C2:
            return "C2";
        case Condition::C3:
            return "C3";
    }
    return "?";
}

std::optional<Condition> classify_condition(const BinaryPair& pair) {
    if (pair.a > 0.5 && pair.b <= 0.5) return Condition::C1;
    if (pair.a <= 0.5 && pair.b <= 0.5) return Condition::C2;
    if (pair.a > 0.5 && pair.b > 0.5) return Condition::C3;
    return std::nullopt;
}

namespace {

ProbDist bernoulli(double p) { return ProbDist({p, 1.0 - p}); }

}  // namespace

double binary_robustness_loss(const BinaryPair& pair) { return kl(bernoulli(pair.a), bernoulli(pair.b)); }

double check_lemma1(const ProbDist& p1, const ProbDist& p2, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    const ProbDist mid = ProbDist::mix(p1, p2, alpha);
    return kl(p2, p1) - kl(p2, mid) - kl(mid, p1);
}

namespace {

ProbDist random_simplex_point(std::mt19937_64& rng, std::size_t dim, bool near_vertex) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> p(dim);
    double total = 0.0;
    for (auto& v : p) {
        v = expo(rng);
        if (near_vertex) v = std::pow(v, 12.0);
        total += v;
    }
    for (auto& v : p) v /= total;
    if (near_vertex) {
        total = 0.0;
        for (auto& v : p) {
            v = std::max(v, 1e-10);
            total += v;
        }
        for (auto& v : p) v /= total;
    }
    return ProbDist(std::move(p));
}

}  // namespace

SweepReport sweep_lemma1(std::uint64_t n, const std::vector<std::size_t>& dims, std::uint64_t seed) {
    SweepReport report;
    report.name = "lemma1";
    report.seed = seed;
    report.worst_margin = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto dim : dims) {
        if (dim < 2) throw std::invalid_argument("lemma sweep dimensions must be >= 2");
        for (std::uint64_t i = 0; i < n; ++i) {
            const bool edge = i % 4 == 3;
            const ProbDist p1 = random_simplex_point(rng, dim, edge);
            const ProbDist p2 = random_simplex_point(rng, dim, edge);
            const double alpha = unit(rng);
            const double slack = check_lemma1(p1, p2, alpha);
            ++report.cases;
            report.worst_margin = std::min(report.worst_margin, slack);
            if (slack < -kLemmaTolerance) ++report.violations;
        }
    }
    report.note = "random (p1, p2, alpha) triples; every fourth pair near a simplex vertex";
    return report;
}

SweepReport sweep_bregman_identity(Psi psi, std::uint64_t n, const std::vector<std::size_t>& dims, std::uint64_t seed) {
    SweepReport report;
    report.name = psi == Psi::NegEntropy ? "bregman_kl" : "bregman_se";
    report.seed = seed;
    const double tol = psi == Psi::NegEntropy ? kBregmanKlTolerance : kBregmanSeTolerance;
    report.worst_margin = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    for (auto dim : dims) {
        for (std::uint64_t i = 0; i < n; ++i) {
            const bool edge = i % 4 == 3;
            const ProbDist p = random_simplex_point(rng, dim, edge);
            const ProbDist q = random_simplex_point(rng, dim, edge);
            const double closed = psi == Psi::NegEntropy ? kl(p, q) : se(p, q);
            const double margin = tol - std::abs(closed - bregman(psi, p, q));
            ++report.cases;
            report.worst_margin = std::min(report.worst_margin, margin);
            if (margin < 0.0) ++report.violations;
        }
    }
    report.note = psi == Psi::NegEntropy ? "|KL - D_negentropy| <= 1e-10" : "|SE - D_square| <= 1e-12";
    return report;
}

bool entropy_dominates(const BinaryPair& model1, const BinaryPair& model2) {
    // Binary entropy is decreasing in |p - 1/2|.
    return std::abs(model2.a - 0.5) <= std::abs(model1.a - 0.5) && std::abs(model2.b - 0.5) <= std::abs(model1.b - 0.5);
}

namespace {

TheoremVerdict verdict(bool admissible, const BinaryPair& pair1, const BinaryPair& pair2) {
    TheoremVerdict v{};
    v.admissible = admissible;
    v.r1 = binary_robustness_loss(pair1);
    v.r2 = binary_robustness_loss(pair2);
    v.margin = v.r1 - v.r2;
    v.holds = admissible && v.margin >= -kTheoremTolerance;
    return v;
}

}  // namespace

TheoremVerdict check_theorem1(const BinaryPair& pair1, const BinaryPair& pair2) {
    const auto c1 = classify_condition(pair1);
    const auto c2 = classify_condition(pair2);
    // Identical conditions on both points imply identical argmaxes.
    const bool admissible = c1 == Condition::C1 && c2 == Condition::C1 && entropy_dominates(pair1, pair2);
    return verdict(admissible, pair1, pair2);
}

TheoremVerdict check_theorem2(const BinaryPair& pair1, const BinaryPair& pair2) {
    const auto c1 = classify_condition(pair1);
    const auto c2 = classify_condition(pair2);
    const bool region = c1 && c1 == c2 && (*c1 == Condition::C2 || *c1 == Condition::C3);
    const bool same_gap = std::abs((pair1.a - pair1.b) - (pair2.a - pair2.b)) <= 1e-12;
    return verdict(region && same_gap && entropy_dominates(pair1, pair2), pair1, pair2);
}

namespace {

struct Grid {
    long lo_index;
    long hi_index;
    long half_index;
    double step;

    Grid(double resolution, double lo) : step(resolution) {
        if (!(resolution > 0.0) || !(lo > 0.0) || !(lo < 0.5)) throw std::invalid_argument("bad grid parameters");
        const double half = 0.5 / resolution;
        half_index = std::lround(half);
        if (std::abs(half - static_cast<double>(half_index)) > 1e-9) {
            throw std::invalid_argument("grid resolution must divide 1/2");
        }
        lo_index = std::lround(lo / resolution);
        hi_index = 2 * half_index - lo_index;
        if (lo_index < 1) throw std::invalid_argument("grid must stay inside (0, 1)");
    }

    double value(long i) const { return static_cast<double>(i) * step; }
};

void record(SweepReport& report, const TheoremVerdict& v) {
    ++report.cases;
    report.worst_margin = std::min(report.worst_margin, v.margin);
    if (!v.holds) ++report.violations;
}

}  // namespace

SweepReport sweep_theorem1(double resolution, double lo) {
    const Grid g(resolution, lo);
    SweepReport report;
    report.name = "theorem1";
    report.resolution = resolution;
    report.worst_margin = std::numeric_limits<double>::infinity();
    // Admissible set: a1 > a2 > 1/2 side, b1 <= b2 <= 1/2 side, expressed on
    // integer indices so the predicates are exact.
    for (long a1 = g.half_index + 1; a1 <= g.hi_index; ++a1) {
        for (long b1 = g.lo_index; b1 <= g.half_index; ++b1) {
            const BinaryPair p1(g.value(a1), g.value(b1));
            for (long a2 = g.half_index + 1; a2 <= a1; ++a2) {
                for (long b2 = b1; b2 <= g.half_index; ++b2) {
                    const BinaryPair p2(g.value(a2), g.value(b2));
                    const auto v = check_theorem1(p1, p2);
                    if (!v.admissible) {
                        throw std::logic_error("C1 grid enumerated an inadmissible pair");
                    }
                    record(report, v);
                }
            }
        }
    }
    report.note = "condition C1 on both models, entropy dominance on both points";
    return report;
}

SweepReport sweep_theorem2(Condition region, double resolution, double lo) {
    if (region == Condition::C1) throw std::invalid_argument("matched-gap grid covers C2 and C3 only");
    const Grid g(resolution, lo);
    SweepReport report;
    report.name = "theorem2_" + to_string(region);
    report.resolution = resolution;
    report.worst_margin = std::numeric_limits<double>::infinity();
    const long first = region == Condition::C2 ? g.lo_index : g.half_index + 1;
    const long last = region == Condition::C2 ? g.half_index : g.hi_index;
    auto closer = [&](long inner, long outer) {
        return std::abs(inner - g.half_index) <= std::abs(outer - g.half_index);
    };
    for (long a1 = first; a1 <= last; ++a1) {
        for (long b1 = first; b1 <= last; ++b1) {
            const long gap = a1 - b1;
            const BinaryPair p1(g.value(a1), g.value(b1));
            for (long a2 = first; a2 <= last; ++a2) {
                const long b2 = a2 - gap;
                if (b2 < first || b2 > last) continue;
                if (!closer(a2, a1) || !closer(b2, b1)) continue;
                const BinaryPair p2(g.value(a2), g.value(b2));
                const auto v = check_theorem2(p1, p2);
                if (!v.admissible) throw std::logic_error("matched-gap grid enumerated an inadmissible pair");
                record(report, v);
            }
        }
    }
    report.note =
        "matched clean-adversarial gap d on constructed distribution pairs; independently trained networks rarely "
        "satisfy d1 = d2 exactly";
    return report;
}

// ---- sampled definitions -------------------------------------------------------------

DominanceReport entropy_dominance_sampled(const Classifier& model1, const Classifier& model2, const Dataset& data,
                                          const AttackConfig& ball, std::size_t n_samples, std::uint64_t seed) {
    DominanceReport report{true, true, 0, seed, std::numeric_limits<double>::infinity()};
    const std::size_t n = data.size(), d = data.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const auto x = data.features.data();
    std::vector<double> points;
    points.reserve(n * n_samples * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < n_samples; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                const double v = x[i * d + j] + ball.eps * unit(rng);
                points.push_back(std::clamp(v, ball.box_lo, ball.box_hi));
            }
        }
    }
    const std::size_t total = n * n_samples;
    if (total == 0) return report;
    const Tensor batch = Tensor::from({total, d}, std::move(points));
    const auto p1 = to_dists(softmax_rows(model1(batch)));
    const auto p2 = to_dists(softmax_rows(model2(batch)));
    for (std::size_t k = 0; k < total; ++k) {
        const double gap = entropy(p2[k]) - entropy(p1[k]);
        report.worst_entropy_gap = std::min(report.worst_entropy_gap, gap);
        // Equal models must compare equal; allow only rounding-level slack.
        if (gap < -1e-12) report.entropy_dominance = false;
        if (p1[k].argmax() != p2[k].argmax()) report.adv_convergence = false;
    }
    report.samples = total;
    return report;
}

Classifier as_classifier(const NetworkSpec& spec, const Params& params) {
    return [spec, frozen = params.frozen()](const Tensor& batch) { return forward(spec, frozen, batch); };
}

Classifier with_temperature(Classifier base, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    return [base = std::move(base), temperature](const Tensor& batch) { return scale(base(batch), 1.0 / temperature); };
}

Classifier with_permuted_classes(Classifier base, std::vector<std::size_t> perm) {
    return [base = std::move(base), perm = std::move(perm)](const Tensor& batch) {
        const Tensor logits = base(batch);
        const std::size_t m = logits.rows(), n = logits.cols();
        if (perm.size() != n) throw ShapeError("permutation size does not match class count");
        std::vector<double> out(m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = logits.at(i, perm[j]);
        return Tensor::from({m, n}, std::move(out));
    };
}

}  // namespace bat
