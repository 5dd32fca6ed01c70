#include "bat/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bat {

std::string to_string(Psi psi) { return psi == Psi::NegEntropy ? "neg_entropy" : "square"; }

Psi parse_psi(const std::string& name) {
    if (name == "neg_entropy" || name == "kl") return Psi::NegEntropy;
    if (name == "square" || name == "se") return Psi::Square;
    throw std::invalid_argument("unknown psi '" + name + "' (expected neg_entropy or square)");
}

namespace {

double clamped_log(double p) { return std::log(std::max(p, kProbFloor)); }

void require_same_size(const ProbDist& p, const ProbDist& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("distribution dimensions differ: " + std::to_string(p.size()) + " vs " +
                                    std::to_string(q.size()));
    }
}

}  // namespace

ProbDist::ProbDist(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.empty()) throw std::invalid_argument("empty distribution");
    double total = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
        total += v;
    }
    if (std::abs(total - 1.0) > kSimplexSumTolerance) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(total) + ", not 1");
    }
}

ProbDist ProbDist::uniform(std::size_t n) { return ProbDist(std::vector<double>(n, 1.0 / static_cast<double>(n))); }

std::size_t ProbDist::argmax() const {
    return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

ProbDist ProbDist::mix(const ProbDist& a, const ProbDist& b, double alpha) {
    require_same_size(a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - alpha) * a[i] + alpha * b[i];
    return ProbDist(std::move(out));
}

OneHotLabel::OneHotLabel(std::size_t index_, std::size_t count_) : index(index_), count(count_) {
    if (count < 1 || index >= count) {
        throw std::invalid_argument("label index " + std::to_string(index) + " out of range for " +
                                    std::to_string(count) + " classes");
    }
}

ProbDist softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - top);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return ProbDist(std::move(p));
}

double entropy(const ProbDist& p) {
    double h = 0.0;
    for (double v : p.values()) h -= v * clamped_log(v);
    return h;
}

double psi_value(Psi psi, const ProbDist& p) {
    double s = 0.0;
    if (psi == Psi::NegEntropy) {
        for (double v : p.values()) s += v * clamped_log(v);
    } else {
        for (double v : p.values()) s += v * v;
    }
    return s;
}

std::vector<double> psi_gradient(Psi psi, const ProbDist& p) {
    std::vector<double> g(p.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = psi == Psi::NegEntropy ? clamped_log(p[i]) + 1.0 : 2.0 * p[i];
    return g;
}

double bregman(Psi psi, const ProbDist& p, const ProbDist& q) {
    require_same_size(p, q);
    const auto grad = psi_gradient(psi, q);
    double linear = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) linear += grad[i] * (p[i] - q[i]);
    return psi_value(psi, p) - psi_value(psi, q) - linear;
}

double kl(const ProbDist& p, const ProbDist& q) {
    require_same_size(p, q);
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += p[i] * (clamped_log(p[i]) - clamped_log(q[i]));
    return d;
}

double kl(const OneHotLabel& y, const ProbDist& q) {
    if (y.count != q.size()) throw std::invalid_argument("label class count does not match distribution");
    return -clamped_log(q[y.index]);
}

double se(const ProbDist& p, const ProbDist& q) {
    require_same_size(p, q);
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += (p[i] - q[i]) * (p[i] - q[i]);
    return d;
}

ProbDist one_hot(const OneHotLabel& label) {
    std::vector<double> p(label.count, 0.0);
    p[label.index] = 1.0;
    return ProbDist(std::move(p));
}

// ---- tensors ----------------------------------------------------------------

Tensor psi_rows(Psi psi, const Tensor& probs) {
    if (psi == Psi::NegEntropy) return sum_rows(mul(probs, log(clamp_min(probs, kProbFloor))));
    return sum_rows(square(probs));
}

Tensor entropy_rows(const Tensor& probs) { return scale(psi_rows(Psi::NegEntropy, probs), -1.0); }

Tensor bregman_rows(Psi psi, const Tensor& p, const Tensor& q) {
    const Tensor grad_q =
        psi == Psi::NegEntropy ? add_scalar(log(clamp_min(q, kProbFloor)), 1.0) : scale(q, 2.0);
    const Tensor linear = sum_rows(mul(grad_q, sub(p, q)));
    return sub(sub(psi_rows(psi, p), psi_rows(psi, q)), linear);
}

Tensor kl_rows(const Tensor& p, const Tensor& q) {
    return sum_rows(mul(p, sub(log(clamp_min(p, kProbFloor)), log(clamp_min(q, kProbFloor)))));
}

Tensor se_rows(const Tensor& p, const Tensor& q) { return sum_rows(square(sub(p, q))); }

Tensor cross_entropy_rows(const Tensor& probs, std::span<const std::size_t> labels) {
    return scale(log(clamp_min(pick(probs, labels), kProbFloor)), -1.0);
}

Tensor to_tensor(std::span<const ProbDist> rows) {
    if (rows.empty()) throw std::invalid_argument("no distributions");
    const std::size_t n = rows.front().size();
    std::vector<double> values;
    values.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw std::invalid_argument("distributions of mixed dimension");
        values.insert(values.end(), r.values().begin(), r.values().end());
    }
    return Tensor::from({rows.size(), n}, std::move(values));
}

std::vector<ProbDist> to_dists(const Tensor& probs) {
    std::vector<ProbDist> out;
    const std::size_t m = probs.rows(), n = probs.cols();
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.emplace_back(std::vector<double>(probs.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                                             probs.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
    }
    return out;
}

}  // namespace bat
