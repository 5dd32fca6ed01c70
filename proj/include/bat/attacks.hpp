#pragma once

// l-infinity PGD adversaries.
//
// Each example starts at x + scale * N(0, I) and takes K signed-gradient
// steps on the inner loss, projecting back into B(x, eps) and the input box
// after every step. The iterate after step I is kept as the interpolation
// point x*.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bat/data.hpp"
#include "bat/network.hpp"
#include "bat/tensor.hpp"

namespace bat {

enum class InnerLoss { CE, KL, SE };

std::string to_string(InnerLoss loss);
InnerLoss parse_inner_loss(const std::string& name);

struct AttackConfig {
    double eps = 0.1;
    double step = 0.025;
    int iters = 10;
    std::optional<int> interp;
    InnerLoss inner_loss = InnerLoss::KL;
    int restarts = 1;
    double rand_init_scale = 0.001;
    double box_lo = -3.0;
    double box_hi = 3.0;

    void validate() const;

    static AttackConfig image_default();  // eps 8/255, step 2/255, K 10, box [0, 1]
    static AttackConfig synthetic_default();
};

// Identifies the random stream of one attack invocation. Per-example noise is
// derived from (seed, epoch, restart, example id), so the adversary for an
// example never depends on which batch it was generated in.
struct AttackStream {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t restart = 0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct AdvBatch {
    Tensor x_adv;
    std::optional<Tensor> x_interp;
};

Tensor project_linf_box(const Tensor& candidate, const Tensor& center, const AttackConfig& cfg);

// Labels are only read for the CE inner loss. Parameters are never modified.
AdvBatch pgd_attack(const NetworkSpec& spec, const Params& params, const Tensor& x,
                    std::span<const std::size_t> labels, const AttackConfig& cfg, const AttackStream& stream,
                    std::span<const std::size_t> example_ids);

// Row-wise argmax, ties to the lowest index.
std::vector<std::size_t> predict(const NetworkSpec& spec, const Params& params, const Tensor& x);

double evaluate_clean_accuracy(const NetworkSpec& spec, const Params& params, const Dataset& data);

// An example counts as robust only if every restart's adversary is still
// classified correctly.
double evaluate_robust_accuracy(const NetworkSpec& spec, const Params& params, const Dataset& data,
                                const AttackConfig& cfg, std::uint64_t seed = 0, std::size_t batch_size = 512);

}  // namespace bat
