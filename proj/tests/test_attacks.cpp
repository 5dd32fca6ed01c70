#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bat/attacks.hpp"
#include "bat/data.hpp"
#include "bat/network.hpp"
#include "bat/simplex.hpp"
#include "bat/train.hpp"

using namespace bat;
using doctest::Approx;

namespace {

std::vector<std::size_t> iota_ids(std::size_t n, std::size_t start = 0) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), start);
    return v;
}

// Two-class 1-D logistic model: logit_1 - logit_0 = w x.
Params logistic(double w) {
    const NetworkSpec spec{1, {}, 2, Activation::Relu};
    Params p = Params::zeros(spec);
    p.layers()[0].weight.mutable_data()[1] = w;
    return p;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("projection clamps to ball and box") {
    AttackConfig cfg = AttackConfig::image_default();
    const Tensor c = Tensor::from({1, 1}, {0.5});
    CHECK(project_linf_box(Tensor::from({1, 1}, {0.6}), c, cfg).item() == Approx(0.531373).epsilon(1e-6));
    const Tensor edge = Tensor::from({1, 1}, {0.99});
    CHECK(project_linf_box(Tensor::from({1, 1}, {1.02}), edge, cfg).item() == 1.0);
    CHECK(project_linf_box(Tensor::from({1, 1}, {0.51}), c, cfg).item() == 0.51);
    CHECK_THROWS_AS(project_linf_box(Tensor::zeros({1, 2}), c, cfg), ShapeError);
}

TEST_CASE("config validation") {
    AttackConfig cfg;
    cfg.interp = 0;
    CHECK_THROWS(cfg.validate());
    cfg.interp = cfg.iters;
    CHECK_THROWS(cfg.validate());
    cfg.interp = 2;
    CHECK_NOTHROW(cfg.validate());
    cfg.restarts = 0;
    CHECK_THROWS(cfg.validate());
    const AttackConfig img = AttackConfig::image_default();
    CHECK(img.eps == Approx(8.0 / 255.0));
    CHECK(img.step == Approx(2.0 / 255.0));
    CHECK(img.iters == 10);
    CHECK(img.rand_init_scale == 0.001);
    CHECK(parse_inner_loss("se") == InnerLoss::SE);
}

TEST_CASE("eps zero leaves inputs unchanged") {
    const NetworkSpec spec{2, {8}, 2, Activation::Relu};
    const Params p = Params::init(spec, 1);
    const Dataset d = gen_two_moons(200, 0.1, 3);
    AttackConfig cfg;
    cfg.eps = 0.0;
    cfg.interp = 2;
    const AdvBatch adv = pgd_attack(spec, p, d.features, d.labels, cfg, {1, 0, 0}, iota_ids(200));
    for (std::size_t i = 0; i < d.features.numel(); ++i) {
        CHECK(adv.x_adv.data()[i] == d.features.data()[i]);
        CHECK(adv.x_interp->data()[i] == d.features.data()[i]);
    }
    CHECK(evaluate_robust_accuracy(spec, p, d, cfg, 4) == evaluate_clean_accuracy(spec, p, d));
}

TEST_CASE("interpolation point is the iterate after step I") {
    const NetworkSpec spec{2, {8}, 2, Activation::Tanh};
    const Params p = Params::init(spec, 2);
    const Dataset d = gen_two_moons(50, 0.1, 4);
    AttackConfig full;
    full.iters = 10;
    full.interp = 2;
    AttackConfig two = full;
    two.iters = 2;
    two.interp.reset();
    const auto ids = iota_ids(50);
    const AdvBatch a = pgd_attack(spec, p, d.features, d.labels, full, {5, 1, 0}, ids);
    const AdvBatch b = pgd_attack(spec, p, d.features, d.labels, two, {5, 1, 0}, ids);
    for (std::size_t i = 0; i < d.features.numel(); ++i) CHECK(a.x_interp->data()[i] == b.x_adv.data()[i]);
}

TEST_CASE("linear model saturates at +eps") {
    const NetworkSpec spec{1, {}, 2, Activation::Relu};
    const Params p = logistic(1.5);
    const Tensor x = Tensor::from({3, 1}, {-0.5, -1.0, -2.0});  // true class 0 on the negative side
    const std::vector<std::size_t> y{0, 0, 0};
    AttackConfig cfg;
    cfg.eps = 0.2;
    cfg.step = cfg.eps / 4;
    cfg.iters = 10;
    cfg.inner_loss = InnerLoss::CE;
    const AdvBatch adv = pgd_attack(spec, p, x, y, cfg, {0, 0, 0}, iota_ids(3));
    for (std::size_t i = 0; i < 3; ++i) CHECK(adv.x_adv.at(i) - x.at(i) == Approx(0.2).epsilon(1e-12));
}

TEST_CASE("robust accuracy is monotone in eps for the linear model") {
    const NetworkSpec spec{1, {}, 2, Activation::Relu};
    const Params p = logistic(1.0);
    Dataset d;
    std::vector<double> xs;
    for (int i = 0; i < 100; ++i) {
        const double v = -1.0 + 0.02 * i;
        xs.push_back(v);
        d.labels.push_back(v > 0 ? 1 : 0);
    }
    d.features = Tensor::from({100, 1}, xs);
    d.classes = 2;
    AttackConfig cfg;
    cfg.inner_loss = InnerLoss::CE;
    cfg.eps = 0.1, cfg.step = 0.025;
    const double r1 = evaluate_robust_accuracy(spec, p, d, cfg, 0);
    cfg.eps = 0.2, cfg.step = 0.05;
    const double r2 = evaluate_robust_accuracy(spec, p, d, cfg, 0);
    CHECK(r1 >= r2);
    CHECK(r1 < evaluate_clean_accuracy(spec, p, d));
}

TEST_CASE("constant classifier: robust equals clean equals the majority prior") {
    const NetworkSpec spec{2, {4}, 2, Activation::Relu};
    Params p = Params::zeros(spec);
    p.layers()[1].bias.mutable_data()[1] = 1.0;  // always class 1
    Dataset d = gen_gaussian_blobs(90, {{-1, 0}, {1, 0}}, 0.3, 2);
    for (std::size_t i = 0; i < 30; ++i) d.labels[i] = 1;
    const double prior =
        static_cast<double>(std::count(d.labels.begin(), d.labels.end(), 1)) / static_cast<double>(d.labels.size());
    AttackConfig cfg;
    cfg.eps = 0.5, cfg.step = 0.1, cfg.restarts = 2;
    CHECK(evaluate_clean_accuracy(spec, p, d) == Approx(prior));
    CHECK(evaluate_robust_accuracy(spec, p, d, cfg, 1) == Approx(prior));
}

TEST_CASE("adversary depends on example id, not batch position") {
    const NetworkSpec spec{2, {8}, 2, Activation::Relu};
    const Params p = Params::init(spec, 3);
    const Dataset d = gen_two_moons(40, 0.1, 5);
    AttackConfig cfg;
    const AdvBatch whole = pgd_attack(spec, p, d.features, d.labels, cfg, {9, 2, 0}, iota_ids(40));
    const std::vector<std::size_t> rows{30, 31, 32, 33};
    const Tensor part = gather_rows(d.features, rows);
    const std::vector<std::size_t> part_y{d.labels[30], d.labels[31], d.labels[32], d.labels[33]};
    const AdvBatch sub = pgd_attack(spec, p, part, part_y, cfg, {9, 2, 0}, rows);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(sub.x_adv.at(r, c) == whole.x_adv.at(rows[r], c));
    // Sign steps can saturate to the same corner; compare the random starts.
    cfg.iters = 0;
    const AdvBatch start = pgd_attack(spec, p, d.features, d.labels, cfg, {9, 2, 0}, iota_ids(40));
    const AdvBatch other = pgd_attack(spec, p, d.features, d.labels, cfg, {9, 3, 0}, iota_ids(40));
    CHECK(other.x_adv.at(0, 0) != start.x_adv.at(0, 0));
}

TEST_CASE("attack leaves parameters bit-identical") {
    const NetworkSpec spec{2, {8}, 2, Activation::Relu};
    const Params p = Params::init(spec, 4).trainable();
    const auto before = p.serialize();
    const Dataset d = gen_two_moons(64, 0.1, 6);
    AttackConfig cfg;
    cfg.interp = 3;
    pgd_attack(spec, p, d.features, d.labels, cfg, {1, 1, 1}, iota_ids(64));
    CHECK(p.serialize() == before);
}

TEST_CASE("interpolation point is more adversarial on a trained model") {
    const NetworkSpec spec{2, {32, 32}, 2, Activation::Relu};
    TrainConfig tc = TrainConfig::two_moons(ObjectiveSpec::trades(), 0);
    tc.epochs = 10;
    const Dataset train_set = gen_two_moons(1000, 0.15, 0);
    const Dataset eval_set = gen_two_moons(500, 0.15, 1);
    const Params p = train(spec, tc, train_set, eval_set).final_params;
    AttackConfig cfg = tc.attack;
    cfg.eps = 0.2, cfg.step = 0.05, cfg.interp = 2, cfg.inner_loss = InnerLoss::CE;
    const AdvBatch adv = pgd_attack(spec, p, eval_set.features, eval_set.labels, cfg, {0, 0, 0}, iota_ids(500));
    const Tensor l0 = cross_entropy_rows(softmax_rows(forward(spec, p, eval_set.features)), eval_set.labels);
    const Tensor li = cross_entropy_rows(softmax_rows(forward(spec, p, *adv.x_interp)), eval_set.labels);
    std::size_t more = 0;
    for (std::size_t i = 0; i < 500; ++i) more += li.at(i) >= l0.at(i);
    CHECK(static_cast<double>(more) / 500.0 >= 0.9);
}

TEST_CASE("predict breaks ties toward the lowest index") {
    const NetworkSpec spec{2, {3}, 3, Activation::Relu};
    CHECK(predict(spec, Params::zeros(spec), Tensor::zeros({2, 2})) == std::vector<std::size_t>{0, 0});
}

}  // TEST_SUITE
