#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bat/network.hpp"
#include "bat/simplex.hpp"
#include "bat/tensor.hpp"

using namespace bat;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

// Weighted sum so that every output element gets a distinct cotangent.
Tensor weighted_sum(const Tensor& t) {
    std::vector<double> w(t.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i);
    return sum(mul(t, Tensor::from(t.shape(), w)));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("construction and accessors") {
    const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK(Tensor::full({2, 2}, 7.0).at(3) == 7.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor::from({1}, {std::numeric_limits<double>::quiet_NaN()}), NonFiniteError);
    CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("shape errors are descriptive") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
    }
}

TEST_CASE("non-finite results are rejected") {
    const Tensor big = Tensor::from({1}, {1e308});
    CHECK_THROWS_AS(scale(big, 10.0), NonFiniteError);
    CHECK_THROWS_AS(log(Tensor::from({2}, {1.0, -1.0})), NonFiniteError);
}

TEST_CASE("graph misuse") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}).set_requires_grad(true);
    const Tensor y = square(x);
    CHECK_THROWS_AS(gradients(y, std::span<const Tensor>(&x, 1)), GraphError);  // not scalar
    const Tensor c = sum(Tensor::from({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(gradients(c, std::span<const Tensor>(&x, 1)), GraphError);  // no graph
    Tensor z = y;
    CHECK_THROWS_AS(z.mutable_data(), GraphError);
}

TEST_CASE("relu subgradient at zero is zero") {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}).set_requires_grad(true);
    const auto g = gradients(sum(relu(x)), std::span<const Tensor>(&x, 1))[0];
    CHECK(g == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("clamp_min blocks gradient where clamped") {
    Tensor x = Tensor::from({2}, {1e-15, 0.5}).set_requires_grad(true);
    const auto g = gradients(sum(clamp_min(x, 1e-12)), std::span<const Tensor>(&x, 1))[0];
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
}

TEST_CASE("gradients accumulate through shared subexpressions") {
    Tensor x = Tensor::from({1}, {3.0}).set_requires_grad(true);
    const Tensor y = mul(x, x);
    const auto g = gradients(sum(add(y, y)), std::span<const Tensor>(&x, 1))[0];
    CHECK(g[0] == doctest::Approx(12.0));
}

TEST_CASE("every differentiable op matches central differences") {
    constexpr double h = 1e-6;
    constexpr double tol = 1e-4;
    const Tensor a = random_tensor({3, 4}, 1);
    const Tensor b = random_tensor({3, 4}, 2);
    const Tensor k = random_tensor({4, 2}, 3);
    const Tensor row = random_tensor({4}, 4);
    const Tensor pos = random_tensor({3, 4}, 5, 0.2, 2.0);
    const std::vector<std::size_t> cols{0, 3, 1};

    // Relu inputs kept away from the kink.
    std::vector<double> rv(a.data().begin(), a.data().end());
    for (auto& v : rv) v = (v >= 0 ? 0.1 : -0.1) + v;
    const Tensor away = Tensor::from({3, 4}, rv);

    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(matmul(t, k)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(matmul(a, t)); }, k, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(add_row(a, t)); }, row, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(add_row(t, row)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(add(t, b)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(sub(b, t)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(mul(t, b)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(scale(t, -1.7)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(add_scalar(t, 0.3)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(square(t)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(relu(t)); }, away, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(tanh(t)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(log(t)); }, pos, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(clamp_min(t, 0.0)); }, away, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(softmax_rows(t)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(sum_rows(t)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return weighted_sum(pick(t, cols)); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return sum(t); }, a, h) <= tol);
    CHECK(finite_diff_check([&](const Tensor& t) { return mean(square(t)); }, a, h) <= tol);
}

TEST_CASE("finite_diff_check on a quadratic is O(h^2)") {
    const Tensor p = random_tensor({5}, 9);
    const double err = finite_diff_check([](const Tensor& t) { return sum(add(square(t), scale(t, 3.0))); }, p, 1e-4);
    CHECK(err < 1e-8);
}

TEST_CASE("finite_diff_check of a constant function is zero") {
    const Tensor p = random_tensor({4}, 10);
    CHECK(finite_diff_check([](const Tensor&) { return Tensor::scalar(2.5); }, p, 1e-4) == 0.0);
    CHECK_THROWS(finite_diff_check([](const Tensor& t) { return sum(t); }, p, 0.0));
}

TEST_CASE("finite_diff_check of cross entropy of softmax") {
    const Tensor logits = random_tensor({4, 3}, 11);
    const std::vector<std::size_t> labels{0, 2, 1, 1};
    const double err = finite_diff_check(
        [&](const Tensor& t) { return mean(cross_entropy_rows(softmax_rows(t), labels)); }, logits, 1e-6);
    CHECK(err <= 1e-4);
}

}  // TEST_SUITE

TEST_SUITE("network") {

TEST_CASE("zero-weight network gives zero logits") {
    const NetworkSpec spec{2, {8, 8}, 3, Activation::Relu};
    const Tensor out = forward(spec, Params::zeros(spec), random_tensor({5, 2}, 1));
    for (double v : out.data()) CHECK(v == 0.0);
    CHECK(out.shape() == Shape{5, 3});
}

TEST_CASE("1-D linear model") {
    const NetworkSpec spec{1, {}, 2, Activation::Relu};
    Params p = Params::zeros(spec);
    p.layers()[0].weight.mutable_data()[0] = 2.0;
    const Tensor out = forward(spec, p, Tensor::from({1, 1}, {0.5}));
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 0.0);
}

TEST_CASE("fixed-seed init and forward are bit-identical") {
    const NetworkSpec spec{2, {16, 16}, 2, Activation::Tanh};
    const Tensor x = random_tensor({7, 2}, 3);
    const Tensor a = forward(spec, Params::init(spec, 42), x);
    const Tensor b = forward(spec, Params::init(spec, 42), x);
    CHECK(std::vector<double>(a.data().begin(), a.data().end()) == std::vector<double>(b.data().begin(), b.data().end()));
    const Tensor c = forward(spec, Params::init(spec, 43), x);
    CHECK(std::vector<double>(a.data().begin(), a.data().end()) != std::vector<double>(c.data().begin(), c.data().end()));
}

TEST_CASE("forward rejects mismatched batches") {
    const NetworkSpec spec{2, {4}, 2, Activation::Relu};
    CHECK_THROWS_AS(forward(spec, Params::init(spec, 1), Tensor::zeros({3, 5})), ShapeError);
    const NetworkSpec other{3, {4}, 2, Activation::Relu};
    CHECK_THROWS_AS(forward(spec, Params::init(other, 1), Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("spec validation") {
    CHECK_THROWS(NetworkSpec{2, {4}, 1, Activation::Relu}.validate());
    CHECK_THROWS(NetworkSpec{2, {0}, 2, Activation::Relu}.validate());
    CHECK_NOTHROW(NetworkSpec{2, {}, 2, Activation::Relu}.validate());
    CHECK(parse_activation("tanh") == Activation::Tanh);
    CHECK_THROWS(parse_activation("gelu"));
}

TEST_CASE("grad_params of the parameter sum is all ones") {
    const NetworkSpec spec{2, {3}, 2, Activation::Relu};
    const Params p = Params::init(spec, 1).trainable();
    Tensor total = Tensor::scalar(0.0);
    for (const auto& t : p.tensors()) total = add(total, sum(t));
    const auto g = grad_params(total, p);
    REQUIRE(g.size() == 4);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i].shape() == p.tensors()[i].shape());
        for (double v : g[i].data()) CHECK(v == 1.0);
    }
}

TEST_CASE("grad_params of a zero-scaled loss is zero") {
    const NetworkSpec spec{2, {3}, 2, Activation::Relu};
    const Params p = Params::init(spec, 1).trainable();
    const Tensor loss = scale(sum(forward(spec, p, random_tensor({4, 2}, 2))), 0.0);
    for (const auto& g : grad_params(loss, p))
        for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("grad_params matches finite differences for CE on a small net") {
    const NetworkSpec spec{2, {6, 5}, 3, Activation::Tanh};
    const Params base = Params::init(spec, 7);
    const Tensor x = random_tensor({6, 2}, 8);
    const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0};
    for (std::size_t layer = 0; layer < base.layers().size(); ++layer) {
        const double err = finite_diff_check(
            [&](const Tensor& w) {
                Params p = base;
                p.layers()[layer].weight = w;
                return mean(cross_entropy_rows(softmax_rows(forward(spec, p, x)), y));
            },
            base.layers()[layer].weight, 1e-6);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("grad_input sign follows the weight for CE toward the wrong class") {
    const NetworkSpec spec{3, {}, 2, Activation::Relu};
    Params p = Params::zeros(spec);
    const std::vector<double> w{0.8, -1.3, 0.4};
    for (std::size_t i = 0; i < 3; ++i) p.layers()[0].weight.mutable_data()[i * 2 + 1] = w[i];
    Tensor x = Tensor::from({1, 3}, {0.2, -0.1, 0.5}).set_requires_grad(true);
    const std::vector<std::size_t> wrong{0};
    const Tensor loss = sum(cross_entropy_rows(softmax_rows(forward(spec, p, x)), wrong));
    const Tensor g = grad_input(loss, x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::signbit(g.at(i)) == std::signbit(w[i]));
}

TEST_CASE("grad_input of an input-independent loss is zero") {
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}).set_requires_grad(true);
    Tensor other = Tensor::from({2}, {1.0, 2.0}).set_requires_grad(true);
    const Tensor g = grad_input(sum(square(other)), x);
    for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("KL inner loss at the stationary start has a finite gradient") {
    const NetworkSpec spec{2, {8}, 2, Activation::Relu};
    const Params p = Params::init(spec, 3).frozen();
    const Tensor x0 = Tensor::from({1, 2}, {40.0, -40.0});  // saturated softmax
    const Tensor p_clean = softmax_rows(forward(spec, p, x0)).detach();
    Tensor x = x0.detach();
    x.set_requires_grad(true);
    const Tensor loss = sum(kl_rows(p_clean, softmax_rows(forward(spec, p, x))));
    const Tensor g = grad_input(loss, x);
    for (double v : g.data()) CHECK(std::isfinite(v));
}

TEST_CASE("params round-trip through BAT1 bytes") {
    const NetworkSpec spec{2, {5, 4}, 3, Activation::Relu};
    const Params p = Params::init(spec, 99);
    const auto bytes = p.serialize();
    const Params q = Params::deserialize(bytes);
    CHECK(q.serialize() == bytes);
    CHECK(q.matches(spec));
    CHECK(spec_from_params(q, Activation::Relu).hidden == spec.hidden);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Params::deserialize(bad), ParamsFormatError);
    CHECK_THROWS_AS(Params::deserialize(std::span(bytes).first(bytes.size() - 3)), ParamsFormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(Params::deserialize(trailing), ParamsFormatError);
}

}  // TEST_SUITE
