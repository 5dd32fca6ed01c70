#pragma once

// Dense f64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap shared handle onto a graph node. Operations on tensors
// that require gradients record their parents and a backward closure; the
// graph is discarded once the last handle to the result goes away.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bat {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Writable view for leaf tensors only (parameters, inputs); throws for
    // interior graph nodes.
    std::span<double> mutable_data();

    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;

    // Copy of the values with no graph attached.
    Tensor detach() const;

    const detail::Node* node() const { return node_.get(); }

   private:
    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                              std::function<void(detail::Node&)>);
    friend std::vector<std::vector<double>> gradients(const Tensor&, std::span<const Tensor>);

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

// Builds an op result. The backward closure is attached only if some input
// requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// ---- differentiable operations --------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);         // [m,k] x [k,n]
Tensor add_row(const Tensor& a, const Tensor& row);      // [m,n] + [n]
Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor sub(const Tensor& a, const Tensor& b);            // same shape
Tensor mul(const Tensor& a, const Tensor& b);            // same shape, elementwise
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);                             // requires a > 0
Tensor clamp_min(const Tensor& a, double floor);         // gradient blocked where clamped
Tensor softmax_rows(const Tensor& logits);               // [m,n] -> [m,n]
Tensor sum_rows(const Tensor& a);                        // [m,n] -> [m]
Tensor pick(const Tensor& a, std::span<const std::size_t> columns);  // [m,n] -> [m]
Tensor sum(const Tensor& a);                             // -> scalar
Tensor mean(const Tensor& a);                            // -> scalar

// Row gather; a constant (non-differentiable) copy of the selected rows.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// ---- gradients -------------------------------------------------------------

// Reverse-mode gradients of a scalar loss with respect to each tensor in
// `wrt`. A tensor that the loss does not depend on gets an all-zero gradient.
std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt);

Tensor grad_input(const Tensor& loss, const Tensor& input);

// Compares reverse-mode gradients of `fn` at `point` with central differences
// of step h and returns the largest per-coordinate relative error, where the
// error of a coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                         double h);

}  // namespace bat
