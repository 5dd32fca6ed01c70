#include "bat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace bat {

using detail::Node;

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

void check_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by ") + where);
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

std::shared_ptr<Node> leaf(Shape shape, std::vector<double> values) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return node;
}

// Grad buffers are allocated lazily during backward.
std::vector<double>& grad_of(Node& node) {
    if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (numel_of(shape) != values.size()) {
        throw ShapeError("Tensor::from: shape " + shape_string(shape) + " needs " +
                         std::to_string(numel_of(shape)) + " values, got " + std::to_string(values.size()));
    }
    check_finite(values, "Tensor::from");
    return Tensor(leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const {
    if (!node_) throw GraphError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return numel_of(shape()); }

std::size_t Tensor::rows() const {
    require_rank(*this, 2, "rows");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank(*this, 2, "cols");
    return node_->shape[1];
}

std::span<const double> Tensor::data() const {
    if (!node_) throw GraphError("use of undefined tensor");
    return node_->value;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw GraphError("use of undefined tensor");
    if (!is_leaf()) throw GraphError("mutable_data on a non-leaf tensor");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t i) const { return data()[i]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw GraphError("set_requires_grad on a non-leaf tensor");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

Tensor Tensor::detach() const { return Tensor(leaf(shape(), node_->value)); }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    check_finite(values, "tensor operation");
    auto node = leaf(std::move(shape), std::move(values));
    const bool track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (track) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) node->parents.push_back(in.node_);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const auto& g = self.grad;
        if (na.requires_grad) {
            auto& ga = grad_of(na);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* brow = nb.value.data() + p * n;
                    const double* grow = g.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (nb.requires_grad) {
            auto& gb = grad_of(nb);
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = na.value[i * k + p];
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require_rank(a, 2, "add_row");
    require_rank(row, 1, "add_row");
    const std::size_t m = a.rows(), n = a.cols();
    if (row.numel() != n) {
        throw ShapeError("add_row: row of shape " + shape_string(row.shape()) + " for matrix " +
                         shape_string(a.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto r = row.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
    return make_result(a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
        Node& na = *self.parents[0];
        Node& nr = *self.parents[1];
        if (na.requires_grad) {
            auto& ga = grad_of(na);
            for (std::size_t i = 0; i < m * n; ++i) ga[i] += self.grad[i];
        }
        if (nr.requires_grad) {
            auto& gr = grad_of(nr);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gr[j] += self.grad[i * n + j];
        }
    });
}

namespace {

// Elementwise binary op with per-element partials da, db.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
    require_same_shape(a, b, name);
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return make_result(a.shape(), std::move(out), {a, b}, [da, db](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const std::size_t n = self.grad.size();
        if (na.requires_grad) {
            auto& ga = grad_of(na);
            for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * da(na.value[i], nb.value[i]);
        }
        if (nb.requires_grad) {
            auto& gb = grad_of(nb);
            for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * db(na.value[i], nb.value[i]);
        }
    });
}

// Elementwise unary op; the derivative sees (input, output).
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D d) {
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return make_result(a.shape(), std::move(out), {a}, [d](Node& self) {
        Node& na = *self.parents[0];
        auto& ga = grad_of(na);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * d(na.value[i], self.value[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
    // Subgradient at 0 is 0.
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) throw NonFiniteError("log of non-positive value");
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        a, [floor](double x) { return x < floor ? floor : x; },
        [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax_rows");
    const std::size_t m = logits.rows(), n = logits.cols();
    const auto z = logits.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* zi = z.data() + i * n;
        double* pi = out.data() + i * n;
        const double top = *std::max_element(zi, zi + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            pi[j] = std::exp(zi[j] - top);
            total += pi[j];
        }
        for (std::size_t j = 0; j < n; ++j) pi[j] /= total;
    }
    return make_result(logits.shape(), std::move(out), {logits}, [m, n](Node& self) {
        Node& nz = *self.parents[0];
        auto& gz = grad_of(nz);
        for (std::size_t i = 0; i < m; ++i) {
            const double* p = self.value.data() + i * n;
            const double* g = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
            for (std::size_t j = 0; j < n; ++j) gz[i * n + j] += p[j] * (g[j] - dot);
        }
    });
}

Tensor sum_rows(const Tensor& a) {
    require_rank(a, 2, "sum_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    const auto av = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
    return make_result({m}, std::move(out), {a}, [m, n](Node& self) {
        auto& ga = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
    });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> columns) {
    require_rank(a, 2, "pick");
    const std::size_t m = a.rows(), n = a.cols();
    if (columns.size() != m) {
        throw ShapeError("pick: " + std::to_string(columns.size()) + " indices for " + std::to_string(m) + " rows");
    }
    std::vector<std::size_t> cols(columns.begin(), columns.end());
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (cols[i] >= n) throw ShapeError("pick: column index out of range");
        out[i] = a.data()[i * n + cols[i]];
    }
    return make_result({m}, std::move(out), {a}, [cols = std::move(cols), n](Node& self) {
        auto& ga = grad_of(*self.parents[0]);
        for (std::size_t i = 0; i < cols.size(); ++i) ga[i * n + cols[i]] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return make_result({}, {total}, {a}, [](Node& self) {
        auto& ga = grad_of(*self.parents[0]);
        for (auto& g : ga) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const auto n = a.numel();
    if (n == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_rank(a, 2, "gather_rows");
    const std::size_t n = a.cols();
    std::vector<double> out;
    out.reserve(rows.size() * n);
    const auto av = a.data();
    for (auto r : rows) {
        if (r >= a.rows()) throw ShapeError("gather_rows: row index out of range");
        out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(r * n),
                   av.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    }
    return Tensor::from({rows.size(), n}, std::move(out));
}

// ---- gradients --------------------------------------------------------------

std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt) {
    if (!loss.defined()) throw GraphError("gradients: undefined loss");
    if (loss.numel() != 1) throw GraphError("gradients: loss is not a scalar, shape " + shape_string(loss.shape()));
    if (!loss.requires_grad()) throw GraphError("gradients: loss has no recorded graph");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node_.get(), 0}};
    seen.insert(loss.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* node : order) node->grad.assign(node->value.size(), 0.0);
    loss.node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }

    std::vector<std::vector<double>> out;
    out.reserve(wrt.size());
    for (const auto& t : wrt) {
        Node* node = t.node_.get();
        if (node && seen.count(node)) {
            out.push_back(node->grad);
        } else {
            out.emplace_back(t.numel(), 0.0);
        }
    }
    // Leaves outlive the pass; drop their buffers so stale values never leak.
    for (Node* node : order) {
        if (node->parents.empty()) node->grad.clear();
    }
    return out;
}

Tensor grad_input(const Tensor& loss, const Tensor& input) {
    if (!input.requires_grad()) throw GraphError("grad_input: input does not track gradients");
    auto g = gradients(loss, std::span<const Tensor>(&input, 1));
    return Tensor::from(input.shape(), std::move(g[0]));
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
    Tensor x = point.detach();
    x.set_requires_grad(true);
    Tensor y = fn(x);
    std::vector<double> analytic;
    if (y.requires_grad()) {
        analytic = gradients(y, std::span<const Tensor>(&x, 1))[0];
    } else {
        if (y.numel() != 1) throw GraphError("finite_diff_check: function is not scalar");
        analytic.assign(x.numel(), 0.0);
    }

    std::vector<double> base(point.data().begin(), point.data().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto probe = base;
        probe[i] = base[i] + h;
        const double up = fn(Tensor::from(point.shape(), probe)).item();
        probe[i] = base[i] - h;
        const double down = fn(Tensor::from(point.shape(), probe)).item();
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace bat
