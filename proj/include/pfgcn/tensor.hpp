#pragma once

// Dense row-major tensors of doubles with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap handle onto a graph node. Copies share storage, like
// the tensors of most autograd frameworks; use clone() for an independent
// leaf. Every operation that has at least one requires_grad input records a
// backward rule on its output node; backward(loss) then sweeps the recorded
// graph once in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pfgcn/errors.hpp"

namespace pfgcn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    bool released = false;     // graph already consumed by a backward sweep
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;  // pushes this->grad into inputs

    bool is_leaf() const { return inputs.empty() && !backward; }

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() : Tensor(Shape{1}, std::vector<double>{0.0}) {}

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
        for (auto d : shape)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        if (shape_size(shape) != data.size())
            throw DimensionError("shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " values");
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }
    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
    }
    static Tensor identity(std::size_t n) {
        auto t = zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape[0]; }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }

    std::span<const double> data() const { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const {
        if (size() != 1) throw ContractError("item() needs a single-element tensor, got " + shape_str(shape()));
        return node_->value[0];
    }

    /// In-place access for leaves only (optimizer updates, initialization).
    std::span<double> mutable_data() {
        if (!is_leaf()) throw ContractError("only leaf tensors may be modified in place");
        return node_->value;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    /// Accumulated gradient; zeros if nothing has flowed in yet.
    std::vector<double> grad() const {
        return has_grad() ? node_->grad : std::vector<double>(size(), 0.0);
    }
    void zero_grad() { node_->grad.clear(); }

    Tensor detach() const { return Tensor(shape(), node_->value, false); }
    Tensor clone(bool requires_grad) const { return Tensor(shape(), node_->value, requires_grad); }
    Tensor clone() const { return clone(requires_grad()); }

    /// Identity of the underlying node (aliasing checks, tape inspection).
    const detail::Node* id() const { return node_.get(); }

    // Internal plumbing for op implementations.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value produced by ") + n.op);
}

/// Builds the output node of an op; attaches the backward rule only when
/// some input participates in differentiation.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    check_finite(*node);
    bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
        for (auto& t : inputs) {
            if (t.node()->released)
                throw ContractError(std::string("input of ") + op + " belongs to an already differentiated graph");
            node->inputs.push_back(t.node());
        }
        node->requires_grad = true;
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

inline void require_matrix(const char* op, const Tensor& t) {
    if (t.shape().size() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

/// Entrywise unary op with derivative df(x, y) evaluated from input x and output y.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
    });
}

// C[m×n] += A[m×k]·B[k×n]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = b + p * n;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
}

// C[m×k] += G[m×n]·B[k×n]ᵀ
inline void gemm_abt_acc(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = g + i * n;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            c[i * k + p] += s;
        }
}

// C[k×n] += A[m×k]ᵀ·G[m×n]
inline void gemm_atb_acc(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = g + i * n;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
        }
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix("matmul", a);
    detail::require_matrix("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) detail::gemm_abt_acc(self.grad.data(), nb.value.data(), na.grad_buffer().data(), m, k, n);
        if (nb.requires_grad) detail::gemm_atb_acc(na.value.data(), self.grad.data(), nb.grad_buffer().data(), m, k, n);
    });
}

/// Applies one shared left factor to every row block: x is [B·n × c] made of B
/// stacked [n × c] blocks, and block b of the result is a·x_b.
inline Tensor shared_left_matmul(const Tensor& a, const Tensor& x) {
    detail::require_matrix("shared_left_matmul", a);
    detail::require_matrix("shared_left_matmul", x);
    const std::size_t n = a.rows();
    if (a.cols() != n)
        throw DimensionError("shared_left_matmul: left factor must be square, got " + shape_str(a.shape()));
    if (x.rows() % n != 0)
        throw DimensionError("shared_left_matmul: " + shape_str(x.shape()) + " is not a stack of " +
                             std::to_string(n) + "-row blocks");
    const std::size_t blocks = x.rows() / n, c = x.cols();
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
        detail::gemm_acc(a.values().data(), x.values().data() + b * n * c, out.data() + b * n * c, n, n, c);
    return detail::make_result("shared_left_matmul", x.shape(), std::move(out), {a, x},
                               [n, c, blocks](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nx = *self.inputs[1];
        for (std::size_t b = 0; b < blocks; ++b) {
            const double* g = self.grad.data() + b * n * c;
            if (na.requires_grad) detail::gemm_abt_acc(g, nx.value.data() + b * n * c, na.grad_buffer().data(), n, n, c);
            if (nx.requires_grad) detail::gemm_atb_acc(na.value.data(), g, nx.grad_buffer().data() + b * n * c, n, n, c);
        }
    });
}

inline Tensor transpose(const Tensor& x) {
    detail::require_matrix("transpose", x);
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.values()[i * c + j];
    return detail::make_result("transpose", {c, r}, std::move(out), {x}, [r, c](detail::Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    return detail::make_result("reshape", std::move(shape), x.values(), {x}, [](detail::Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Entrywise arithmetic (no broadcasting)

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        if (self.inputs[0]->requires_grad) {
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.inputs[1]->requires_grad) {
            auto& g = self.inputs[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
            auto& g = na.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
        }
        if (nb.requires_grad) {
            auto& g = nb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
        }
    });
}

/// scale·x + shift
inline Tensor affine(const Tensor& x, double scale, double shift = 0.0) {
    return detail::unary("affine", x, [=](double v) { return scale * v + shift; },
                         [=](double, double) { return scale; });
}

inline Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

inline Tensor square(const Tensor& x) {
    return detail::unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor abs(const Tensor& x) {
    return detail::unary("abs", x, [](double v) { return std::abs(v); },
                         [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

/// Natural log of strictly positive entries.
inline Tensor log(const Tensor& x) {
    for (double v : x.values())
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    return detail::unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// log(max(x, floor)); the derivative is zero where the floor is active.
inline Tensor clamped_log(const Tensor& x, double floor) {
    return detail::unary("clamped_log", x, [=](double v) { return std::log(std::max(v, floor)); },
                         [=](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary("sigmoid", x, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& x) {
    return detail::unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                         [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return detail::make_result("sum", {1}, {s}, {x}, [](detail::Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (auto& gi : g) gi += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Sum of an arbitrary number of same-shape tensors.
inline Tensor add_all(std::span<const Tensor> terms) {
    if (terms.empty()) throw ContractError("add_all needs at least one term");
    Tensor acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

/// Mean over the batch of −log softmax(logits)[label], stabilised by
/// subtracting each row's maximum.
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    detail::require_matrix("softmax_cross_entropy", logits);
    const std::size_t batch = logits.rows(), k = logits.cols();
    if (labels.size() != batch)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(batch) + " rows");
    std::vector<double> probs(logits.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
        const double* row = logits.values().data() + b * k;
        const double mx = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - mx) / z;
        loss += -(row[y] - mx - std::log(z));
    }
    loss /= static_cast<double>(batch);
    std::vector<int> ys(labels.begin(), labels.end());
    return detail::make_result("softmax_cross_entropy", {1}, {loss}, {logits},
                               [probs = std::move(probs), ys = std::move(ys), batch, k](detail::Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const double s = self.grad[0] / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < k; ++j)
                g[b * k + j] += s * (probs[b * k + j] - (static_cast<int>(j) == ys[b] ? 1.0 : 0.0));
    });
}

// ---------------------------------------------------------------------------
// Reverse sweep

/// The recorded operations reachable from a loss, in topological order
/// (every op appears after all of its inputs).
class Tape {
public:
    struct Entry {
        const char* op;
        std::vector<std::size_t> inputs;  // positions within the tape
    };

    static Tape record(const Tensor& loss) {
        Tape tape;
        std::unordered_set<const detail::Node*> seen;
        // Iterative post-order DFS keeps deep graphs off the call stack.
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        auto root = loss.node().get();
        if (root->released) throw ContractError("backward: this graph was already differentiated");
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node* child = node->inputs[next++].get();
                if (child->requires_grad && !seen.count(child)) {
                    if (child->released) throw ContractError("backward: graph already differentiated");
                    seen.insert(child);
                    stack.emplace_back(child, 0);
                }
            } else {
                tape.order_.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    std::size_t size() const { return order_.size(); }

    std::vector<Entry> entries() const {
        std::vector<Entry> out;
        for (auto* node : order_) {
            Entry e{node->op, {}};
            for (auto& in : node->inputs) {
                auto it = std::find(order_.begin(), order_.end(), in.get());
                if (it != order_.end()) e.inputs.push_back(static_cast<std::size_t>(it - order_.begin()));
            }
            out.push_back(std::move(e));
        }
        return out;
    }

    /// Seeds d(loss)/d(loss) = 1, propagates, then releases the graph so a
    /// second sweep over it is rejected.
    void run() {
        if (order_.empty()) return;
        auto* root = order_.back();
        root->grad_buffer()[0] += 1.0;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            detail::Node* node = *it;
            if (node->backward && !node->grad.empty()) node->backward(*node);
        }
        for (auto* node : order_) {
            if (node->is_leaf()) continue;
            node->released = true;
            node->backward = nullptr;
            node->inputs.clear();
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }

private:
    std::vector<detail::Node*> order_;
};

inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any requires_grad tensor");
    Tape::record(loss).run();
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// Max over entries of |autodiff − central FD| / max(1, |autodiff|) for the
/// scalar function f at each of the given inputs.
inline double grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                         std::span<const Tensor> inputs, double eps = 1e-5) {
    if (!(eps > 0)) throw DomainError("grad_check: eps must be positive");
    std::vector<Tensor> leaves;
    for (const auto& x : inputs) leaves.push_back(x.clone(true));
    Tensor y = f(leaves);
    if (y.size() != 1) throw ContractError("grad_check: f must return a scalar");
    std::vector<std::vector<double>> analytic(leaves.size());
    if (y.requires_grad()) backward(y);
    for (std::size_t i = 0; i < leaves.size(); ++i) analytic[i] = leaves[i].grad();

    std::vector<Tensor> probe;
    for (const auto& x : inputs) probe.push_back(x.clone(false));
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        auto values = probe[i].mutable_data();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double orig = values[j];
            values[j] = orig + eps;
            const double up = f(probe).item();
            values[j] = orig - eps;
            const double down = f(probe).item();
            values[j] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = analytic[i][j];
            worst = std::max(worst, std::abs(ad - fd) / std::max(1.0, std::abs(ad)));
        }
    }
    return worst;
}

inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5) {
    std::vector<Tensor> in{x};
    return grad_check([&](std::span<const Tensor> xs) { return f(xs[0]); }, in, eps);
}

}  // namespace pfgcn
