#pragma once

// Dense float64 tensors with a reverse-mode differentiation tape.
//
// A Tensor is a shared handle onto a graph node. Operations whose inputs
// require gradients record a backward closure; `backward` walks the graph in
// reverse topological order exactly once per node.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tearth/errors.hpp"

namespace tearth {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

inline std::atomic<std::uint64_t>& node_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = node_counter().fetch_add(1, std::memory_order_relaxed);
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const std::vector<double>&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

} // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape_size(shape) != data.size()) {
            throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " values");
        }
        for (auto d : shape) {
            if (d == 0) throw DimensionError("tensor: zero extent in shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad = false) {
        return Tensor({rows, cols}, std::move(data), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return rank() > 1 ? node_->shape.at(1) : 1; }

    std::span<const double> data() const { return node_->data; }
    // Direct write access; only valid on leaves (parameters, inputs).
    std::span<double> mutable_data() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }

    double item() const {
        if (size() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
        return node_->data[0];
    }
    double at(std::size_t i) const { return node_->data.at(i); }
    double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool is_leaf() const { return node_->is_leaf; }
    std::uint64_t id() const { return node_->id; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    // Copy of the values with no graph history.
    Tensor detach() const { return Tensor(shape(), node_->data, false); }

    const detail::NodePtr& node() const { return node_; }
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

private:
    detail::NodePtr node_;
};

namespace detail {

// Builds an op result. `backward` receives the output gradient and must
// accumulate into the parents that require gradients.
template <typename Backward>
Tensor make_op(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> parents,
               Backward&& backward) {
    Tensor out(std::move(shape), std::move(data), false);
    if (!grad_mode()) return out;
    bool needs = false;
    for (const Tensor* p : parents) needs = needs || p->requires_grad();
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.is_leaf = false;
    for (const Tensor* p : parents) node.parents.push_back(p->node());
    node.backward_fn = std::forward<Backward>(backward);
    return out;
}

template <typename Backward>
Tensor make_op_n(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                 Backward&& backward) {
    Tensor out(std::move(shape), std::move(data), false);
    if (!grad_mode()) return out;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.is_leaf = false;
    for (const auto& p : parents) node.parents.push_back(p.node());
    node.backward_fn = std::forward<Backward>(backward);
    return out;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
    }
}

// outer x axis x inner decomposition used by the axis-wise ops.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace detail

// Reverse-mode sweep from a scalar loss. Intermediate gradients are reset on
// each call; leaf gradients accumulate until zeroed.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto* node : order) {
        if (!node->is_leaf) node->grad.assign(node->data.size(), 0.0);
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn) node->backward_fn(node->grad);
    }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    detail::MutMap(out.data(), m, n).noalias() =
        detail::ConstMap(a.data().data(), m, k) * detail::ConstMap(b.data().data(), k, n);
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](const std::vector<double>& g) {
        detail::ConstMap dc(g.data(), m, n);
        if (an->requires_grad) {
            detail::MutMap(an->grad_buffer().data(), m, k).noalias() +=
                dc * detail::ConstMap(bn->data.data(), k, n).transpose();
        }
        if (bn->requires_grad) {
            detail::MutMap(bn->grad_buffer().data(), k, n).noalias() +=
                detail::ConstMap(an->data.data(), m, k).transpose() * dc;
        }
    });
}

// a · bᵀ without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_nt");
    detail::require_matrix(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw DimensionError("matmul_nt: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + "^T");
    }
    std::vector<double> out(m * n);
    detail::MutMap(out.data(), m, n).noalias() =
        detail::ConstMap(a.data().data(), m, k) * detail::ConstMap(b.data().data(), n, k).transpose();
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](const std::vector<double>& g) {
        detail::ConstMap dc(g.data(), m, n);
        if (an->requires_grad) {
            detail::MutMap(an->grad_buffer().data(), m, k).noalias() += dc * detail::ConstMap(bn->data.data(), n, k);
        }
        if (bn->requires_grad) {
            detail::MutMap(bn->grad_buffer().data(), n, k).noalias() +=
                dc.transpose() * detail::ConstMap(an->data.data(), m, k);
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_matrix(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    auto an = a.node();
    return detail::make_op({n, m}, std::move(out), {&a}, [an, m, n](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    auto an = a.node();
    return detail::make_op(std::move(shape), a.values(), {&a}, [an](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Elementwise

// a + b where b has a's shape, is a row vector matching a's last axis
// (leading-batch broadcast), or is a single value.
inline Tensor add(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.size();
    enum class Mode { same, row, scalar } mode;
    if (a.shape() == b.shape()) {
        mode = Mode::same;
    } else if (b.size() == 1) {
        mode = Mode::scalar;
    } else if (b.size() == a.shape().back() && (b.rank() == 1 || (b.rank() == 2 && b.rows() == 1))) {
        mode = Mode::row;
    } else {
        throw DimensionError("add: cannot combine " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t width = b.size();
    std::vector<double> out(a.values());
    const auto bd = b.data();
    switch (mode) {
        case Mode::same:
            for (std::size_t i = 0; i < n; ++i) out[i] += bd[i];
            break;
        case Mode::scalar:
            for (std::size_t i = 0; i < n; ++i) out[i] += bd[0];
            break;
        case Mode::row:
            for (std::size_t i = 0; i < n; ++i) out[i] += bd[i % width];
            break;
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op(a.shape(), std::move(out), {&a, &b}, [an, bn, mode, width](const std::vector<double>& g) {
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            if (mode == Mode::same) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            } else if (mode == Mode::scalar) {
                double s = 0.0;
                for (double v : g) s += v;
                gb[0] += s;
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
            }
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("sub: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op(a.shape(), std::move(out), {&a, &b}, [an, bn](const std::vector<double>& g) {
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op(a.shape(), std::move(out), {&a, &b}, [an, bn](const std::vector<double>& g) {
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (auto& v : out) v *= s;
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(out), {&a}, [an, s](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (auto& v : out) v += s;
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(out), {&a}, [an](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(out), {&a}, [an](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += an->data[i] > 0.0 ? g[i] : 0.0;
    });
}

// Exact (erf) GELU.
inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(out), {&a}, [an](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = an->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            ga[i] += g[i] * (cdf + x * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto an = a.node();
    return detail::make_op({1}, {s}, {&a}, [an](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (auto& v : ga) v += g[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Sum over rows of a matrix: [m x n] -> [1 x n].
inline Tensor sum_rows(const Tensor& a) {
    detail::require_matrix(a, "sum_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
    auto an = a.node();
    return detail::make_op({1, n}, std::move(out), {&a}, [an, m, n](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
    });
}

// Weighted sum of scalar tensors.
inline Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size()) {
        throw ContractError("weighted_sum: need one weight per term and at least one term");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i].item();
    std::vector<detail::NodePtr> nodes;
    for (const auto& t : terms) nodes.push_back(t.node());
    return detail::make_op_n({1}, {s}, terms, [nodes, weights](const std::vector<double>& g) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i]->requires_grad) nodes[i]->grad_buffer()[0] += weights[i] * g[0];
        }
    });
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
    Shape shape = first;
    shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && p.shape()[d] != first[d]) {
                throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(first));
            }
        }
        shape[axis] += p.shape()[axis];
    }
    const auto split = detail::split_axis(shape, axis);
    std::vector<double> out(shape_size(shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t ext = p.shape()[axis];
        const std::size_t block = ext * split.inner;
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(p.data().data() + o * block, block,
                        out.data() + o * split.extent * split.inner + offset * split.inner);
        }
        offset += ext;
    }
    std::vector<detail::NodePtr> nodes;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        extents.push_back(p.shape()[axis]);
    }
    return detail::make_op_n(shape, std::move(out), parts,
                             [nodes, offsets, extents, split](const std::vector<double>& g) {
                                 for (std::size_t i = 0; i < nodes.size(); ++i) {
                                     if (!nodes[i]->requires_grad) continue;
                                     auto& gp = nodes[i]->grad_buffer();
                                     const std::size_t block = extents[i] * split.inner;
                                     for (std::size_t o = 0; o < split.outer; ++o) {
                                         const double* src =
                                             g.data() + o * split.extent * split.inner + offsets[i] * split.inner;
                                         double* dst = gp.data() + o * block;
                                         for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                                     }
                                 }
                             });
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= a.rank() || length == 0 || start + length > a.shape()[axis]) {
        throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") along axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
    }
    const auto split = detail::split_axis(a.shape(), axis);
    Shape shape = a.shape();
    shape[axis] = length;
    std::vector<double> out(shape_size(shape));
    const std::size_t block = length * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(a.data().data() + o * split.extent * split.inner + start * split.inner, block,
                    out.data() + o * block);
    }
    auto an = a.node();
    return detail::make_op(std::move(shape), std::move(out), {&a}, [an, split, start, block](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t o = 0; o < split.outer; ++o) {
            double* dst = ga.data() + o * split.extent * split.inner + start * split.inner;
            const double* src = g.data() + o * block;
            for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
        }
    });
}

// Row gather: out[i, :] = table[indices[i], :].
inline Tensor gather_rows(const Tensor& table, std::vector<std::size_t> indices) {
    detail::require_matrix(table, "gather_rows");
    if (indices.empty()) throw DimensionError("gather_rows: no indices");
    const std::size_t n = table.cols();
    std::vector<double> out(indices.size() * n);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= table.rows()) {
            throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                                 shape_str(table.shape()));
        }
        std::copy_n(table.data().data() + indices[i] * n, n, out.data() + i * n);
    }
    auto tn = table.node();
    const std::size_t rows = indices.size();
    return detail::make_op({rows, n}, std::move(out), {&table}, [tn, idx = std::move(indices), n](const std::vector<double>& g) {
        auto& gt = tn->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) gt[idx[i] * n + j] += g[i * n + j];
    });
}

// ---------------------------------------------------------------------------
// Normalization

inline Tensor softmax(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) throw DimensionError("softmax: axis out of range for " + shape_str(a.shape()));
    const auto split = detail::split_axis(a.shape(), axis);
    std::vector<double> out(a.size());
    const double* x = a.data().data();
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = o * split.extent * split.inner + in;
            double mx = x[base];
            for (std::size_t e = 1; e < split.extent; ++e) mx = std::max(mx, x[base + e * split.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < split.extent; ++e) {
                const double v = std::exp(x[base + e * split.inner] - mx);
                out[base + e * split.inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < split.extent; ++e) out[base + e * split.inner] /= total;
        }
    }
    auto an = a.node();
    auto probs = out;
    return detail::make_op(a.shape(), std::move(out), {&a}, [an, split, probs = std::move(probs)](const std::vector<double>& g) {
        auto& ga = an->grad_buffer();
        for (std::size_t o = 0; o < split.outer; ++o) {
            for (std::size_t in = 0; in < split.inner; ++in) {
                const std::size_t base = o * split.extent * split.inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < split.extent; ++e) {
                    const std::size_t i = base + e * split.inner;
                    dot += g[i] * probs[i];
                }
                for (std::size_t e = 0; e < split.extent; ++e) {
                    const std::size_t i = base + e * split.inner;
                    ga[i] += probs[i] * (g[i] - dot);
                }
            }
        }
    });
}

// Normalizes each vector along the last axis, then applies gain and bias
// (both of the last axis' length).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    const std::size_t width = x.shape().back();
    if (gain.size() != width || bias.size() != width) {
        throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                             " do not match width " + std::to_string(width));
    }
    const std::size_t count = x.size() / width;
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(count);
    for (std::size_t r = 0; r < count; ++r) {
        const double* row = x.data().data() + r * width;
        double mu = 0.0;
        for (std::size_t j = 0; j < width; ++j) mu += row[j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(width);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < width; ++j) {
            xhat[r * width + j] = (row[j] - mu) * inv_std[r];
            out[r * width + j] = xhat[r * width + j] * gain.data()[j] + bias.data()[j];
        }
    }
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    return detail::make_op(x.shape(), std::move(out), {&x, &gain, &bias},
                           [xn, gn, bn, width, count, xhat = std::move(xhat),
                            inv_std = std::move(inv_std)](const std::vector<double>& g) {
                               if (gn->requires_grad) {
                                   auto& gg = gn->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * xhat[i];
                               }
                               if (bn->requires_grad) {
                                   auto& gb = bn->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
                               }
                               if (!xn->requires_grad) return;
                               auto& gx = xn->grad_buffer();
                               const double w = static_cast<double>(width);
                               for (std::size_t r = 0; r < count; ++r) {
                                   double mean_d = 0.0, mean_dx = 0.0;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const double d = g[r * width + j] * gn->data[j];
                                       mean_d += d;
                                       mean_dx += d * xhat[r * width + j];
                                   }
                                   mean_d /= w;
                                   mean_dx /= w;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       const double d = g[r * width + j] * gn->data[j];
                                       gx[r * width + j] += inv_std[r] * (d - mean_d - xhat[r * width + j] * mean_dx);
                                   }
                               }
                           });
}

} // namespace tearth
