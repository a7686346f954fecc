#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sefusion {

using Shape = std::vector<std::size_t>;

/// Raised whenever operand shapes do not satisfy an op's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <std::floating_point T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs that require grad.
    std::function<void(Node&)> backward;

    void accumulate(std::span<const T> g) {
        if (grad.empty()) grad.assign(data.size(), T(0));
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Whether newly executed ops are recorded for differentiation on this thread.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables recording for the guard's lifetime (inference, evaluation).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/**
 * Dense row-major tensor with reverse-mode autodiff.
 *
 * A Tensor is a cheap handle onto shared storage: copies alias the same
 * buffer and gradient. Results of ops are immutable; only leaves (model
 * parameters, running statistics) are updated in place through
 * mutable_data().
 */
template <std::floating_point T>
class Tensor {
public:
    using value_type = T;
    using NodeType = detail::Node<T>;

    Tensor() : Tensor(Shape{}, std::vector<T>{T(0)}) {}

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<NodeType>()) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }
    static Tensor ones(const Shape& shape) { return full(shape, T(1)); }
    static Tensor full(const Shape& shape, T value) {
        return Tensor(shape, std::vector<T>(shape_numel(shape), value));
    }
    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    /// In-place access for leaves only (optimizer updates, running statistics).
    std::span<T> mutable_data() { return node_->data; }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }
    T operator[](std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node_->requires_grad = on;
        return *this;
    }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    const std::string& op() const { return node_->op; }
    bool is_leaf() const { return node_->inputs.empty(); }

    /// Fresh leaf holding a copy of the values, detached from any graph.
    Tensor detach() const { return Tensor(shape(), node_->data); }

    template <std::floating_point U>
    Tensor<U> cast() const {
        std::vector<U> out(node_->data.begin(), node_->data.end());
        return Tensor<U>(shape(), std::move(out));
    }

    void backward() const;

    const std::shared_ptr<NodeType>& node() const { return node_; }
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<NodeType> node_;
};

/**
 * Topologically ordered record of the ops reachable from a scalar loss.
 *
 * Construction walks the recorded graph once; run() replays it in reverse
 * so every op's backward closure is invoked exactly once.
 */
template <std::floating_point T>
class Tape {
public:
    explicit Tape(const Tensor<T>& loss) : root_(loss.node()) {
        if (loss.numel() != 1)
            throw ShapeError("backward() requires a scalar loss, got shape " +
                             shape_str(loss.shape()));
        std::unordered_set<const detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, bool>> stack{{root_.get(), false}};
        while (!stack.empty()) {
            auto [node, expanded] = stack.back();
            stack.pop_back();
            if (expanded) {
                order_.push_back(node);
                continue;
            }
            if (!node->requires_grad || !seen.insert(node).second) continue;
            stack.push_back({node, true});
            for (auto& in : node->inputs)
                if (in->requires_grad && !seen.contains(in.get())) stack.push_back({in.get(), false});
        }
    }

    /// Nodes in execution order (inputs before the ops that consume them).
    std::span<detail::Node<T>* const> ops() const { return order_; }

    void run() {
        if (!root_->requires_grad) return;
        root_->accumulate(std::vector<T>(1, T(1)));
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            detail::Node<T>& node = **it;
            if (node.backward && !node.grad.empty()) node.backward(node);
        }
    }

private:
    std::shared_ptr<detail::Node<T>> root_;
    std::vector<detail::Node<T>*> order_;
};

template <std::floating_point T>
void Tensor<T>::backward() const {
    Tape<T> tape(*this);
    tape.run();
}

template <std::floating_point T>
void backward(const Tensor<T>& loss) {
    loss.backward();
}

namespace detail {

/// Builds an op result; the graph edge is recorded only if any input needs grad.
template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::string op,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool needs = std::any_of(inputs.begin(), inputs.end(),
                             [](const Tensor<T>& t) { return t.requires_grad(); });
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = std::move(op);
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::move(backward);
    return out;
}

}  // namespace detail

}  // namespace sefusion
