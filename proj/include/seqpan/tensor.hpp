#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "seqpan/errors.hpp"

namespace seqpan {

template <typename T>
class Tensor;

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until the backward sweep touches this node
    bool requires_grad = false;
    std::string name;
    std::function<void()> backward_fn;
    std::vector<std::shared_ptr<Node>> parents;

    std::size_t numel() const { return value.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

}  // namespace detail

// Handle to a node in the computation graph. Value semantics on the handle,
// shared storage underneath (as in the usual tape designs).
template <typename T>
class Tensor {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape) {
        return full(std::move(shape), T(0));
    }

    static Tensor full(std::vector<int> shape, T v) {
        auto n = std::make_shared<detail::Node<T>>();
        n->value.assign(detail::shape_numel(shape), v);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }

    static Tensor from(std::vector<int> shape, std::vector<T> data) {
        if (detail::shape_numel(shape) != data.size())
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + detail::shape_str(shape));
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    // Trainable leaf.
    static Tensor param(std::vector<int> shape, std::string name) {
        Tensor t = zeros(std::move(shape));
        t.node_->requires_grad = true;
        t.node_->name = std::move(name);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return node_->value.size(); }

    T* data() { return node_->value.data(); }
    const T* data() const { return node_->value.data(); }
    std::vector<T>& value() { return node_->value; }
    const std::vector<T>& value() const { return node_->value; }

    T item() const {
        if (numel() != 1)
            throw ShapeError("item() on non-scalar tensor " + detail::shape_str(shape()));
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) {
        node_->name = std::move(n);
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty())
            throw NumericError("gradient not populated for tensor '" + node_->name + "'");
        return node_->grad;
    }
    std::vector<T>& grad_data() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
    void drop_grad() { node_->grad.clear(); }

    NodePtr node() const { return node_; }
    detail::Node<T>* raw() const { return node_.get(); }

private:
    NodePtr node_;
};

// Ordered record of the operations of one forward pass. Nodes are appended as
// they are created, so the vector order is a topological order by
// construction; the backward sweep walks it in reverse.
template <typename T>
class Tape {
public:
    void record(std::shared_ptr<detail::Node<T>> n) { nodes_.push_back(std::move(n)); }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Reverse sweep from a scalar loss. Gradients accumulate (+=) across
    // fan-out; nodes not on a path to the loss are never touched.
    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward() requires a scalar loss, got " +
                             detail::shape_str(loss.shape()));
        detail::Node<T>* root = loss.raw();
        bool on_tape = false;
        for (const auto& n : nodes_)
            if (n.get() == root) {
                on_tape = true;
                break;
            }
        if (!on_tape && root->backward_fn)
            throw ShapeError("loss tensor is not recorded on this tape");

        std::unordered_set<const detail::Node<T>*> reachable;
        mark_reachable(root, reachable);

        root->ensure_grad();
        root->grad[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            detail::Node<T>* n = it->get();
            if (n->backward_fn && !n->grad.empty() && reachable.count(n)) n->backward_fn();
        }
    }

private:
    static void mark_reachable(const detail::Node<T>* root,
                               std::unordered_set<const detail::Node<T>*>& seen) {
        std::vector<const detail::Node<T>*> stack{root};
        while (!stack.empty()) {
            const detail::Node<T>* n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            for (const auto& p : n->parents) stack.push_back(p.get());
        }
    }

    std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
};

namespace detail {

template <typename T>
inline Tape<T>*& active_tape_slot() {
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
    return detail::active_tape_slot<T>();
}

// RAII: make a tape current for the enclosing scope. With no active tape,
// ops run value-only (no recording), which is the eval path.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& t) : prev_(detail::active_tape_slot<T>()) {
        detail::active_tape_slot<T>() = &t;
    }
    ~TapeScope() { detail::active_tape_slot<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* prev_;
};

// RAII: run value-only (no recording) even if an outer tape is active.
template <typename T>
class TapeSuspend {
public:
    TapeSuspend() : prev_(detail::active_tape_slot<T>()) { detail::active_tape_slot<T>() = nullptr; }
    ~TapeSuspend() { detail::active_tape_slot<T>() = prev_; }
    TapeSuspend(const TapeSuspend&) = delete;
    TapeSuspend& operator=(const TapeSuspend&) = delete;

private:
    Tape<T>* prev_;
};

}  // namespace seqpan
