#ifndef SIENET_AUTODIFF_HPP
#define SIENET_AUTODIFF_HPP

#include "sienet/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace sienet {

template <typename Scalar>
class Graph;

/// One recorded value. Either owns its value or borrows a tensor that outlives the graph
/// (parameters and frozen weights are borrowed, never copied).
template <typename Scalar>
struct Node {
    Tensor<Scalar> owned;
    const Tensor<Scalar>* borrowed = nullptr;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    std::string op;
    /// Pushes `grad` of this node into the grads of its inputs.
    std::function<void(Node&)> backward;

    const Tensor<Scalar>& value() const { return borrowed ? *borrowed : owned; }

    Tensor<Scalar>& grad_buffer()
    {
        if (grad.empty() && value().size() > 0) grad = Tensor<Scalar>(value().shape());
        return grad;
    }
    bool has_grad() const { return !grad.empty(); }
};

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
public:
    Var() = default;
    Var(Graph<Scalar>* g, Node<Scalar>* n) : graph_(g), node_(n) {}

    const Tensor<Scalar>& value() const { return node_->value(); }
    const Shape& shape() const { return node_->value().shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool valid() const { return node_ != nullptr; }
    Graph<Scalar>* graph() const { return graph_; }
    Node<Scalar>* node() const { return node_; }

private:
    Graph<Scalar>* graph_ = nullptr;
    Node<Scalar>* node_ = nullptr;
};

/// Tape of executed operations. A fresh graph is built for every forward pass; gradients start
/// at zero and `backward` may run once.
template <typename Scalar>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false)
    {
        auto node = std::make_unique<Node<Scalar>>();
        node->owned = std::move(value);
        node->requires_grad = requires_grad;
        node->op = "leaf";
        return push(std::move(node));
    }

    Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

    /// Trainable parameter. Binding the same tensor twice yields the same node, so shared
    /// weights accumulate gradient from every use.
    Var<Scalar> param(const Tensor<Scalar>& p) { return bind(p, true); }

    /// Borrowed tensor that never receives gradient (frozen weights, stopped branches).
    Var<Scalar> frozen(const Tensor<Scalar>& p) { return bind(p, false); }

    /// Records an operation result. `backward` may be empty when no input requires grad.
    Var<Scalar> record(std::string op, Tensor<Scalar> value, bool requires_grad,
                       std::function<void(Node<Scalar>&)> backward)
    {
        if (consumed_) throw Error("graph already differentiated; build a new graph for the next forward pass");
        if (!value.all_finite()) throw Error(op + ": produced non-finite values, shape " + to_string(value.shape()));
        auto node = std::make_unique<Node<Scalar>>();
        node->owned = std::move(value);
        node->requires_grad = requires_grad;
        node->op = std::move(op);
        if (requires_grad) node->backward = std::move(backward);
        return push(std::move(node));
    }

    /// Reverse-mode sweep from a scalar loss over the tape in exact reverse order.
    void backward(const Var<Scalar>& loss)
    {
        if (consumed_) throw Error("backward called twice on the same graph");
        if (loss.graph() != this) throw Error("loss does not belong to this graph");
        if (loss.shape() != scalar_shape()) throw Error("backward requires a scalar loss, got " + to_string(loss.shape()));
        if (!loss.value().all_finite()) throw Error("backward on non-finite loss");
        consumed_ = true;
        if (!loss.requires_grad()) return;
        loss.node()->grad_buffer()[0] = Scalar(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<Scalar>& n = **it;
            if (n.backward && n.has_grad()) n.backward(n);
        }
    }

    /// Gradient accumulated into a bound parameter, or zeros if it never received any.
    Tensor<Scalar> grad_of(const Tensor<Scalar>& p) const
    {
        auto it = bound_.find(&p);
        if (it == bound_.end() || !it->second->requires_grad || !it->second->has_grad())
            return Tensor<Scalar>(p.shape());
        return it->second->grad;
    }

    Tensor<Scalar> grad_of(const Var<Scalar>& v) const
    {
        if (!v.node()->has_grad()) return Tensor<Scalar>(v.shape());
        return v.node()->grad;
    }

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

private:
    Var<Scalar> bind(const Tensor<Scalar>& p, bool trainable)
    {
        auto it = bound_.find(&p);
        if (it != bound_.end()) {
            if (it->second->requires_grad != trainable)
                throw Error("tensor bound both as trainable parameter and as frozen in one graph");
            return Var<Scalar>(this, it->second);
        }
        auto node = std::make_unique<Node<Scalar>>();
        node->borrowed = &p;
        node->requires_grad = trainable;
        node->op = trainable ? "param" : "frozen";
        Var<Scalar> v = push(std::move(node));
        bound_.emplace(&p, v.node());
        return v;
    }

    Var<Scalar> push(std::unique_ptr<Node<Scalar>> node)
    {
        Node<Scalar>* raw = node.get();
        nodes_.push_back(std::move(node));
        return Var<Scalar>(this, raw);
    }

    std::vector<std::unique_ptr<Node<Scalar>>> nodes_;
    std::unordered_map<const Tensor<Scalar>*, Node<Scalar>*> bound_;
    bool consumed_ = false;
};

/// Adds `g` into the gradient of `n` when `n` is differentiable.
template <typename Scalar>
void accumulate(Node<Scalar>* n, const Tensor<Scalar>& g)
{
    if (!n->requires_grad) return;
    n->grad_buffer().array() += g.array();
}

template <typename Scalar>
Graph<Scalar>& graph_of(const Var<Scalar>& a)
{
    if (!a.valid()) throw Error("operation on an unbound variable");
    return *a.graph();
}

template <typename Scalar>
Graph<Scalar>& graph_of(const Var<Scalar>& a, const Var<Scalar>& b)
{
    if (!a.valid() || !b.valid()) throw Error("operation on an unbound variable");
    if (a.graph() != b.graph()) throw Error("operands belong to different graphs");
    return *a.graph();
}

/// Same value with gradient flow cut.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x)
{
    return graph_of(x).constant(x.value());
}

}  // namespace sienet

#endif  // SIENET_AUTODIFF_HPP
