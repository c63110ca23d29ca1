#include "ssvae/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ssvae {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor Tensor::leaf(Shape shape, std::vector<double> data, bool trainable) {
    if (shape_size(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = trainable;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool trainable) { return filled(std::move(shape), 0.0, trainable); }

Tensor Tensor::filled(Shape shape, double value, bool trainable) {
    const auto n = shape_size(shape);
    return leaf(std::move(shape), std::vector<double>(n, value), trainable);
}

Tensor Tensor::scalar(double value) { return leaf({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return leaf({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return leaf({rows, cols}, std::move(values));
}

Tensor Tensor::derived(const char* op, Shape shape, std::vector<double> data,
                       std::vector<Tensor> parents, BackwardFn backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    node->requires_grad = needs;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    if (needs) node->backward = std::move(backward);
    return Tensor(std::move(node));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
    }
    return node_->shape[axis];
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    return node_->data[row * node_->shape.back() + col];
}

void Tensor::zero_grad() {
    if (node_->has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return leaf(node_->shape, node_->data, false); }

Tensor Tensor::clone_leaf(bool trainable) const { return leaf(node_->shape, node_->data, trainable); }

Graph Graph::build(const Tensor& output) {
    Graph g;
    g.output_ = output;
    if (!output.defined() || !output.requires_grad()) return g;

    // Iterative post-order DFS; a node is emitted after all its parents.
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(output.node().get(), 0);
    visited.insert(output.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            g.order_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

void Graph::backward() const {
    if (!output_.defined()) return;
    if (output_.size() != 1) {
        throw ShapeError("backward requires a scalar output, got " + shape_str(output_.shape()));
    }
    if (order_.empty()) return;
    for (Node* n : order_) {
        if (!n->is_leaf()) {
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    Node* out = order_.back();
    out->grad_buffer()[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf() && n->backward) n->backward(*n);
    }
}

void backward(const Tensor& output) {
    if (output.size() != 1) {
        throw ShapeError("backward requires a scalar output, got " + shape_str(output.shape()));
    }
    Graph::build(output).backward();
}

}  // namespace ssvae
