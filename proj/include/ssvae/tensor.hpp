#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

struct Node;

// Propagates node.grad into the grad buffers of node.parents.
using BackwardFn = std::function<void(Node&)>;

// One value in the computation graph. Leaves have no parents; derived
// nodes keep their parents alive until the output is dropped.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until materialized
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    bool is_leaf() const { return parents.empty(); }
    bool has_grad() const { return !grad.empty(); }
    // Materializes the gradient buffer (zero filled) and returns it.
    std::vector<double>& grad_buffer();
};

// Handle to a node. Copies share the node, so a parameter tensor held by a
// model and the same tensor used inside a graph are one object.
class Tensor {
   public:
    Tensor() = default;

    static Tensor leaf(Shape shape, std::vector<double> data, bool trainable = false);
    static Tensor zeros(Shape shape, bool trainable = false);
    static Tensor filled(Shape shape, double value, bool trainable = false);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    // Builds a derived tensor. requires_grad is inherited from the parents.
    static Tensor derived(const char* op, Shape shape, std::vector<double> data,
                          std::vector<Tensor> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const { return node_->data; }
    // Direct write access. Intended for optimizer updates on leaves.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double operator[](std::size_t i) const { return node_->data[i]; }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }
    bool has_grad() const { return node_->has_grad(); }
    // Empty span when no gradient was ever accumulated.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    void zero_grad();

    // Constant leaf with a copy of this tensor's values.
    Tensor detach() const;
    Tensor clone_leaf(bool trainable) const;

    const Node* id() const { return node_.get(); }
    const std::shared_ptr<Node>& node() const { return node_; }

   private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

// Nodes reachable from an output, in topological order (parents first).
// Only nodes that require a gradient are recorded.
class Graph {
   public:
    static Graph build(const Tensor& output);

    const std::vector<Node*>& order() const { return order_; }
    const Tensor& output() const { return output_; }

    // Reverse-mode sweep. Interior gradients are reset each call, leaf
    // gradients accumulate.
    void backward() const;

   private:
    Tensor output_;
    std::vector<Node*> order_;
};

// Backpropagates from a scalar output into every trainable leaf.
void backward(const Tensor& output);

}  // namespace ssvae
