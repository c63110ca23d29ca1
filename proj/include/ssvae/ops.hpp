#pragma once

#include <cstddef>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

enum class UnaryOp { neg, exp, log, square, leaky_relu, relu, sigmoid, softplus };
enum class BinaryOp { add, sub, mul };
enum class ReduceOp { sum, mean, max };

// Binary ops accept equal shapes, or one operand whose shape matches the
// other's shape with the leading (batch) dimension dropped or set to 1.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
// `slope` is only read by leaky_relu.
Tensor elementwise(UnaryOp op, const Tensor& a, double slope = 0.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// log(1 + e^a), evaluated without overflow.
Tensor softplus(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// Values outside [lo, hi] are pinned and receive zero gradient.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
// Gradient goes to the lowest-index maximum.
Tensor max(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// log(sum(exp(a))) along axis with the max shift. All -inf gives -inf.
Tensor logsumexp(const Tensor& a, std::size_t axis);

// Stacks equally shaped tensors along a new trailing axis.
Tensor stack_last(const std::vector<Tensor>& parts);

}  // namespace ssvae
