#include "ssvae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ssvae {
namespace {

struct Broadcast {
    Shape out;
    std::size_t a_size;
    std::size_t b_size;
};

bool drops_leading(const Shape& big, const Shape& small) {
    if (big.empty()) return false;
    Shape tail(big.begin() + 1, big.end());
    if (small == tail) return true;
    Shape ones = tail;
    ones.insert(ones.begin(), 1);
    return small == ones && big[0] != 1;
}

Broadcast broadcast_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return {a.shape(), a.size(), b.size()};
    if (drops_leading(a.shape(), b.shape())) return {a.shape(), a.size(), b.size()};
    if (drops_leading(b.shape(), a.shape())) return {b.shape(), a.size(), b.size()};
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                     shape_str(b.shape()));
}

// Accumulates `g` (length n_out) into a parent of length n_parent that was
// repeated over the leading dimension.
void accumulate(Node& parent, const std::vector<double>& g, double sign) {
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    const std::size_t n = pg.size();
    if (n == g.size()) {
        for (std::size_t i = 0; i < n; ++i) pg[i] += sign * g[i];
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) pg[i % n] += sign * g[i];
    }
}

struct AxisSplit {
    std::size_t outer;
    std::size_t len;
    std::size_t inner;
    Shape reduced;
};

AxisSplit split_axis(const Tensor& a, std::size_t axis, const char* op) {
    if (axis >= a.rank()) {
        throw ShapeError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                         " for shape " + shape_str(a.shape()));
    }
    AxisSplit s{1, a.shape()[axis], 1, {}};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= a.shape()[i];
    for (std::size_t i = axis + 1; i < a.rank(); ++i) s.inner *= a.shape()[i];
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i != axis) s.reduced.push_back(a.shape()[i]);
    }
    return s;
}

template <typename Forward, typename Derivative>
Tensor unary(const char* name, const Tensor& a, Forward f, Derivative df) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
    return Tensor::derived(name, a.shape(), std::move(out), {a}, [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_buffer();
        for (std::size_t i = 0; i < pg.size(); ++i) {
            pg[i] += self.grad[i] * df(p.data[i], self.data[i]);
        }
    });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    static constexpr const char* names[] = {"add", "sub", "mul"};
    const char* name = names[static_cast<int>(op)];
    const auto bc = broadcast_shapes(a, b, name);
    const std::size_t n = shape_size(bc.out);
    std::vector<double> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ad[i % bc.a_size];
        const double y = bd[i % bc.b_size];
        switch (op) {
            case BinaryOp::add: out[i] = x + y; break;
            case BinaryOp::sub: out[i] = x - y; break;
            case BinaryOp::mul: out[i] = x * y; break;
        }
    }
    return Tensor::derived(name, bc.out, std::move(out), {a, b}, [op](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (op == BinaryOp::mul) {
            const std::size_t na = pa.data.size();
            const std::size_t nb = pb.data.size();
            std::vector<double> g(self.grad.size());
            if (pa.requires_grad) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pb.data[i % nb];
                accumulate(pa, g, 1.0);
            }
            if (pb.requires_grad) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pa.data[i % na];
                accumulate(pb, g, 1.0);
            }
            return;
        }
        accumulate(pa, self.grad, 1.0);
        accumulate(pb, self.grad, op == BinaryOp::sub ? -1.0 : 1.0);
    });
}

Tensor elementwise(UnaryOp op, const Tensor& a, double slope) {
    switch (op) {
        case UnaryOp::neg:
            return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
        case UnaryOp::exp:
            return unary("exp", a, [](double x) { return std::exp(x); },
                         [](double, double y) { return y; });
        case UnaryOp::log:
            return unary("log", a, [](double x) { return std::log(x); },
                         [](double x, double) { return 1.0 / x; });
        case UnaryOp::square:
            return unary("square", a, [](double x) { return x * x; },
                         [](double x, double) { return 2.0 * x; });
        case UnaryOp::leaky_relu:
            return unary("leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
                         [slope](double x, double) { return x > 0 ? 1.0 : slope; });
        case UnaryOp::relu:
            return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                         [](double x, double) { return x > 0 ? 1.0 : 0.0; });
        case UnaryOp::sigmoid:
            return unary("sigmoid", a, stable_sigmoid,
                         [](double, double y) { return y * (1.0 - y); });
        case UnaryOp::softplus:
            return unary("softplus", a, stable_softplus,
                         [](double x, double) { return stable_sigmoid(x); });
    }
    throw std::invalid_argument("unknown unary op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }

Tensor neg(const Tensor& a) { return elementwise(UnaryOp::neg, a); }
Tensor exp(const Tensor& a) { return elementwise(UnaryOp::exp, a); }
Tensor log(const Tensor& a) { return elementwise(UnaryOp::log, a); }
Tensor square(const Tensor& a) { return elementwise(UnaryOp::square, a); }
Tensor leaky_relu(const Tensor& a, double slope) { return elementwise(UnaryOp::leaky_relu, a, slope); }
Tensor relu(const Tensor& a) { return elementwise(UnaryOp::relu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(UnaryOp::sigmoid, a); }
Tensor softplus(const Tensor& a) { return elementwise(UnaryOp::softplus, a); }

Tensor scale(const Tensor& a, double factor) {
    return unary("scale", a, [factor](double x) { return factor * x; },
                 [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary("add_scalar", a, [value](double x) { return x + value; },
                 [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bd[p * n + j];
        }
    }
    return Tensor::derived("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
            // grad_a = g * b^T
            auto& ga = pa.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.data[p * n + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            // grad_b = a^T * g
            auto& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = pa.data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
                }
            }
        }
    });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis) {
    static constexpr const char* names[] = {"sum", "mean", "max"};
    const char* name = names[static_cast<int>(op)];
    const auto s = split_axis(a, axis, name);
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> argmax;
    if (op == ReduceOp::max) argmax.resize(out.size());
    const auto ad = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            const std::size_t dst = o * s.inner + i;
            if (op == ReduceOp::max) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_j = 0;
                for (std::size_t j = 0; j < s.len; ++j) {
                    const double v = ad[base + j * s.inner];
                    if (v > best) {
                        best = v;
                        best_j = j;
                    }
                }
                out[dst] = best;
                argmax[dst] = best_j;
            } else {
                double acc = 0.0;
                for (std::size_t j = 0; j < s.len; ++j) acc += ad[base + j * s.inner];
                out[dst] = op == ReduceOp::mean ? acc / static_cast<double>(s.len) : acc;
            }
        }
    }
    return Tensor::derived(name, s.reduced, std::move(out), {a},
                           [op, s, argmax = std::move(argmax)](Node& self) {
                               Node& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               auto& pg = p.grad_buffer();
                               const double w = op == ReduceOp::mean
                                                    ? 1.0 / static_cast<double>(s.len)
                                                    : 1.0;
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                   for (std::size_t i = 0; i < s.inner; ++i) {
                                       const std::size_t base = o * s.len * s.inner + i;
                                       const double g = self.grad[o * s.inner + i];
                                       if (op == ReduceOp::max) {
                                           pg[base + argmax[o * s.inner + i] * s.inner] += g;
                                       } else {
                                           for (std::size_t j = 0; j < s.len; ++j) {
                                               pg[base + j * s.inner] += w * g;
                                           }
                                       }
                                   }
                               }
                           });
}

Tensor sum(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::sum, a, axis); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::mean, a, axis); }
Tensor max(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::max, a, axis); }

Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return Tensor::derived("sum_all", {}, {acc}, {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_buffer();
        for (double& g : pg) g += self.grad[0];
    });
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

Tensor logsumexp(const Tensor& a, std::size_t axis) {
    const auto s = split_axis(a, axis, "logsumexp");
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> out(s.outer * s.inner);
    const auto ad = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double m = neg_inf;
            for (std::size_t j = 0; j < s.len; ++j) m = std::max(m, ad[base + j * s.inner]);
            if (m == neg_inf) {
                out[o * s.inner + i] = neg_inf;
                continue;
            }
            double acc = 0.0;
            for (std::size_t j = 0; j < s.len; ++j) acc += std::exp(ad[base + j * s.inner] - m);
            out[o * s.inner + i] = m + std::log(acc);
        }
    }
    return Tensor::derived("logsumexp", s.reduced, std::move(out), {a}, [s](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const double lse = self.data[o * s.inner + i];
                if (lse == neg_inf) continue;
                const double g = self.grad[o * s.inner + i];
                const std::size_t base = o * s.len * s.inner + i;
                for (std::size_t j = 0; j < s.len; ++j) {
                    const std::size_t k = base + j * s.inner;
                    pg[k] += g * std::exp(p.data[k] - lse);
                }
            }
        }
    });
}

Tensor stack_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack_last: no inputs");
    const Shape& base = parts.front().shape();
    for (const auto& p : parts) {
        if (p.shape() != base) {
            throw ShapeError("stack_last: shape " + shape_str(p.shape()) + " differs from " +
                             shape_str(base));
        }
    }
    const std::size_t n = parts.front().size();
    const std::size_t k = parts.size();
    std::vector<double> out(n * k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto d = parts[j].data();
        for (std::size_t i = 0; i < n; ++i) out[i * k + j] = d[i];
    }
    Shape shape = base;
    shape.push_back(k);
    return Tensor::derived("stack", std::move(shape), std::move(out), parts, [n, k](Node& self) {
        for (std::size_t j = 0; j < k; ++j) {
            Node& p = *self.parents[j];
            if (!p.requires_grad) continue;
            auto& pg = p.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) pg[i] += self.grad[i * k + j];
        }
    });
}

}  // namespace ssvae
