#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

struct FiniteDiffResult {
    // max_i |g_ad - g_fd| / max(1, |g_ad|)
    double max_rel_error = 0.0;
    bool finite = true;
    std::vector<double> autodiff;
    std::vector<double> numeric;
};

// Compares reverse-mode gradients of `f` with central differences over every
// entry of every tensor in `params`. The parameters are perturbed in place
// and restored; their gradient buffers are reset first.
FiniteDiffResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                   double eps = 1e-5);

// Single-input form: `f` receives a trainable leaf holding `point`.
FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& point, double eps = 1e-5);

}  // namespace ssvae
