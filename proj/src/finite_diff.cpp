#include "ssvae/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace ssvae {

FiniteDiffResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                   double eps) {
    FiniteDiffResult result;
    for (auto& p : params) p.zero_grad();
    const Tensor out = f();
    if (!std::isfinite(out.item())) {
        result.finite = false;
        return result;
    }
    backward(out);

    for (auto& p : params) {
        const auto g = p.grad();
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double ad = g.empty() ? 0.0 : g[i];
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = f().item();
            values[i] = saved - eps;
            const double down = f().item();
            values[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                result.finite = false;
                continue;
            }
            const double fd = (up - down) / (2.0 * eps);
            result.autodiff.push_back(ad);
            result.numeric.push_back(fd);
            result.max_rel_error =
                std::max(result.max_rel_error, std::abs(ad - fd) / std::max(1.0, std::abs(ad)));
        }
    }
    return result;
}

FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& point, double eps) {
    Tensor x = point.clone_leaf(true);
    std::vector<Tensor> params{x};
    return finite_diff_check([&] { return f(x); }, params, eps);
}

}  // namespace ssvae
