#include "ssvae/bounds.hpp"

#include <cfloat>
#include <cmath>
#include <numbers>

#include "ssvae/ops.hpp"

namespace ssvae {
namespace {

Tensor const_vector(std::span<const double> v) { return Tensor::vector({v.begin(), v.end()}); }

void check_prior(const GaussianPosterior& post, std::span<const double> mu, const char* what) {
    if (post.mu.rank() != 2 || post.mu.shape() != post.logvar.shape() || post.mu.dim(1) != mu.size()) {
        throw ShapeError(std::string(what) + ": posterior " + shape_str(post.mu.shape()) +
                         " / " + shape_str(post.logvar.shape()) + " vs prior mean of length " +
                         std::to_string(mu.size()));
    }
}

void check_noise(const GaussianPosterior& post, std::span<const Tensor> noise, const char* what) {
    if (noise.empty()) throw std::invalid_argument(std::string(what) + ": needs at least one sample");
    for (const auto& n : noise) {
        if (n.shape() != post.mu.shape()) {
            throw ShapeError(std::string(what) + ": noise " + shape_str(n.shape()) + " vs mu " +
                             shape_str(post.mu.shape()));
        }
    }
}

DecodeFn decoder_of(const VaeParams& params, bool frozen) {
    return [&params, frozen](const Tensor& z) {
        return decode(params.decoder, params.spec.mlp, z, frozen);
    };
}

}  // namespace

std::vector<Tensor> draw_noise(const Shape& shape, std::size_t samples, CounterRng& rng) {
    std::vector<Tensor> out;
    out.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        out.push_back(Tensor::leaf(shape, rng.normals(shape_size(shape))));
    }
    return out;
}

Tensor kl_to_gaussian_prior(const GaussianPosterior& post, std::span<const double> mu_o) {
    check_prior(post, mu_o, "kl_to_gaussian_prior");
    // -1/2 sum_i [1 + log s2 - s2 - mu^2 + 2 mu mu_o - mu_o^2]
    const Tensor m = post.mu;
    const Tensor lv = post.logvar;
    const Tensor mo = const_vector(mu_o);
    Tensor inner = sub(add_scalar(lv, 1.0), exp(lv));
    inner = sub(inner, square(m));
    inner = add(inner, scale(mul(m, mo), 2.0));
    inner = sub(inner, square(mo));
    return scale(sum(inner, 1), -0.5);
}

Tensor reconstruction_loss(const Tensor& decoded, const Tensor& x, Likelihood family) {
    if (decoded.shape() != x.shape() || x.rank() != 2) {
        throw ShapeError("reconstruction_loss: decoded " + shape_str(decoded.shape()) + " vs x " +
                         shape_str(x.shape()));
    }
    if (family == Likelihood::gaussian) {
        const double log_norm =
            0.5 * static_cast<double>(x.dim(1)) * std::log(2.0 * std::numbers::pi);
        return add_scalar(scale(sum(square(sub(x, decoded)), 1), 0.5), log_norm);
    }
    // Cross-entropy with logits: softplus(l) - x * l.
    return sum(sub(softplus(decoded), mul(x, decoded)), 1);
}

BoundReport elbo(const GaussianPosterior& post, const Tensor& x, const DecodeFn& decode_fn,
                 Likelihood family, std::span<const double> prior_mean, double beta_kl,
                 std::span<const Tensor> noise) {
    check_prior(post, prior_mean, "elbo");
    check_noise(post, noise, "elbo");
    std::vector<Tensor> recon;
    recon.reserve(noise.size());
    for (const auto& eps : noise) {
        recon.push_back(reconstruction_loss(decode_fn(reparameterize(post, eps)), x, family));
    }
    const Tensor recon_mean = recon.size() == 1 ? recon.front() : mean(stack_last(recon), 1);
    const Tensor kl = kl_to_gaussian_prior(post, prior_mean);
    const Tensor per_sample = neg(add(recon_mean, scale(kl, beta_kl)));

    BoundReport r;
    r.beta_kl = beta_kl;
    r.recon = mean_all(recon_mean).item();
    r.kl = mean_all(kl).item();
    r.elbo = -r.recon - beta_kl * r.kl;
    r.per_sample.assign(per_sample.data().begin(), per_sample.data().end());
    r.per_sample_tensor = per_sample;
    r.value = mean_all(per_sample);
    return r;
}

BoundReport elbo(const VaeParams& params, const Tensor& x, std::span<const double> prior_mean,
                 double beta_kl, std::size_t samples, CounterRng& rng, bool freeze_decoder) {
    const auto post = encode(params.encoder, params.spec.mlp, x);
    const auto noise = draw_noise(post.mu.shape(), samples, rng);
    return elbo(post, x, decoder_of(params, freeze_decoder), params.spec.likelihood, prior_mean,
                beta_kl, noise);
}

CuboReport cubo_loss(const GaussianPosterior& post, const Tensor& x, const DecodeFn& decode_fn,
                     Likelihood family, std::span<const double> mu_o, double beta_cubo,
                     std::span<const Tensor> noise) {
    check_prior(post, mu_o, "cubo_loss");
    check_noise(post, noise, "cubo_loss");
    const Tensor mo = const_vector(mu_o);
    const Tensor inv_var = exp(neg(post.logvar));
    double mo_sq = 0.0;
    for (double v : mu_o) mo_sq += v * v;

    // beta (log|S_q| + mu' S^-1 mu - mu_o' mu_o), per sample
    const Tensor outer = scale(
        add_scalar(add(sum(post.logvar, 1), sum(mul(square(post.mu), inv_var), 1)), -mo_sq),
        beta_cubo);

    std::vector<Tensor> terms;
    terms.reserve(noise.size());
    for (const auto& eps : noise) {
        const Tensor z = reparameterize(post, eps);
        const Tensor lr = reconstruction_loss(decode_fn(z), x, family);
        const Tensor z_sq = square(z);
        Tensor quad = neg(z_sq);
        quad = add(quad, scale(mul(z, mo), 2.0));
        quad = add(quad, mul(z_sq, inv_var));
        quad = sub(quad, scale(mul(mul(z, post.mu), inv_var), 2.0));
        terms.push_back(add(scale(lr, -2.0), scale(sum(quad, 1), beta_cubo)));
    }
    const Tensor log_mean_exp =
        add_scalar(logsumexp(stack_last(terms), 1), -std::log(static_cast<double>(noise.size())));

    CuboReport r;
    r.log_per_sample = add(outer, log_mean_exp);
    const double limit = std::log(DBL_MAX) - 10.0;
    for (double v : r.log_per_sample.data()) r.overflow = r.overflow || v > limit;
    r.log_loss = mean_all(r.log_per_sample);
    r.loss = mean_all(exp(r.log_per_sample));
    r.value = r.loss.item();
    r.log_value = r.log_loss.item();
    return r;
}

CuboReport cubo_loss(const VaeParams& params, const Tensor& x, std::span<const double> mu_o,
                     double beta_cubo, std::size_t samples, CounterRng& rng) {
    const auto post = encode(params.encoder, params.spec.mlp, x);
    const auto noise = draw_noise(post.mu.shape(), samples, rng);
    return cubo_loss(post, x, decoder_of(params, true), params.spec.likelihood, mu_o, beta_cubo,
                     noise);
}

}  // namespace ssvae
