#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ssvae/nets.hpp"
#include "ssvae/rng.hpp"
#include "ssvae/tensor.hpp"

namespace ssvae {

// Latent priors N(0, I) for normal data and N(alpha * 1, I) for outliers.
struct PriorSpec {
    std::size_t latent_dim = 0;
    double alpha = 5.0;

    std::vector<double> mu_normal() const { return std::vector<double>(latent_dim, 0.0); }
    std::vector<double> mu_outlier() const { return std::vector<double>(latent_dim, alpha); }
};

// Per-sample KL(N(mu, diag(exp(logvar))) || N(mu_o, I)), shape [batch].
Tensor kl_to_gaussian_prior(const GaussianPosterior& post, std::span<const double> mu_o);

// Per-sample -log p(x | decoder output), shape [batch]. Gaussian decoders use
// unit variance and keep the (d/2) log 2pi term. Bernoulli decoders take
// logits.
Tensor reconstruction_loss(const Tensor& decoded, const Tensor& x, Likelihood family);

using DecodeFn = std::function<Tensor(const Tensor& z)>;

struct BoundReport {
    double recon = 0.0;  // batch mean of the S-sample mean L_R
    double kl = 0.0;     // batch mean KL
    double beta_kl = 1.0;
    double elbo = 0.0;   // -recon - beta_kl * kl
    std::vector<double> per_sample;
    Tensor per_sample_tensor;  // [batch], differentiable
    Tensor value;              // scalar batch mean, differentiable
};

// One noise tensor per Monte Carlo sample, each shaped like post.mu.
BoundReport elbo(const GaussianPosterior& post, const Tensor& x, const DecodeFn& decode,
                 Likelihood family, std::span<const double> prior_mean, double beta_kl,
                 std::span<const Tensor> noise);

BoundReport elbo(const VaeParams& params, const Tensor& x, std::span<const double> prior_mean,
                 double beta_kl, std::size_t samples, CounterRng& rng, bool freeze_decoder = false);

struct CuboReport {
    Tensor log_per_sample;  // [batch], log of the per-sample exp-CUBO loss
    Tensor loss;            // scalar, mean over the batch of exp(log_per_sample)
    Tensor log_loss;        // scalar, mean over the batch of log_per_sample
    double value = 0.0;
    double log_value = 0.0;
    bool overflow = false;  // some sample's exponent is beyond log(DBL_MAX) - 10

    // The exp-domain loss unless it would overflow, then the log-domain one.
    const Tensor& objective() const { return overflow ? log_loss : loss; }
};

inline constexpr std::size_t kCuboOrder = 2;

// exp{b(log|S_q| + mu_q' S_q^-1 mu_q - mu_o' mu_o)
//     + log E_q[exp{-2 L_R + b(-z'z + 2 z' mu_o + z' S_q^-1 z - 2 z' S_q^-1 mu_q)}]}
// with the expectation estimated as logsumexp over the noise samples minus
// log S.
CuboReport cubo_loss(const GaussianPosterior& post, const Tensor& x, const DecodeFn& decode,
                     Likelihood family, std::span<const double> mu_o, double beta_cubo,
                     std::span<const Tensor> noise);

// Decoder enters as a constant: only the encoder receives gradient.
CuboReport cubo_loss(const VaeParams& params, const Tensor& x, std::span<const double> mu_o,
                     double beta_cubo, std::size_t samples, CounterRng& rng);

std::vector<Tensor> draw_noise(const Shape& shape, std::size_t samples, CounterRng& rng);

}  // namespace ssvae
