#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssvae/bounds.hpp"
#include "ssvae/matrix.hpp"
#include "ssvae/nets.hpp"

namespace ssvae {

enum class Method { vae, mml, dp, hybrid };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct SsadModel {
    VaeParams params;
    Method method = Method::dp;
    PriorSpec prior;
    double gamma = 1.0;
    double beta_kl = 0.05;
    double beta_cubo = 0.05;

    void validate() const;
};

struct SampleCounts {
    std::size_t elbo = 1;
    std::size_t cubo = 8;
};

// The term contributed by labeled outliers.
struct OutlierTerm {
    Tensor objective;  // scalar to minimize; already weighted by gamma
    double value = 0.0;
    std::optional<BoundReport> elbo;  // dp / hybrid
    std::optional<CuboReport> cubo;   // mml / hybrid
    const Node* encoder_id = nullptr;
};

struct LossReport {
    Tensor loss;
    BoundReport normal;
    std::optional<OutlierTerm> outlier;  // empty when there are no outlier rows
    const Node* normal_encoder_id = nullptr;
};

// -ELBO on normal rows with the N(0, I) prior. Full decoder gradient.
Tensor normal_objective(const SsadModel& model, const Tensor& x, double beta_kl,
                        std::size_t samples, CounterRng& rng, BoundReport* report = nullptr);

// Outlier term for the model's method, decoder frozen:
//   mml    gamma * CUBO loss with mu_o = 0
//   dp     -ELBO with the N(alpha 1, I) prior
//   hybrid dp term + gamma * CUBO loss with mu_o = 0
// Plain VAEs have no outlier term; calling this for one throws.
OutlierTerm outlier_objective(const SsadModel& model, const Tensor& x, double beta_kl,
                              const SampleCounts& samples, CounterRng& rng);

// Combined objectives. Both terms read the same encoder; an empty outlier
// batch reduces either loss to the plain negative ELBO. Non-finite values
// throw NumericalAbort naming the offending term.
LossReport mml_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                    double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                    CounterRng& outlier_rng);
LossReport dp_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                   double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                   CounterRng& outlier_rng);
LossReport model_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                      double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                      CounterRng& outlier_rng);

// Anomaly score: ELBO with the N(0, I) prior and beta_KL = 1, averaged over
// `samples` draws. Higher means more normal.
std::vector<double> score(const SsadModel& model, const Matrix& x, std::size_t samples,
                          std::uint64_t seed);

struct Ensemble {
    std::vector<SsadModel> members;
    std::vector<std::uint64_t> seeds;

    void validate() const;
};

// Row-wise mean over per-member score vectors. Values are summed in sorted
// order, so the result does not depend on member order.
std::vector<double> mean_member_scores(const std::vector<std::vector<double>>& member_scores);

// Mean of member scores. Every member uses the same scoring seed.
std::vector<double> ensemble_score(const Ensemble& ensemble, const Matrix& x, std::size_t samples,
                                   std::uint64_t seed);

}  // namespace ssvae
