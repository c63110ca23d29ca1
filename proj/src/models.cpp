#include "ssvae/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ssvae/errors.hpp"
#include "ssvae/ops.hpp"

namespace ssvae {
namespace {

constexpr std::size_t kScoreChunk = 512;

const Node* encoder_identity(const SsadModel& model) {
    return model.params.encoder.parameters().front().id();
}

void require_finite(const Tensor& t, const char* term) {
    if (!std::isfinite(t.item())) {
        throw NumericalAbort(std::string("non-finite ") + term + " term (value " +
                             std::to_string(t.item()) + ")");
    }
}

LossReport combine(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                   double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                   CounterRng& outlier_rng) {
    LossReport r;
    r.loss = normal_objective(model, normal, beta_kl, samples.elbo, normal_rng, &r.normal);
    r.normal_encoder_id = encoder_identity(model);
    require_finite(r.loss, "normal");
    if (model.method != Method::vae && outlier.defined() && outlier.dim(0) > 0) {
        r.outlier = outlier_objective(model, outlier, beta_kl, samples, outlier_rng);
        require_finite(r.outlier->objective, "outlier");
        r.loss = add(r.loss, r.outlier->objective);
    }
    return r;
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::vae: return "vae";
        case Method::mml: return "mml";
        case Method::dp: return "dp";
        case Method::hybrid: return "hybrid";
    }
    return "unknown";
}

Method parse_method(const std::string& s) {
    if (s == "vae") return Method::vae;
    if (s == "mml") return Method::mml;
    if (s == "dp") return Method::dp;
    if (s == "hybrid") return Method::hybrid;
    throw std::invalid_argument("unknown method '" + s + "' (expected vae, mml, dp or hybrid)");
}

void SsadModel::validate() const {
    if ((method == Method::dp || method == Method::hybrid) && prior.alpha == 0.0) {
        throw std::invalid_argument("dual-prior models need a non-zero alpha");
    }
    if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
    if (prior.latent_dim != params.spec.mlp.latent_dim()) {
        throw std::invalid_argument("prior latent dimension does not match the encoder");
    }
}

Tensor normal_objective(const SsadModel& model, const Tensor& x, double beta_kl,
                        std::size_t samples, CounterRng& rng, BoundReport* report) {
    const auto mu0 = model.prior.mu_normal();
    auto b = elbo(model.params, x, mu0, beta_kl, samples, rng, false);
    Tensor obj = neg(b.value);
    if (report) *report = std::move(b);
    return obj;
}

OutlierTerm outlier_objective(const SsadModel& model, const Tensor& x, double beta_kl,
                              const SampleCounts& samples, CounterRng& rng) {
    OutlierTerm t;
    t.encoder_id = encoder_identity(model);
    const auto zero = model.prior.mu_normal();
    switch (model.method) {
        case Method::vae:
            throw std::logic_error("plain VAE has no outlier term");
        case Method::mml: {
            auto c = cubo_loss(model.params, x, zero, model.beta_cubo, samples.cubo, rng);
            t.objective = scale(c.objective(), model.gamma);
            t.cubo = std::move(c);
            break;
        }
        case Method::dp:
        case Method::hybrid: {
            const auto mu_o = model.prior.mu_outlier();
            auto b = elbo(model.params, x, mu_o, beta_kl, samples.elbo, rng, true);
            t.objective = neg(b.value);
            t.elbo = std::move(b);
            if (model.method == Method::hybrid) {
                auto c = cubo_loss(model.params, x, zero, model.beta_cubo, samples.cubo, rng);
                t.objective = add(t.objective, scale(c.objective(), model.gamma));
                t.cubo = std::move(c);
            }
            break;
        }
    }
    t.value = t.objective.item();
    return t;
}

LossReport mml_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                    double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                    CounterRng& outlier_rng) {
    if (model.method != Method::mml) throw std::invalid_argument("mml_loss on a non-mml model");
    return combine(model, normal, outlier, beta_kl, samples, normal_rng, outlier_rng);
}

LossReport dp_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                   double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                   CounterRng& outlier_rng) {
    if (model.method != Method::dp) throw std::invalid_argument("dp_loss on a non-dp model");
    return combine(model, normal, outlier, beta_kl, samples, normal_rng, outlier_rng);
}

LossReport model_loss(const SsadModel& model, const Tensor& normal, const Tensor& outlier,
                      double beta_kl, const SampleCounts& samples, CounterRng& normal_rng,
                      CounterRng& outlier_rng) {
    return combine(model, normal, outlier, beta_kl, samples, normal_rng, outlier_rng);
}

std::vector<double> score(const SsadModel& model, const Matrix& x, std::size_t samples,
                          std::uint64_t seed) {
    if (samples == 0) throw std::invalid_argument("score needs at least one sample");
    if (x.cols != model.params.spec.input_dim) {
        throw ShapeError("score: data has " + std::to_string(x.cols) + " features, model expects " +
                         std::to_string(model.params.spec.input_dim));
    }
    auto rng = make_rng(seed, Stream::score_noise);
    const auto mu0 = model.prior.mu_normal();
    std::vector<double> out;
    out.reserve(x.rows);
    for (std::size_t start = 0; start < x.rows; start += kScoreChunk) {
        const std::size_t n = std::min(kScoreChunk, x.rows - start);
        std::vector<double> chunk(x.values.begin() + static_cast<std::ptrdiff_t>(start * x.cols),
                                  x.values.begin() + static_cast<std::ptrdiff_t>((start + n) * x.cols));
        const Tensor xt = Tensor::leaf({n, x.cols}, std::move(chunk));
        const auto b = elbo(model.params, xt, mu0, 1.0, samples, rng, true);
        out.insert(out.end(), b.per_sample.begin(), b.per_sample.end());
    }
    return out;
}

void Ensemble::validate() const {
    if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
    if (seeds.size() != members.size()) throw std::invalid_argument("one seed per member required");
    const auto& ref = members.front();
    for (const auto& m : members) {
        if (m.method != ref.method || m.params.spec.input_dim != ref.params.spec.input_dim ||
            m.params.spec.mlp.widths != ref.params.spec.mlp.widths) {
            throw std::invalid_argument("ensemble members must share method and architecture");
        }
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw std::invalid_argument("ensemble seeds must be pairwise distinct");
    }
}

std::vector<double> mean_member_scores(const std::vector<std::vector<double>>& member_scores) {
    if (member_scores.empty()) throw std::invalid_argument("no member scores");
    const std::size_t rows = member_scores.front().size();
    for (const auto& m : member_scores) {
        if (m.size() != rows) throw std::invalid_argument("member score lengths differ");
    }
    const double k = static_cast<double>(member_scores.size());
    std::vector<double> out(rows);
    std::vector<double> column(member_scores.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < member_scores.size(); ++j) column[j] = member_scores[j][i];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double v : column) acc += v;
        out[i] = acc / k;
    }
    return out;
}

std::vector<double> ensemble_score(const Ensemble& ensemble, const Matrix& x, std::size_t samples,
                                   std::uint64_t seed) {
    if (ensemble.members.empty()) throw std::invalid_argument("empty ensemble");
    std::vector<std::vector<double>> member_scores;
    for (const auto& m : ensemble.members) member_scores.push_back(score(m, x, samples, seed));
    return mean_member_scores(member_scores);
}

}  // namespace ssvae
