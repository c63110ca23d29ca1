#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssvae/matrix.hpp"
#include "ssvae/models.hpp"

namespace ssvae {

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    double beta_kl = 0.05;
    double beta_cubo = 0.05;
    double gamma = 1.0;
    double alpha = 5.0;
    std::size_t anneal_epochs = 20;
    std::size_t warmup_epochs = 50;
    std::size_t nd_update_interval = 1;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_every = 50;
    double clip_norm = 5.0;
    std::size_t ensemble = 5;
    std::size_t samples_train = 1;
    std::size_t samples_cubo = 8;
    std::size_t samples_score = 64;
    std::uint64_t seed = 0;
    MlpSpec mlp;
    Likelihood likelihood = Likelihood::gaussian;
    std::size_t threads = 0;  // 0: one per ensemble member

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// Bias-corrected Adam on the gradients held by `params`. A parameter with no
// gradient buffer counts as a zero gradient. Throws NumericalAbort on
// non-finite gradients.
void adam_step(AdamState& state, std::span<Tensor> params, double lr);

// beta_final * min(1, epoch / anneal_epochs), epochs counted from 0.
double kl_anneal_coeff(std::size_t epoch, std::size_t anneal_epochs, double beta_final);

// Global L2-norm clipping. Returns the norm before clipping.
double clip_gradients(std::span<Tensor> params, double max_norm);
std::vector<double> clip_gradients(std::vector<double> grads, double max_norm);

// Outlier-path learning rate: lr * factor^(epoch / every).
double outlier_lr(const TrainConfig& config, std::size_t epoch);
bool is_outlier_epoch(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double elbo = 0.0;
    double kl = 0.0;
    double recon = 0.0;
    std::optional<double> outlier_term;
    std::size_t outlier_steps = 0;
    double lr = 0.0;
    double outlier_lr = 0.0;
    double anneal = 0.0;
    double wall_time = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    std::string to_csv() const;
    std::string to_json() const;
};

struct TrainingData {
    Matrix normal;   // includes pollution rows, which look normal to the trainer
    Matrix outlier;  // labeled outlier pool, may be empty
};

// Optional hooks called right after each backward pass, before the update.
struct TrainObserver {
    std::function<void(const SsadModel&, std::size_t epoch, std::size_t batch)> after_normal_backward;
    std::function<void(const SsadModel&, std::size_t epoch, std::size_t batch)> after_outlier_backward;
};

struct MemberResult {
    SsadModel model;
    TrainHistory history;
};

SsadModel make_model(const TrainConfig& config, Method method, std::size_t input_dim,
                     std::uint64_t seed);

MemberResult train_member(const TrainConfig& config, const TrainingData& data, Method method,
                          std::uint64_t seed, const TrainObserver* observer = nullptr);

struct TrainResult {
    Ensemble ensemble;
    std::vector<TrainHistory> histories;
};

// Trains config.ensemble members with seeds config.seed + i, concurrently.
TrainResult train(const TrainConfig& config, const TrainingData& data, Method method);

}  // namespace ssvae
