#include "ssvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "ssvae/errors.hpp"

namespace ssvae {
namespace {

Tensor batch_tensor(const Matrix& m, std::span<const std::size_t> idx) {
    const Matrix sub = m.select_rows(idx);
    return Tensor::leaf({sub.rows, sub.cols}, sub.values);
}

void zero_all(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

std::string context(std::size_t epoch, std::size_t batch, const char* term) {
    return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ", " + term +
           " term";
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (warmup_epochs >= epochs) throw std::invalid_argument("warmup_epochs must be below epochs");
    if (anneal_epochs > epochs) throw std::invalid_argument("anneal_epochs exceeds epochs");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (nd_update_interval == 0) throw std::invalid_argument("nd_update_interval must be positive");
    if (lr_decay_every == 0) throw std::invalid_argument("lr_decay_every must be positive");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
    if (ensemble == 0) throw std::invalid_argument("ensemble size must be positive");
    if (samples_train == 0 || samples_cubo == 0 || samples_score == 0) {
        throw std::invalid_argument("sample counts must be positive");
    }
    if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
    mlp.validate();
}

void adam_step(AdamState& state, std::span<Tensor> params, double lr) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter list changed");
    for (const auto& p : params) {
        for (double g : p.grad()) {
            if (!std::isfinite(g)) throw NumericalAbort("non-finite gradient in adam_step");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != params[k].size()) throw ShapeError("adam_step: parameter shape changed");
        const auto g = params[k].grad();
        auto w = params[k].mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
}

double kl_anneal_coeff(std::size_t epoch, std::size_t anneal_epochs, double beta_final) {
    if (anneal_epochs == 0 || epoch >= anneal_epochs) return beta_final;
    return beta_final * static_cast<double>(epoch) / static_cast<double>(anneal_epochs);
}

double clip_gradients(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& p : params) {
            for (double& g : p.mutable_grad()) g *= f;
        }
    }
    return norm;
}

std::vector<double> clip_gradients(std::vector<double> grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        for (double& g : grads) g *= max_norm / norm;
    }
    return grads;
}

double outlier_lr(const TrainConfig& config, std::size_t epoch) {
    const auto steps = static_cast<double>(epoch / config.lr_decay_every);
    return config.lr * std::pow(config.lr_decay_factor, steps);
}

bool is_outlier_epoch(const TrainConfig& config, std::size_t epoch) {
    return epoch >= config.warmup_epochs &&
           (epoch - config.warmup_epochs) % config.nd_update_interval == 0;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,elbo,kl,recon,outlier_term,outlier_steps,lr,outlier_lr,anneal,wall_time\n";
    for (const auto& e : epochs) {
        os << e.epoch << ',' << e.elbo << ',' << e.kl << ',' << e.recon << ',';
        if (e.outlier_term) os << *e.outlier_term;
        os << ',' << e.outlier_steps << ',' << e.lr << ',' << e.outlier_lr << ',' << e.anneal << ','
           << e.wall_time << '\n';
    }
    return os.str();
}

std::string TrainHistory::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json j{{"epoch", e.epoch},         {"elbo", e.elbo},
                         {"kl", e.kl},               {"recon", e.recon},
                         {"outlier_steps", e.outlier_steps},
                         {"lr", e.lr},               {"outlier_lr", e.outlier_lr},
                         {"anneal", e.anneal},       {"wall_time", e.wall_time}};
        j["outlier_term"] = e.outlier_term ? nlohmann::json(*e.outlier_term) : nlohmann::json();
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"epochs", std::move(arr)}}.dump(2);
}

SsadModel make_model(const TrainConfig& config, Method method, std::size_t input_dim,
                     std::uint64_t seed) {
    SsadModel model;
    VaeSpec spec;
    spec.input_dim = input_dim;
    spec.mlp = config.mlp;
    spec.likelihood = config.likelihood;
    model.params = init_vae(spec, seed);
    model.method = method;
    model.prior = PriorSpec{config.mlp.latent_dim(), config.alpha};
    model.gamma = config.gamma;
    model.beta_kl = config.beta_kl;
    model.beta_cubo = config.beta_cubo;
    model.validate();
    return model;
}

MemberResult train_member(const TrainConfig& config, const TrainingData& data, Method method,
                          std::uint64_t seed, const TrainObserver* observer) {
    config.validate();
    if (data.normal.rows == 0) throw DataError("training needs at least one normal row");
    if (data.outlier.rows > 0 && data.outlier.cols != data.normal.cols) {
        throw DataError("outlier rows have a different feature count than normal rows");
    }

    MemberResult result{make_model(config, method, data.normal.cols, seed), {}};
    SsadModel& model = result.model;
    auto all_params = model.params.parameters();
    auto encoder_params = model.params.encoder.parameters();

    auto shuffle_rng = make_rng(seed, Stream::shuffle);
    auto normal_noise = make_rng(seed, Stream::normal_noise);
    auto outlier_noise = make_rng(seed, Stream::outlier_noise);
    AdamState normal_opt;
    AdamState outlier_opt;
    const SampleCounts samples{config.samples_train, config.samples_cubo};
    // With gamma = 0 the MML outlier term is identically zero; skipping it keeps
    // the shuffle stream, and so the whole run, equal to a plain VAE run.
    const bool zero_weight = method == Method::mml && config.gamma == 0.0;
    const bool has_outliers = method != Method::vae && data.outlier.rows > 0 && !zero_weight;
    const std::size_t n = data.normal.rows;
    const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t outlier_batch = std::min(data.outlier.rows, config.batch_size);
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double beta = kl_anneal_coeff(epoch, config.anneal_epochs, config.beta_kl);
        const bool outlier_epoch = has_outliers && is_outlier_epoch(config, epoch);
        const double o_lr = outlier_lr(config, epoch);
        const auto order = permutation(n, shuffle_rng);
        std::vector<std::size_t> outlier_order;
        std::size_t outlier_cursor = 0;
        if (outlier_epoch) outlier_order = permutation(data.outlier.rows, shuffle_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = config.lr;
        rec.outlier_lr = o_lr;
        rec.anneal = beta;
        double outlier_sum = 0.0;

        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(n, lo + config.batch_size);
            const Tensor x = batch_tensor(data.normal, std::span(order).subspan(lo, hi - lo));

            zero_all(all_params);
            BoundReport report;
            const Tensor loss =
                normal_objective(model, x, beta, samples.elbo, normal_noise, &report);
            if (!std::isfinite(loss.item())) {
                throw NumericalAbort("non-finite loss at " + context(epoch, b, "normal"));
            }
            backward(loss);
            if (observer && observer->after_normal_backward) {
                observer->after_normal_backward(model, epoch, b);
            }
            try {
                adam_step(normal_opt, all_params, config.lr);
            } catch (const NumericalAbort& e) {
                throw NumericalAbort(std::string(e.what()) + " at " + context(epoch, b, "normal"));
            }
            rec.elbo += report.elbo;
            rec.kl += report.kl;
            rec.recon += report.recon;

            if (!outlier_epoch) continue;
            std::vector<std::size_t> idx;
            for (std::size_t k = 0; k < outlier_batch; ++k) {
                if (outlier_cursor == outlier_order.size()) {
                    outlier_order = permutation(data.outlier.rows, shuffle_rng);
                    outlier_cursor = 0;
                }
                idx.push_back(outlier_order[outlier_cursor++]);
            }
            const Tensor xo = batch_tensor(data.outlier, idx);
            zero_all(all_params);
            const OutlierTerm term = outlier_objective(model, xo, beta, samples, outlier_noise);
            if (!std::isfinite(term.value)) {
                throw NumericalAbort("non-finite loss at " + context(epoch, b, "outlier"));
            }
            backward(term.objective);
            if (observer && observer->after_outlier_backward) {
                observer->after_outlier_backward(model, epoch, b);
            }
            clip_gradients(encoder_params, config.clip_norm);
            try {
                adam_step(outlier_opt, encoder_params, o_lr);
            } catch (const NumericalAbort& e) {
                throw NumericalAbort(std::string(e.what()) + " at " + context(epoch, b, "outlier"));
            }
            outlier_sum += term.value;
            ++rec.outlier_steps;
        }

        const double nb = static_cast<double>(batches);
        rec.elbo /= nb;
        rec.kl /= nb;
        rec.recon /= nb;
        if (rec.outlier_steps > 0) rec.outlier_term = outlier_sum / static_cast<double>(rec.outlier_steps);
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.epochs.push_back(rec);
    }
    zero_all(all_params);
    return result;
}

TrainResult train(const TrainConfig& config, const TrainingData& data, Method method) {
    config.validate();
    if (data.normal.rows == 0) throw DataError("training needs at least one normal row");
    const std::size_t k = config.ensemble;
    std::vector<std::optional<MemberResult>> results(k);
    std::vector<std::exception_ptr> errors(k);
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(k, config.threads == 0 ? k : config.threads));

    auto run = [&](std::size_t i) {
        try {
            results[i] = train_member(config, data, method, config.seed + i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    for (std::size_t base = 0; base < k; base += workers) {
        std::vector<std::thread> pool;
        for (std::size_t i = base; i < std::min(k, base + workers); ++i) pool.emplace_back(run, i);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    TrainResult out;
    for (std::size_t i = 0; i < k; ++i) {
        out.ensemble.members.push_back(std::move(results[i]->model));
        out.ensemble.seeds.push_back(config.seed + i);
        out.histories.push_back(std::move(results[i]->history));
    }
    return out;
}

}  // namespace ssvae
