#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "ssvae/datakit.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/trainer.hpp"

using namespace ssvae;

namespace {

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.warmup_epochs = 4;
    cfg.anneal_epochs = 3;
    cfg.batch_size = 32;
    cfg.mlp.widths = {6, 4, 2};
    cfg.ensemble = 2;
    return cfg;
}

TrainingData quick_data(std::size_t outliers = 6) {
    const auto ds = synth_gaussian_ad(3, 100, outliers, 3.0, 11);
    TrainingData d;
    d.normal.cols = d.outlier.cols = 3;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (ds.labels[i] == Label::normal) d.normal.append_row(ds.features.row(i));
        else d.outlier.append_row(ds.features.row(i));
    }
    return d;
}

std::vector<double> flat(const SsadModel& m) {
    std::vector<double> out;
    for (const auto& t : m.params.parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

std::vector<double> flat_grads(const SsadModel& m) {
    std::vector<double> out;
    for (const auto& t : m.params.parameters()) {
        if (t.has_grad()) out.insert(out.end(), t.grad().begin(), t.grad().end());
        else out.insert(out.end(), t.size(), 0.0);
    }
    return out;
}

}  // namespace

TEST_CASE("adam first step moves each weight by about lr") {
    auto w = Tensor::leaf({3}, {0.5, -1.0, 2.0}, true);
    w.node()->grad_buffer();
    for (auto& g : w.mutable_grad()) g = 1.0;
    std::vector<Tensor> params{w};
    AdamState st;
    adam_step(st, params, 1e-3);
    const std::vector<double> before{0.5, -1.0, 2.0};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(w[i] - before[i] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
    }
    CHECK(st.step == 1);
    CHECK(st.m[0].size() == 3);
}

TEST_CASE("adam with zero gradient leaves weights and decays moments") {
    auto w = Tensor::leaf({2}, {0.5, -1.0}, true);
    std::vector<Tensor> params{w};
    AdamState st;
    w.node()->grad_buffer();
    adam_step(st, params, 1e-3);
    CHECK(w[0] == 0.5);
    CHECK(w[1] == -1.0);

    for (auto& g : w.mutable_grad()) g = 1.0;
    adam_step(st, params, 1e-3);
    const double m1 = st.m[0][0], v1 = st.v[0][0];
    for (auto& g : w.mutable_grad()) g = 0.0;
    adam_step(st, params, 1e-3);
    CHECK(st.m[0][0] == doctest::Approx(0.9 * m1));
    CHECK(st.v[0][0] == doctest::Approx(0.999 * v1));
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
    const auto run = [] {
        auto w = Tensor::leaf({4}, {0.1, 0.2, 0.3, 0.4}, true);
        std::vector<Tensor> params{w};
        AdamState st;
        for (int step = 0; step < 100; ++step) {
            w.node()->grad_buffer();
            auto g = w.mutable_grad();
            for (std::size_t i = 0; i < 4; ++i) g[i] = std::sin(step * 0.37 + i) * w[i];
            adam_step(st, params, 1e-2);
        }
        return std::vector<double>(w.data().begin(), w.data().end());
    };
    CHECK(run() == run());

    auto w = Tensor::leaf({1}, {0.0}, true);
    w.node()->grad_buffer();
    w.mutable_grad()[0] = NAN;
    std::vector<Tensor> params{w};
    AdamState st;
    CHECK_THROWS_AS(adam_step(st, params, 1e-3), NumericalAbort);
}

TEST_CASE("kl annealing") {
    CHECK(kl_anneal_coeff(0, 20, 0.05) == 0.0);
    CHECK(kl_anneal_coeff(10, 20, 0.05) == doctest::Approx(0.025));
    CHECK(kl_anneal_coeff(20, 20, 0.05) == 0.05);
    CHECK(kl_anneal_coeff(149, 20, 0.05) == 0.05);
    double prev = 0.0;
    for (std::size_t e = 0; e < 60; ++e) {
        const double c = kl_anneal_coeff(e, 20, 0.5);
        CHECK(c >= prev);
        prev = c;
    }
    CHECK(prev == 0.5);
}

TEST_CASE("gradient clipping") {
    CHECK(clip_gradients({6, 8}, 5.0) == std::vector<double>{3, 4});
    CHECK(clip_gradients({1, 2}, 5.0) == std::vector<double>{1, 2});
    const auto g = clip_gradients({3, 4}, 1.0);
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));

    auto a = Tensor::leaf({1}, {0.0}, true);
    auto b = Tensor::leaf({1}, {0.0}, true);
    a.node()->grad_buffer();
    b.node()->grad_buffer();
    a.mutable_grad()[0] = 6.0;
    b.mutable_grad()[0] = 8.0;
    std::vector<Tensor> params{a, b};
    CHECK(clip_gradients(params, 5.0) == 10.0);
    CHECK(a.grad()[0] == 3.0);
    CHECK(b.grad()[0] == 4.0);
}

TEST_CASE("outlier schedule") {
    TrainConfig cfg;
    CHECK(outlier_lr(cfg, 0) == 1e-3);
    CHECK(outlier_lr(cfg, 49) == 1e-3);
    CHECK(outlier_lr(cfg, 50) == doctest::Approx(1e-4));
    CHECK(outlier_lr(cfg, 100) == doctest::Approx(1e-5));
    CHECK_FALSE(is_outlier_epoch(cfg, 49));
    CHECK(is_outlier_epoch(cfg, 50));
    cfg.nd_update_interval = 2;
    CHECK(is_outlier_epoch(cfg, 50));
    CHECK_FALSE(is_outlier_epoch(cfg, 51));
    CHECK(is_outlier_epoch(cfg, 52));
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.warmup_epochs = cfg.epochs;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.anneal_epochs = cfg.epochs + 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("warm-up epochs carry no outlier term") {
    auto cfg = quick_config();
    cfg.epochs = 60;
    cfg.warmup_epochs = 50;
    cfg.anneal_epochs = 20;
    cfg.batch_size = 128;
    const auto r = train_member(cfg, quick_data(), Method::mml, 0);
    REQUIRE(r.history.epochs.size() == 60);
    for (const auto& e : r.history.epochs) {
        CAPTURE(e.epoch);
        CHECK(e.outlier_term.has_value() == (e.epoch >= 50));
        CHECK(e.anneal == kl_anneal_coeff(e.epoch, 20, cfg.beta_kl));
    }
}

TEST_CASE("update interval 2 skips alternate epochs") {
    auto cfg = quick_config();
    cfg.nd_update_interval = 2;
    const auto r = train_member(cfg, quick_data(), Method::dp, 0);
    for (const auto& e : r.history.epochs) {
        const bool expected = e.epoch >= 4 && (e.epoch - 4) % 2 == 0;
        CHECK(e.outlier_term.has_value() == expected);
        CHECK((e.outlier_steps > 0) == expected);
    }
}

TEST_CASE("training is deterministic") {
    const auto cfg = quick_config();
    const auto data = quick_data();
    for (auto method : {Method::mml, Method::dp, Method::hybrid}) {
        const auto a = train_member(cfg, data, method, 3);
        const auto b = train_member(cfg, data, method, 3);
        CHECK(flat(a.model) == flat(b.model));
        for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
            CHECK(a.history.epochs[i].elbo == b.history.epochs[i].elbo);
            CHECK(a.history.epochs[i].outlier_term == b.history.epochs[i].outlier_term);
        }
        CHECK(flat(a.model) != flat(train_member(cfg, data, method, 4).model));
    }
}

TEST_CASE("warm-up gradients equal a plain VAE run") {
    const auto cfg = quick_config();
    const auto data = quick_data();
    std::vector<std::vector<double>> vae, dp;
    TrainObserver ov, od;
    ov.after_normal_backward = [&](const SsadModel& m, std::size_t epoch, std::size_t) {
        if (epoch < cfg.warmup_epochs) vae.push_back(flat_grads(m));
    };
    od.after_normal_backward = [&](const SsadModel& m, std::size_t epoch, std::size_t) {
        if (epoch < cfg.warmup_epochs) dp.push_back(flat_grads(m));
    };
    train_member(cfg, data, Method::vae, 5, &ov);
    train_member(cfg, data, Method::dp, 5, &od);
    REQUIRE(vae.size() == 16);
    CHECK(vae == dp);
}

TEST_CASE("outlier updates never touch the decoder over a full run") {
    auto cfg = quick_config();
    const auto data = quick_data();
    for (auto method : {Method::mml, Method::dp, Method::hybrid}) {
        CAPTURE(to_string(method));
        std::size_t calls = 0;
        bool clean = true;
        TrainObserver obs;
        obs.after_outlier_backward = [&](const SsadModel& m, std::size_t, std::size_t) {
            ++calls;
            for (const auto& t : m.params.decoder.parameters()) {
                for (double g : t.grad()) clean = clean && g == 0.0;
            }
        };
        train_member(cfg, data, method, 1, &obs);
        CHECK(calls == 16);
        CHECK(clean);
    }
}

TEST_CASE("gamma = 0 and empty outlier runs match a plain VAE bit for bit") {
    auto cfg = quick_config();
    const auto data = quick_data();
    const auto plain = flat(train_member(cfg, data, Method::vae, 9).model);

    auto zero = cfg;
    zero.gamma = 0.0;
    CHECK(flat(train_member(zero, data, Method::mml, 9).model) == plain);

    TrainingData no_outliers{data.normal, Matrix(0, 3)};
    CHECK(flat(train_member(cfg, no_outliers, Method::mml, 9).model) == plain);
    CHECK(flat(train_member(cfg, no_outliers, Method::dp, 9).model) == plain);
    CHECK(flat(train_member(cfg, no_outliers, Method::hybrid, 9).model) == plain);
}

TEST_CASE("non-finite losses abort with epoch, batch and term") {
    auto cfg = quick_config();
    auto data = quick_data();
    for (auto& v : data.outlier.values) v = 1e200;
    try {
        train_member(cfg, data, Method::dp, 0);
        FAIL("expected NumericalAbort");
    } catch (const NumericalAbort& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 4") != std::string::npos);
        CHECK(msg.find("batch 0") != std::string::npos);
        CHECK(msg.find("outlier") != std::string::npos);
    }
}

TEST_CASE("empty normal data is rejected") {
    TrainingData d{Matrix(0, 3), Matrix(0, 3)};
    CHECK_THROWS_AS(train_member(quick_config(), d, Method::dp, 0), DataError);
    CHECK_THROWS_AS(train(quick_config(), d, Method::dp), DataError);
}

TEST_CASE("ensemble members use master seed + i") {
    auto cfg = quick_config();
    cfg.ensemble = 3;
    cfg.seed = 40;
    const auto data = quick_data();
    const auto r = train(cfg, data, Method::dp);
    CHECK(r.ensemble.seeds == std::vector<std::uint64_t>{40, 41, 42});
    CHECK(r.histories.size() == 3);
    CHECK_NOTHROW(r.ensemble.validate());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(flat(r.ensemble.members[i]) == flat(train_member(cfg, data, Method::dp, 40 + i).model));
    }
    cfg.threads = 1;
    const auto serial = train(cfg, data, Method::dp);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(flat(serial.ensemble.members[i]) == flat(r.ensemble.members[i]));
    }
}

TEST_CASE("history export") {
    const auto cfg = quick_config();
    const auto r = train_member(cfg, quick_data(), Method::mml, 0);
    const auto csv = r.history.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(cfg.epochs));
    CHECK(csv.rfind("epoch,elbo,kl,recon,outlier_term", 0) == 0);
    const auto j = nlohmann::json::parse(r.history.to_json());
    REQUIRE(j["epochs"].size() == cfg.epochs);
    CHECK(j["epochs"][0]["outlier_term"].is_null());
    CHECK(j["epochs"][cfg.epochs - 1]["outlier_term"].is_number());
}
