// ssvae: train, score and benchmark semi-supervised VAE anomaly detectors.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ssvae/run.hpp"

namespace {

struct FlagValues {
    std::map<std::string, std::string> values;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }
};

void add_common(CLI::App* app, FlagValues& flags, std::string& config_path) {
    app->add_option("--config", config_path, "key=value config file or a run manifest.json");
    flags.add(app, "--dataset", "dataset", "CSV with numeric features and a label column");
    flags.add(app, "--label-column", "label_column", "label column name or zero-based index");
    flags.add(app, "--positive-token", "positive_token", "label value marking anomalies");
    flags.add(app, "--seeds", "seeds", "comma-separated seeds");
    flags.add(app, "--out", "out", "output root directory (default $SSVAE_OUT_ROOT or ./runs)");
    flags.add(app, "--samples-score", "samples_score", "Monte Carlo samples per score");
    flags.add(app, "--threads", "threads", "worker threads for ensemble training");
}

void add_training(CLI::App* app, FlagValues& flags) {
    flags.add(app, "--synth", "synth", "synthetic data d,n,shift[,n_anomaly]");
    flags.add(app, "--method", "method", "vae, mml, dp or hybrid");
    flags.add(app, "--gamma-l", "gamma_l", "labeled anomaly ratio");
    flags.add(app, "--gamma-p", "gamma_p", "pollution ratio of the unlabeled pool");
    flags.add(app, "--epochs", "epochs", "training epochs");
    flags.add(app, "--ensemble", "ensemble", "ensemble size K");
    flags.add(app, "--alpha", "alpha", "outlier prior mean (dual prior)");
    flags.add(app, "--beta-kl", "beta_kl", "final KL coefficient");
    flags.add(app, "--beta-cubo", "beta_cubo", "CUBO balancing coefficient");
    flags.add(app, "--gamma", "gamma", "CUBO weight (max-min likelihood)");
    flags.add(app, "--lr", "lr", "learning rate");
    flags.add(app, "--batch-size", "batch_size", "minibatch size");
    flags.add(app, "--warmup-epochs", "warmup_epochs", "epochs before outlier updates");
    flags.add(app, "--anneal-epochs", "anneal_epochs", "KL annealing epochs");
    flags.add(app, "--nd-update-interval", "nd_update_interval", "epochs between outlier updates");
    flags.add(app, "--clip-norm", "clip_norm", "gradient clipping norm on outlier updates");
    flags.add(app, "--widths", "widths", "encoder widths, e.g. 32-16-8");
    flags.add(app, "--likelihood", "likelihood", "gaussian or bernoulli");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised anomaly detection with variational autoencoders"};
    app.require_subcommand(1);

    FlagValues flags;
    std::string config_path;
    auto* train = app.add_subcommand("train", "train an ensemble on one split");
    auto* score = app.add_subcommand("score", "score a CSV with a saved ensemble");
    auto* bench = app.add_subcommand("benchmark", "split/train/evaluate over several seeds");
    for (auto* sub : {train, score, bench}) add_common(sub, flags, config_path);
    add_training(train, flags);
    add_training(bench, flags);
    flags.add(score, "--model-dir", "model_dir", "directory written by `ssvae train`");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ssvae::kExitOk : ssvae::kExitUsage;
    }

    ssvae::Command command = ssvae::Command::train;
    if (score->parsed()) command = ssvae::Command::score;
    if (bench->parsed()) command = ssvae::Command::benchmark;

    ssvae::RunSpec spec;
    try {
        ssvae::Settings settings;
        if (!config_path.empty()) settings = ssvae::read_settings_file(config_path);
        std::optional<std::string> out;
        for (const auto& [k, v] : flags.values) {
            if (k == "out") out = v;
            else settings[k] = v;
        }
        // A --synth flag overrides a dataset coming from a config file and vice versa.
        if (flags.values.count("synth")) settings["dataset"] = "";
        if (flags.values.count("dataset") && command != ssvae::Command::score) settings["synth"] = "";
        spec = ssvae::spec_from_settings(settings, command);
        if (out) spec.out_root = *out;
        spec.validate();
    } catch (const std::exception& e) {
        std::cerr << "ssvae: " << e.what() << '\n';
        return ssvae::kExitUsage;
    }

    const auto outcome = ssvae::run(spec);
    if (outcome.exit_code == ssvae::kExitOk) {
        std::cout << outcome.message << '\n' << outcome.dir.string() << '\n';
    } else {
        std::cerr << "ssvae: " << outcome.message << '\n';
        if (!outcome.dir.empty()) std::cerr << "partial results in " << outcome.dir.string() << '\n';
    }
    return outcome.exit_code;
}
