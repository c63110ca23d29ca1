#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssvae/datakit.hpp"
#include "ssvae/models.hpp"
#include "ssvae/trainer.hpp"

namespace ssvae {

enum class Command { train, score, benchmark };

std::string to_string(Command c);

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

struct SynthSpec {
    std::size_t d = 8;
    std::size_t n_normal = 2000;
    double shift = 3.0;
    std::size_t n_anomaly = 200;
};

struct RunSpec {
    Command command = Command::train;
    std::string dataset;  // CSV path; empty when synth is set
    std::optional<SynthSpec> synth;
    std::string label_column;  // header name or zero-based index; empty = last column
    std::string positive_token = "1";
    Method method = Method::dp;
    double gamma_l = 0.01;
    double gamma_p = 0.0;
    double train_fraction = 0.6;
    std::vector<std::uint64_t> seeds{0};
    TrainConfig config;
    std::filesystem::path out_root;
    std::filesystem::path model_dir;  // score only

    void validate() const;
};

// Flat key/value settings. Keys use underscores, e.g. "beta_kl".
using Settings = std::map<std::string, std::string>;

// `key = value` lines with '#' comments, or a run manifest (.json) whose
// "config" object is read back.
Settings read_settings_file(const std::filesystem::path& path);
Settings parse_settings(const std::string& text);

// Applies settings on top of the defaults. Unknown keys throw.
RunSpec spec_from_settings(const Settings& settings, Command command);
// Canonical settings for a spec; feeding them back yields the same spec.
Settings settings_of(const RunSpec& spec);
// 16 hex digits of FNV-1a over the canonical settings.
std::string config_digest(const Settings& settings);

std::filesystem::path default_out_root();

// Train/test data for one seed after split, standardization, labeled-outlier
// subsampling and pollution.
struct PreparedSplit {
    TrainingData train;
    Matrix test_features;
    std::vector<Label> test_labels;
    Standardizer stats;
    double achieved_gamma_l = 0.0;
    double achieved_gamma_p = 0.0;
};

SsadDataset load_dataset(const RunSpec& spec, std::uint64_t seed);
PreparedSplit prepare_split(const SsadDataset& ds, const RunSpec& spec, std::uint64_t seed);

struct RunOutcome {
    int exit_code = kExitOk;
    std::filesystem::path dir;
    std::string message;
};

RunOutcome run_train(const RunSpec& spec);
RunOutcome run_score(const RunSpec& spec);
RunOutcome run_benchmark(const RunSpec& spec);
RunOutcome run(const RunSpec& spec);

struct BenchmarkSummary {
    double mean = 0.0;
    double stdev = 0.0;  // sample standard deviation, 0 for one seed
    bool single_seed = false;
};

BenchmarkSummary summarize(const std::vector<double>& aurocs);
// "99.1±0.4" style percentage string.
std::string table_cell(const BenchmarkSummary& s);

// Saved ensembles: <dir>/member_<i>.params (+ .json sidecar) and manifest.json.
void save_ensemble(const Ensemble& ensemble, const Standardizer& stats, const Settings& settings,
                   const std::filesystem::path& dir);
struct LoadedEnsemble {
    Ensemble ensemble;
    Standardizer stats;
    Settings settings;
};
LoadedEnsemble load_ensemble(const std::filesystem::path& dir);

}  // namespace ssvae
