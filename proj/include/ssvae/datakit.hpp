#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ssvae/matrix.hpp"
#include "ssvae/trainer.hpp"

namespace ssvae {

enum class Label : std::uint8_t { normal, anomaly };

enum class Role : std::uint8_t {
    unassigned,             // freshly loaded or held-back training anomaly
    train_normal,
    train_labeled_outlier,
    train_pollution,        // anomaly presented to the trainer as a normal row
    test,
};

std::string to_string(Role r);

struct SsadDataset {
    Matrix features;
    std::vector<Label> labels;
    std::vector<Role> roles;
    std::string source;
    std::uint64_t seed = 0;
    double achieved_gamma_l = 0.0;
    double achieved_gamma_p = 0.0;

    std::size_t rows() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    std::size_t count(Label l) const;
    std::size_t count(Role r) const;
    SsadDataset subset(std::span<const std::size_t> idx) const;
};

// Label column by header name or zero-based index. Default: last column.
using LabelColumn = std::variant<std::monostate, std::string, std::size_t>;

// Reads comma-separated numeric features plus one label column. A header
// row is detected when any cell in the first row is non-numeric. Rows whose
// label equals `positive_token` are anomalies. Throws DataError with the
// offending row/column.
SsadDataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column = {},
                     const std::string& positive_token = "1");
SsadDataset parse_csv(const std::string& text, const LabelColumn& label_column = {},
                      const std::string& positive_token = "1", const std::string& source = "csv");

// Per-class shuffle and split; training rows become train_normal (normal
// class) or unassigned (anomaly class), the rest become test.
std::pair<SsadDataset, SsadDataset> split_stratified(const SsadDataset& ds, double train_fraction,
                                                     std::uint64_t seed);

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  // population sd, 1 for constant columns

    void apply(Matrix& m) const;
};

Standardizer fit_standardizer(const Matrix& train);

struct Standardized {
    SsadDataset train;
    SsadDataset test;
    Standardizer stats;
};

Standardized standardize(const SsadDataset& train, const SsadDataset& test);

// Picks round(gamma_l * N_normal / (1 - gamma_l)) of the unassigned training
// anomalies as labeled outliers. With drop_unused the remaining unassigned
// anomalies are removed.
SsadDataset subsample_labeled_outliers(const SsadDataset& train, double gamma_l,
                                       std::uint64_t seed, bool drop_unused = true);

// Moves round(gamma_p * N_unlabeled / (1 - gamma_p)) unassigned anomalies into
// the unlabeled pool as pollution, then drops any still unassigned.
SsadDataset pollute(const SsadDataset& train, double gamma_p, std::uint64_t seed);

// Rows the trainer sees: normals plus pollution, and the labeled pool.
TrainingData training_view(const SsadDataset& train);

// Scores are oriented so higher means more normal. Mann-Whitney estimate of
// P(score_normal > score_anomaly) with half credit for ties.
double auroc(std::span<const double> scores, std::span<const Label> labels);

// Normals ~ N(0, I_d), anomalies ~ N(shift * 1, I_d).
SsadDataset synth_gaussian_ad(std::size_t d, std::size_t n_normal, std::size_t n_anomaly,
                              double shift, std::uint64_t seed);

struct EvalReport {
    double auroc = 0.0;
    std::vector<double> scores;
    std::vector<Label> labels;
    std::uint64_t seed = 0;
    std::string config_digest;

    std::string to_json() const;
    // row_id,score,label
    std::string scores_csv() const;
};

EvalReport make_eval_report(std::vector<double> scores, std::vector<Label> labels,
                            std::uint64_t seed, std::string config_digest);

}  // namespace ssvae
