#include "ssvae/datakit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/rng.hpp"

namespace ssvae {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\"");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\"");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool label_matches(const std::string& cell, const std::string& token) {
    if (cell == token) return true;
    double a, b;
    return parse_double(cell, a) && parse_double(token, b) && a == b;
}

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

void check_ratio(double r, const char* name) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1), got " +
                                    std::to_string(r));
    }
}

SsadDataset drop_role(const SsadDataset& ds, Role role) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (!(ds.roles[i] == role && ds.labels[i] == Label::anomaly)) keep.push_back(i);
    }
    return ds.subset(keep);
}

}  // namespace

std::string to_string(Role r) {
    switch (r) {
        case Role::unassigned: return "unassigned";
        case Role::train_normal: return "train-normal";
        case Role::train_labeled_outlier: return "train-labeled-outlier";
        case Role::train_pollution: return "train-pollution";
        case Role::test: return "test";
    }
    return "unknown";
}

std::size_t SsadDataset::count(Label l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

std::size_t SsadDataset::count(Role r) const {
    return static_cast<std::size_t>(std::count(roles.begin(), roles.end(), r));
}

SsadDataset SsadDataset::subset(std::span<const std::size_t> idx) const {
    SsadDataset out;
    out.features = features.select_rows(idx);
    for (auto i : idx) {
        out.labels.push_back(labels[i]);
        out.roles.push_back(roles[i]);
    }
    out.source = source;
    out.seed = seed;
    out.achieved_gamma_l = achieved_gamma_l;
    out.achieved_gamma_p = achieved_gamma_p;
    return out;
}

SsadDataset parse_csv(const std::string& text, const LabelColumn& label_column,
                      const std::string& positive_token, const std::string& source) {
    std::istringstream in(text);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        rows.push_back(split_line(line));
        line_numbers.push_back(line_no);
    }
    if (rows.empty()) throw DataError(source + ": empty file");

    const std::size_t ncol = rows.front().size();
    if (ncol < 2) throw DataError(source + ": need at least one feature column and a label column");

    bool header = std::holds_alternative<std::string>(label_column);
    std::size_t label_idx = ncol - 1;
    if (const auto* idx = std::get_if<std::size_t>(&label_column)) {
        if (*idx >= ncol) {
            throw DataError(source + ": label column " + std::to_string(*idx) + " missing (" +
                            std::to_string(ncol) + " columns)");
        }
        label_idx = *idx;
    }
    if (!header) {
        double tmp;
        for (std::size_t c = 0; c < ncol; ++c) {
            if (c != label_idx && !parse_double(rows.front()[c], tmp)) header = true;
        }
    }
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        const auto& h = rows.front();
        const auto it = std::find(h.begin(), h.end(), *name);
        if (it == h.end()) throw DataError(source + ": label column '" + *name + "' missing");
        label_idx = static_cast<std::size_t>(it - h.begin());
    }

    SsadDataset ds;
    ds.source = source;
    ds.features.cols = ncol - 1;
    std::vector<double> buf(ncol - 1);
    for (std::size_t r = header ? 1 : 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != ncol) {
            throw DataError(source + ": line " + std::to_string(line_numbers[r]) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(ncol));
        }
        std::size_t k = 0;
        for (std::size_t c = 0; c < ncol; ++c) {
            if (c == label_idx) continue;
            if (!parse_double(cells[c], buf[k]) || !std::isfinite(buf[k])) {
                throw DataError(source + ": line " + std::to_string(line_numbers[r]) + ", column " +
                                std::to_string(c + 1) + ": non-numeric value '" + cells[c] + "'");
            }
            ++k;
        }
        ds.features.append_row(buf);
        ds.labels.push_back(label_matches(cells[label_idx], positive_token) ? Label::anomaly
                                                                            : Label::normal);
        ds.roles.push_back(Role::unassigned);
    }
    if (ds.rows() == 0) throw DataError(source + ": no data rows");
    return ds;
}

SsadDataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column,
                     const std::string& positive_token) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), label_column, positive_token, path.filename().string());
}

std::pair<SsadDataset, SsadDataset> split_stratified(const SsadDataset& ds, double train_fraction,
                                                     std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train fraction must lie in (0, 1)");
    }
    auto rng = make_rng(seed, Stream::split);
    std::vector<std::size_t> train_idx, test_idx;
    for (Label cls : {Label::normal, Label::anomaly}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            if (ds.labels[i] == cls) rows.push_back(i);
        }
        if (rows.empty()) {
            throw DataError(std::string("split_stratified: no ") +
                            (cls == Label::normal ? "normal" : "anomaly") + " rows");
        }
        const auto perm = permutation(rows.size(), rng);
        const std::size_t n_train = round_count(train_fraction * static_cast<double>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            (k < n_train ? train_idx : test_idx).push_back(rows[perm[k]]);
        }
    }
    auto train = ds.subset(train_idx);
    auto test = ds.subset(test_idx);
    for (std::size_t i = 0; i < train.rows(); ++i) {
        train.roles[i] = train.labels[i] == Label::normal ? Role::train_normal : Role::unassigned;
    }
    std::fill(test.roles.begin(), test.roles.end(), Role::test);
    train.seed = test.seed = seed;
    return {std::move(train), std::move(test)};
}

void Standardizer::apply(Matrix& m) const {
    if (m.cols != mean.size()) {
        throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                         " columns, data has " + std::to_string(m.cols));
    }
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = (m(i, j) - mean[j]) / scale[j];
    }
}

Standardizer fit_standardizer(const Matrix& train) {
    if (train.rows == 0) throw DataError("cannot standardize an empty training set");
    Standardizer s;
    s.mean.assign(train.cols, 0.0);
    s.scale.assign(train.cols, 0.0);
    const double n = static_cast<double>(train.rows);
    for (std::size_t i = 0; i < train.rows; ++i) {
        for (std::size_t j = 0; j < train.cols; ++j) s.mean[j] += train(i, j);
    }
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < train.rows; ++i) {
        for (std::size_t j = 0; j < train.cols; ++j) {
            const double d = train(i, j) - s.mean[j];
            s.scale[j] += d * d;
        }
    }
    for (auto& v : s.scale) {
        v = std::sqrt(v / n);
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

Standardized standardize(const SsadDataset& train, const SsadDataset& test) {
    Standardized out{train, test, fit_standardizer(train.features)};
    out.stats.apply(out.train.features);
    if (out.test.rows() > 0) out.stats.apply(out.test.features);
    return out;
}

SsadDataset subsample_labeled_outliers(const SsadDataset& train, double gamma_l,
                                       std::uint64_t seed, bool drop_unused) {
    check_ratio(gamma_l, "gamma_l");
    SsadDataset out = train;
    const std::size_t n_normal = train.count(Role::train_normal);
    const std::size_t wanted =
        round_count(gamma_l * static_cast<double>(n_normal) / (1.0 - gamma_l));
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        if (train.roles[i] == Role::unassigned && train.labels[i] == Label::anomaly) {
            candidates.push_back(i);
        }
    }
    auto rng = make_rng(seed, Stream::subsample);
    const auto perm = permutation(candidates.size(), rng);
    const std::size_t take = std::min(wanted, candidates.size());
    for (std::size_t k = 0; k < take; ++k) out.roles[candidates[perm[k]]] = Role::train_labeled_outlier;
    const std::size_t total = n_normal + take;
    out.achieved_gamma_l = total ? static_cast<double>(take) / static_cast<double>(total) : 0.0;
    return drop_unused ? drop_role(out, Role::unassigned) : out;
}

SsadDataset pollute(const SsadDataset& train, double gamma_p, std::uint64_t seed) {
    check_ratio(gamma_p, "gamma_p");
    if (gamma_p == 0.0) return train;
    SsadDataset out = train;
    const std::size_t n_unlabeled = train.count(Role::train_normal);
    const std::size_t wanted =
        round_count(gamma_p * static_cast<double>(n_unlabeled) / (1.0 - gamma_p));
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        if (train.roles[i] == Role::unassigned && train.labels[i] == Label::anomaly) {
            candidates.push_back(i);
        }
    }
    auto rng = make_rng(seed, Stream::pollute);
    const auto perm = permutation(candidates.size(), rng);
    const std::size_t take = std::min(wanted, candidates.size());
    for (std::size_t k = 0; k < take; ++k) out.roles[candidates[perm[k]]] = Role::train_pollution;
    const std::size_t total = n_unlabeled + take;
    out.achieved_gamma_p = total ? static_cast<double>(take) / static_cast<double>(total) : 0.0;
    return out;
}

TrainingData training_view(const SsadDataset& train) {
    TrainingData data;
    data.normal.cols = data.outlier.cols = train.dim();
    for (std::size_t i = 0; i < train.rows(); ++i) {
        const auto r = train.features.row(i);
        switch (train.roles[i]) {
            case Role::train_normal:
            case Role::train_pollution: data.normal.append_row(r); break;
            case Role::train_labeled_outlier: data.outlier.append_row(r); break;
            default: break;
        }
    }
    return data;
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Average ranks (1-based) over tie groups.
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    std::size_t n_normal = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == Label::normal) {
            rank_sum += rank[i];
            ++n_normal;
        }
    }
    const std::size_t n_anomaly = n - n_normal;
    if (n_normal == 0 || n_anomaly == 0) throw DataError("auroc needs both normal and anomaly rows");
    const double nn = static_cast<double>(n_normal);
    const double u = rank_sum - nn * (nn + 1.0) / 2.0;
    return u / (nn * static_cast<double>(n_anomaly));
}

SsadDataset synth_gaussian_ad(std::size_t d, std::size_t n_normal, std::size_t n_anomaly,
                              double shift, std::uint64_t seed) {
    if (d == 0) throw std::invalid_argument("synth_gaussian_ad: d must be positive");
    auto rng = make_rng(seed, Stream::synth);
    SsadDataset ds;
    ds.source = "synth";
    ds.seed = seed;
    ds.features = Matrix(n_normal + n_anomaly, d);
    for (std::size_t i = 0; i < n_normal + n_anomaly; ++i) {
        const bool anomaly = i >= n_normal;
        for (std::size_t j = 0; j < d; ++j) {
            ds.features(i, j) = rng.normal() + (anomaly ? shift : 0.0);
        }
        ds.labels.push_back(anomaly ? Label::anomaly : Label::normal);
        ds.roles.push_back(Role::unassigned);
    }
    return ds;
}

std::string EvalReport::to_json() const {
    std::size_t n_anomaly = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::anomaly));
    nlohmann::ordered_json j;
    j["auroc"] = auroc;
    j["seed"] = seed;
    j["config_digest"] = config_digest;
    j["n_normal"] = labels.size() - n_anomaly;
    j["n_anomaly"] = n_anomaly;
    return j.dump(2);
}

std::string EvalReport::scores_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "row_id,score,label\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        os << i << ',' << scores[i] << ',' << (labels[i] == Label::anomaly ? 1 : 0) << '\n';
    }
    return os.str();
}

EvalReport make_eval_report(std::vector<double> scores, std::vector<Label> labels,
                            std::uint64_t seed, std::string config_digest) {
    EvalReport r;
    r.auroc = ssvae::auroc(scores, labels);
    r.scores = std::move(scores);
    r.labels = std::move(labels);
    r.seed = seed;
    r.config_digest = std::move(config_digest);
    return r;
}

}  // namespace ssvae
