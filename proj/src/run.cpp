#include "ssvae/run.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/param_io.hpp"

namespace ssvae {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw std::invalid_argument("setting '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw std::invalid_argument("setting '" + key + "': expected a non-negative integer, got '" +
                                    v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("setting '" + key + "': expected true/false, got '" + v + "'");
}

std::string join_u64(const std::vector<std::uint64_t>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

std::string widths_str(const std::vector<std::size_t>& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) out += '-';
        out += std::to_string(w[i]);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

fs::path run_dir(const RunSpec& spec, const Settings& settings) {
    const fs::path root = spec.out_root.empty() ? default_out_root() : spec.out_root;
    return root / (to_string(spec.command) + "-" + config_digest(settings));
}

LabelColumn label_column_of(const RunSpec& spec) {
    if (spec.label_column.empty()) return {};
    std::size_t idx = 0;
    const auto& s = spec.label_column;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
    if (ec == std::errc() && ptr == s.data() + s.size()) return idx;
    return s;
}

template <typename F>
RunOutcome guarded(F&& body) {
    try {
        return body();
    } catch (const NumericalAbort& e) {
        return {kExitNumerical, {}, std::string("numerical abort: ") + e.what()};
    } catch (const DataError& e) {
        return {kExitData, {}, std::string("data error: ") + e.what()};
    } catch (const ShapeError& e) {
        return {kExitData, {}, std::string("data error: ") + e.what()};
    } catch (const std::invalid_argument& e) {
        return {kExitUsage, {}, std::string("usage error: ") + e.what()};
    } catch (const std::exception& e) {
        return {kExitData, {}, std::string("error: ") + e.what()};
    }
}

ordered_json manifest_json(const Settings& settings) {
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : settings) cfg[k] = v;
    ordered_json j;
    j["config"] = std::move(cfg);
    j["config_digest"] = config_digest(settings);
    return j;
}

}  // namespace

std::string to_string(Command c) {
    switch (c) {
        case Command::train: return "train";
        case Command::score: return "score";
        case Command::benchmark: return "benchmark";
    }
    return "unknown";
}

void RunSpec::validate() const {
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (command == Command::score) {
        if (model_dir.empty()) throw std::invalid_argument("score requires --model-dir");
        if (dataset.empty()) throw std::invalid_argument("score requires --dataset");
    } else {
        if (dataset.empty() == !synth.has_value()) {
            throw std::invalid_argument("exactly one of --dataset and --synth is required");
        }
        config.validate();
    }
    if (!(gamma_l >= 0.0 && gamma_l < 1.0)) throw std::invalid_argument("gamma_l must lie in [0, 1)");
    if (!(gamma_p >= 0.0 && gamma_p < 1.0)) throw std::invalid_argument("gamma_p must lie in [0, 1)");
}

Settings parse_settings(const std::string& text) {
    Settings s;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(no) + ": expected key = value");
        }
        auto key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '-', '_');
        s[key] = trim(line.substr(eq + 1));
    }
    return s;
}

Settings read_settings_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (path.extension() == ".json") {
        const auto j = nlohmann::json::parse(ss.str());
        Settings s;
        for (const auto& [k, v] : j.at("config").items()) s[k] = v.get<std::string>();
        return s;
    }
    return parse_settings(ss.str());
}

Settings settings_of(const RunSpec& spec) {
    const auto& c = spec.config;
    Settings s;
    s["dataset"] = spec.dataset;
    if (spec.synth) {
        s["synth"] = std::to_string(spec.synth->d) + "," + std::to_string(spec.synth->n_normal) + "," +
                     fmt(spec.synth->shift) + "," + std::to_string(spec.synth->n_anomaly);
    } else {
        s["synth"] = "";
    }
    s["label_column"] = spec.label_column;
    s["positive_token"] = spec.positive_token;
    s["method"] = to_string(spec.method);
    s["gamma_l"] = fmt(spec.gamma_l);
    s["gamma_p"] = fmt(spec.gamma_p);
    s["train_fraction"] = fmt(spec.train_fraction);
    s["seeds"] = join_u64(spec.seeds, ',');
    s["model_dir"] = spec.model_dir.string();
    s["epochs"] = std::to_string(c.epochs);
    s["batch_size"] = std::to_string(c.batch_size);
    s["lr"] = fmt(c.lr);
    s["beta_kl"] = fmt(c.beta_kl);
    s["beta_cubo"] = fmt(c.beta_cubo);
    s["gamma"] = fmt(c.gamma);
    s["alpha"] = fmt(c.alpha);
    s["anneal_epochs"] = std::to_string(c.anneal_epochs);
    s["warmup_epochs"] = std::to_string(c.warmup_epochs);
    s["nd_update_interval"] = std::to_string(c.nd_update_interval);
    s["lr_decay_factor"] = fmt(c.lr_decay_factor);
    s["lr_decay_every"] = std::to_string(c.lr_decay_every);
    s["clip_norm"] = fmt(c.clip_norm);
    s["ensemble"] = std::to_string(c.ensemble);
    s["samples_train"] = std::to_string(c.samples_train);
    s["samples_cubo"] = std::to_string(c.samples_cubo);
    s["samples_score"] = std::to_string(c.samples_score);
    s["widths"] = widths_str(c.mlp.widths);
    s["activation"] = to_string(c.mlp.activation);
    s["slope"] = fmt(c.mlp.slope);
    s["use_bias"] = c.mlp.use_bias ? "true" : "false";
    s["likelihood"] = to_string(c.likelihood);
    return s;
}

RunSpec spec_from_settings(const Settings& settings, Command command) {
    RunSpec spec;
    spec.command = command;
    auto& c = spec.config;
    const Settings known = settings_of(spec);
    for (const auto& [key, value] : settings) {
        if (!known.count(key) && key != "threads") {
            throw std::invalid_argument("unknown setting '" + key + "'");
        }
        if (key == "dataset") spec.dataset = value;
        else if (key == "synth") {
            if (value.empty()) {
                spec.synth.reset();
                continue;
            }
            const auto parts = split(value, ',');
            if (parts.size() < 3 || parts.size() > 4) {
                throw std::invalid_argument("synth expects d,n,shift[,n_anomaly]");
            }
            SynthSpec sy;
            sy.d = to_u64(key, parts[0]);
            sy.n_normal = to_u64(key, parts[1]);
            sy.shift = to_double(key, parts[2]);
            sy.n_anomaly = parts.size() == 4 ? to_u64(key, parts[3])
                                             : std::max<std::size_t>(1, sy.n_normal / 10);
            spec.synth = sy;
        }
        else if (key == "label_column") spec.label_column = value;
        else if (key == "positive_token") spec.positive_token = value;
        else if (key == "method") spec.method = parse_method(value);
        else if (key == "gamma_l") spec.gamma_l = to_double(key, value);
        else if (key == "gamma_p") spec.gamma_p = to_double(key, value);
        else if (key == "train_fraction") spec.train_fraction = to_double(key, value);
        else if (key == "seeds") {
            spec.seeds.clear();
            for (const auto& p : split(value, ',')) {
                if (!p.empty()) spec.seeds.push_back(to_u64(key, p));
            }
        }
        else if (key == "model_dir") spec.model_dir = value;
        else if (key == "epochs") c.epochs = to_u64(key, value);
        else if (key == "batch_size") c.batch_size = to_u64(key, value);
        else if (key == "lr") c.lr = to_double(key, value);
        else if (key == "beta_kl") c.beta_kl = to_double(key, value);
        else if (key == "beta_cubo") c.beta_cubo = to_double(key, value);
        else if (key == "gamma") c.gamma = to_double(key, value);
        else if (key == "alpha") c.alpha = to_double(key, value);
        else if (key == "anneal_epochs") c.anneal_epochs = to_u64(key, value);
        else if (key == "warmup_epochs") c.warmup_epochs = to_u64(key, value);
        else if (key == "nd_update_interval") c.nd_update_interval = to_u64(key, value);
        else if (key == "lr_decay_factor") c.lr_decay_factor = to_double(key, value);
        else if (key == "lr_decay_every") c.lr_decay_every = to_u64(key, value);
        else if (key == "clip_norm") c.clip_norm = to_double(key, value);
        else if (key == "ensemble") c.ensemble = to_u64(key, value);
        else if (key == "samples_train") c.samples_train = to_u64(key, value);
        else if (key == "samples_cubo") c.samples_cubo = to_u64(key, value);
        else if (key == "samples_score") c.samples_score = to_u64(key, value);
        else if (key == "widths") {
            c.mlp.widths.clear();
            for (const auto& p : split(value, '-')) c.mlp.widths.push_back(to_u64(key, p));
        }
        else if (key == "activation") c.mlp.activation = parse_activation(value);
        else if (key == "slope") c.mlp.slope = to_double(key, value);
        else if (key == "use_bias") c.mlp.use_bias = to_bool(key, value);
        else if (key == "likelihood") c.likelihood = parse_likelihood(value);
        else if (key == "threads") c.threads = to_u64(key, value);
    }
    if (!spec.seeds.empty()) c.seed = spec.seeds.front();
    return spec;
}

std::string config_digest(const Settings& settings) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    };
    for (const auto& [k, v] : settings) {
        feed(k);
        feed(v);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path default_out_root() {
    if (const char* env = std::getenv("SSVAE_OUT_ROOT"); env && *env) return env;
    return "runs";
}

SsadDataset load_dataset(const RunSpec& spec, std::uint64_t seed) {
    if (spec.synth) {
        const auto& s = *spec.synth;
        return synth_gaussian_ad(s.d, s.n_normal, s.n_anomaly, s.shift, seed);
    }
    return load_csv(spec.dataset, label_column_of(spec), spec.positive_token);
}

PreparedSplit prepare_split(const SsadDataset& ds, const RunSpec& spec, std::uint64_t seed) {
    auto [train, test] = split_stratified(ds, spec.train_fraction, seed);
    auto st = standardize(train, test);
    auto labeled = subsample_labeled_outliers(st.train, spec.gamma_l, seed, false);
    auto polluted = pollute(labeled, spec.gamma_p, seed);
    PreparedSplit out;
    out.train = training_view(polluted);
    out.test_features = std::move(st.test.features);
    out.test_labels = std::move(st.test.labels);
    out.stats = std::move(st.stats);
    out.achieved_gamma_l = labeled.achieved_gamma_l;
    out.achieved_gamma_p = polluted.achieved_gamma_p;
    return out;
}

BenchmarkSummary summarize(const std::vector<double>& aurocs) {
    BenchmarkSummary s;
    if (aurocs.empty()) return s;
    double sum = 0.0;
    for (double a : aurocs) sum += a;
    s.mean = sum / static_cast<double>(aurocs.size());
    s.single_seed = aurocs.size() == 1;
    if (!s.single_seed) {
        double sq = 0.0;
        for (double a : aurocs) sq += (a - s.mean) * (a - s.mean);
        s.stdev = std::sqrt(sq / static_cast<double>(aurocs.size() - 1));
    }
    return s;
}

std::string table_cell(const BenchmarkSummary& s) {
    char buf[64];
    const double sd = 100.0 * s.stdev;
    std::snprintf(buf, sizeof(buf), sd < 0.1 && sd > 0 ? "%.1f±%.2f" : "%.1f±%.1f",
                  100.0 * s.mean, sd);
    return buf;
}

void save_ensemble(const Ensemble& ensemble, const Standardizer& stats, const Settings& settings,
                   const std::filesystem::path& dir) {
    fs::create_directories(dir);
    ordered_json j = manifest_json(settings);
    const auto& first = ensemble.members.front();
    j["method"] = to_string(first.method);
    j["input_dim"] = first.params.spec.input_dim;
    j["standardizer"] = {{"mean", stats.mean}, {"scale", stats.scale}};
    ordered_json members = ordered_json::array();
    for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
        const std::string file = "member_" + std::to_string(i) + ".params";
        save_params(ensemble.members[i].params, dir / file);
        members.push_back({{"file", file}, {"seed", ensemble.seeds[i]}});
    }
    j["members"] = std::move(members);
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

LoadedEnsemble load_ensemble(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no manifest.json in " + dir.string());
    const auto j = nlohmann::json::parse(in);
    LoadedEnsemble out;
    for (const auto& [k, v] : j.at("config").items()) out.settings[k] = v.get<std::string>();
    const RunSpec spec = spec_from_settings(out.settings, Command::train);
    out.stats.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    out.stats.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    for (const auto& m : j.at("members")) {
        SsadModel model;
        model.params = load_params(dir / m.at("file").get<std::string>());
        model.method = spec.method;
        model.prior = PriorSpec{model.params.spec.mlp.latent_dim(), spec.config.alpha};
        model.gamma = spec.config.gamma;
        model.beta_kl = spec.config.beta_kl;
        model.beta_cubo = spec.config.beta_cubo;
        out.ensemble.members.push_back(std::move(model));
        out.ensemble.seeds.push_back(m.at("seed").get<std::uint64_t>());
    }
    out.ensemble.validate();
    return out;
}

RunOutcome run_train(const RunSpec& spec) {
    return guarded([&]() -> RunOutcome {
        spec.validate();
        const std::uint64_t seed = spec.seeds.front();
        const auto ds = load_dataset(spec, seed);
        const auto prepared = prepare_split(ds, spec, seed);
        TrainConfig cfg = spec.config;
        cfg.seed = seed;
        const auto trained = train(cfg, prepared.train, spec.method);
        const auto scores =
            ensemble_score(trained.ensemble, prepared.test_features, cfg.samples_score, seed);

        const Settings settings = settings_of(spec);
        const fs::path dir = run_dir(spec, settings);
        save_ensemble(trained.ensemble, prepared.stats, settings, dir);
        for (std::size_t i = 0; i < trained.histories.size(); ++i) {
            write_text(dir / ("history_" + std::to_string(i) + ".csv"), trained.histories[i].to_csv());
            write_text(dir / ("history_" + std::to_string(i) + ".json"),
                       trained.histories[i].to_json() + "\n");
        }
        const auto report = make_eval_report(scores, prepared.test_labels, seed, config_digest(settings));
        write_text(dir / "eval.json", report.to_json() + "\n");
        write_text(dir / "test_scores.csv", report.scores_csv());
        return {kExitOk, dir, "trained " + std::to_string(cfg.ensemble) + " members, test AUROC " + fmt(report.auroc)};
    });
}

RunOutcome run_score(const RunSpec& spec) {
    return guarded([&]() -> RunOutcome {
        spec.validate();
        const auto loaded = load_ensemble(spec.model_dir);
        auto ds = load_csv(spec.dataset, label_column_of(spec), spec.positive_token);
        loaded.stats.apply(ds.features);
        const auto scores = ensemble_score(loaded.ensemble, ds.features,
                                           spec.config.samples_score, spec.seeds.front());
        const Settings settings = settings_of(spec);
        const fs::path dir = run_dir(spec, settings);
        fs::create_directories(dir);
        EvalReport report;
        report.scores = scores;
        report.labels = ds.labels;
        write_text(dir / "scores.csv", report.scores_csv());
        write_text(dir / "manifest.json", manifest_json(settings).dump(2) + "\n");
        return {kExitOk, dir, "scored " + std::to_string(scores.size()) + " rows"};
    });
}

RunOutcome run_benchmark(const RunSpec& spec) {
    std::vector<double> aurocs;
    std::vector<std::uint64_t> done;
    Settings settings;
    fs::path dir;
    auto write_report = [&](const std::string& status, const std::string& error,
                            std::optional<std::uint64_t> failed_seed) {
        const auto summary = summarize(aurocs);
        ordered_json j;
        j["status"] = status;
        j["method"] = to_string(spec.method);
        j["dataset"] = spec.synth ? std::string("synth") : fs::path(spec.dataset).filename().string();
        j["gamma_l"] = spec.gamma_l;
        j["gamma_p"] = spec.gamma_p;
        j["seeds"] = done;
        j["auroc"] = aurocs;
        j["mean"] = summary.mean;
        j["stdev"] = summary.stdev;
        j["single_seed"] = summary.single_seed;
        j["table"] = aurocs.empty() ? std::string() : table_cell(summary);
        j["config_digest"] = config_digest(settings);
        if (failed_seed) {
            j["failed_seed"] = *failed_seed;
            j["error"] = error;
        }
        fs::create_directories(dir);
        write_text(dir / "report.json", j.dump(2) + "\n");
        write_text(dir / "manifest.json", manifest_json(settings).dump(2) + "\n");
    };

    auto outcome = guarded([&]() -> RunOutcome {
        spec.validate();
        settings = settings_of(spec);
        dir = run_dir(spec, settings);
        std::optional<SsadDataset> shared;
        if (!spec.synth) shared = load_dataset(spec, 0);
        for (const auto seed : spec.seeds) {
            try {
                const auto ds = shared ? *shared : load_dataset(spec, seed);
                const auto prepared = prepare_split(ds, spec, seed);
                TrainConfig cfg = spec.config;
                cfg.seed = seed;
                const auto trained = train(cfg, prepared.train, spec.method);
                const auto scores = ensemble_score(trained.ensemble, prepared.test_features,
                                                   cfg.samples_score, seed);
                aurocs.push_back(auroc(scores, prepared.test_labels));
                done.push_back(seed);
            } catch (const std::exception& e) {
                write_report("FAILED", e.what(), seed);
                throw;
            }
        }
        write_report("OK", "", std::nullopt);
        return {kExitOk, dir, "mean AUROC " + table_cell(summarize(aurocs))};
    });
    if (outcome.exit_code != kExitOk && !dir.empty()) outcome.dir = dir;
    return outcome;
}

RunOutcome run(const RunSpec& spec) {
    switch (spec.command) {
        case Command::train: return run_train(spec);
        case Command::score: return run_score(spec);
        case Command::benchmark: return run_benchmark(spec);
    }
    return {kExitUsage, {}, "unknown command"};
}

}  // namespace ssvae
