#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ssvae/bounds.hpp"
#include "ssvae/datakit.hpp"
#include "ssvae/errors.hpp"
#include "ssvae/models.hpp"
#include "ssvae/run.hpp"
#include "ssvae/trainer.hpp"

namespace py = pybind11;
using namespace ssvae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const auto r = a.unchecked<2>();
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
    }
    return m;
}

Array to_array(const Matrix& m) {
    Array out({m.rows, m.cols});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

Array to_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<Label> to_labels(const py::array_t<int>& y) {
    std::vector<Label> out;
    const auto r = y.unchecked<1>();
    for (py::ssize_t i = 0; i < y.shape(0); ++i) out.push_back(r(i) != 0 ? Label::anomaly : Label::normal);
    return out;
}

py::array_t<int> from_labels(const std::vector<Label>& labels) {
    py::array_t<int> out(static_cast<py::ssize_t>(labels.size()));
    auto* p = out.mutable_data();
    for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] == Label::anomaly ? 1 : 0;
    return out;
}

Settings to_settings(const py::dict& kwargs) {
    Settings s;
    for (const auto& [k, v] : kwargs) {
        const auto key = py::str(k).cast<std::string>();
        if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
            std::string joined;
            const char sep = key == "widths" ? '-' : ',';
            for (const auto& item : v) {
                if (!joined.empty()) joined += sep;
                joined += py::str(item).cast<std::string>();
            }
            s[key] = joined;
        } else if (py::isinstance<py::bool_>(v)) {
            s[key] = v.cast<bool>() ? "true" : "false";
        } else {
            s[key] = py::str(v).cast<std::string>();
        }
    }
    return s;
}

py::tuple dataset_tuple(const SsadDataset& ds) {
    return py::make_tuple(to_array(ds.features), from_labels(ds.labels));
}

// A trained or loaded ensemble plus the feature standardizer applied before scoring.
struct PyEnsemble {
    LoadedEnsemble inner;

    Array score(const Array& x, std::size_t samples, std::uint64_t seed) const {
        Matrix m = to_matrix(x);
        if (!inner.stats.mean.empty()) inner.stats.apply(m);
        return to_array(ensemble_score(inner.ensemble, m, samples, seed));
    }
    std::vector<Array> member_scores(const Array& x, std::size_t samples, std::uint64_t seed) const {
        Matrix m = to_matrix(x);
        if (!inner.stats.mean.empty()) inner.stats.apply(m);
        std::vector<Array> out;
        for (const auto& member : inner.ensemble.members) out.push_back(to_array(ssvae::score(member, m, samples, seed)));
        return out;
    }
    void save(const std::filesystem::path& dir) const {
        Standardizer stats = inner.stats;
        const std::size_t d = inner.ensemble.members.front().params.spec.input_dim;
        if (stats.mean.empty()) stats = {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
        save_ensemble(inner.ensemble, stats, inner.settings, dir);
    }
};

PyEnsemble fit(const Array& normal, const std::optional<Array>& outlier, const std::string& method,
               const py::kwargs& kwargs) {
    Settings s = to_settings(kwargs);
    s["method"] = method;
    if (auto it = s.find("seed"); it != s.end()) {
        s["seeds"] = it->second;
        s.erase(it);
    }
    const RunSpec spec = spec_from_settings(s, Command::train);
    spec.config.validate();
    TrainingData data;
    data.normal = to_matrix(normal);
    data.outlier = outlier ? to_matrix(*outlier) : Matrix(0, data.normal.cols);
    PyEnsemble out;
    py::gil_scoped_release release;
    auto trained = train(spec.config, data, spec.method);
    out.inner.ensemble = std::move(trained.ensemble);
    out.inner.settings = settings_of(spec);
    return out;
}

}  // namespace

PYBIND11_MODULE(_ssvae, m) {
    m.doc() = "Semi-supervised anomaly detection with variational autoencoders";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalAbort>(m, "NumericalAbort", PyExc_ArithmeticError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def("synth", [](std::size_t d, std::size_t n_normal, std::size_t n_anomaly, double shift,
                      std::uint64_t seed) {
        return dataset_tuple(synth_gaussian_ad(d, n_normal, n_anomaly, shift, seed));
    }, py::arg("d"), py::arg("n_normal"), py::arg("n_anomaly"), py::arg("shift"), py::arg("seed") = 0,
       "Gaussian normals N(0, I) and anomalies N(shift * 1, I). Returns (X, y), y = 1 for anomalies.");

    m.def("load_csv", [](const std::filesystem::path& path, const std::string& positive) {
        return dataset_tuple(load_csv(path, {}, positive));
    }, py::arg("path"), py::arg("positive_token") = "1", "Load a CSV whose last column is the label.");

    m.def("auroc", [](const Array& scores, const py::array_t<int>& labels) {
        const auto s = scores.cast<std::vector<double>>();
        const auto l = to_labels(labels);
        if (s.size() != l.size()) throw std::invalid_argument("scores and labels differ in length");
        return auroc(s, l);
    }, py::arg("scores"), py::arg("labels"),
       "AUROC with normals (label 0) as the positive class; higher scores mean more normal.");

    m.def("kl_divergence", [](const Array& mu, const Array& logvar, std::vector<double> prior_mean) {
        const Matrix a = to_matrix(mu), b = to_matrix(logvar);
        if (prior_mean.empty()) prior_mean.assign(a.cols, 0.0);
        const GaussianPosterior post{a.to_tensor(), b.to_tensor()};
        const auto kl = kl_to_gaussian_prior(post, prior_mean);
        return to_array(std::vector<double>(kl.data().begin(), kl.data().end()));
    }, py::arg("mu"), py::arg("logvar"), py::arg("prior_mean") = std::vector<double>{},
       "Per-row KL(N(mu, diag exp(logvar)) || N(prior_mean, I)).");

    py::class_<PyEnsemble>(m, "Ensemble")
        .def("score", &PyEnsemble::score, py::arg("x"), py::arg("samples") = 64, py::arg("seed") = 0,
             "Mean member ELBO per row; higher means more normal.")
        .def("member_scores", &PyEnsemble::member_scores, py::arg("x"), py::arg("samples") = 64,
             py::arg("seed") = 0)
        .def("save", &PyEnsemble::save, py::arg("dir"))
        .def_property_readonly("size", [](const PyEnsemble& e) { return e.inner.ensemble.members.size(); })
        .def_property_readonly("seeds", [](const PyEnsemble& e) { return e.inner.ensemble.seeds; })
        .def_property_readonly("settings", [](const PyEnsemble& e) { return e.inner.settings; });

    m.def("fit", &fit, py::arg("normal"), py::arg("outlier") = py::none(), py::arg("method") = "dp",
          "Train an ensemble. Keyword arguments are config keys (epochs, lr, widths, ensemble, ...).");

    m.def("load_ensemble", [](const std::filesystem::path& dir) { return PyEnsemble{load_ensemble(dir)}; },
          py::arg("dir"), "Load an ensemble written by `ssvae train` or Ensemble.save.");

    m.def("run", [](const std::string& command, const py::kwargs& kwargs) {
        Command c;
        if (command == "train") c = Command::train;
        else if (command == "score") c = Command::score;
        else if (command == "benchmark") c = Command::benchmark;
        else throw std::invalid_argument("unknown command '" + command + "'");
        Settings s = to_settings(kwargs);
        std::string out;
        if (auto it = s.find("out"); it != s.end()) {
            out = it->second;
            s.erase(it);
        }
        RunSpec spec = spec_from_settings(s, c);
        if (!out.empty()) spec.out_root = out;
        RunOutcome r;
        {
            py::gil_scoped_release release;
            r = ssvae::run(spec);
        }
        return py::make_tuple(r.exit_code, r.dir, r.message);
    }, py::arg("command"),
       "Run train, score or benchmark like the CLI. Returns (exit_code, run_dir, message).");
}
