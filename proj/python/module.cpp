#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "seqal/bench.hpp"
#include "seqal/error.hpp"
#include "seqal/glm.hpp"
#include "seqal/learner.hpp"
#include "seqal/numerics.hpp"
#include "seqal/service.hpp"
#include "seqal/version.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json to_json(const py::handle& obj) {
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object report_to_py(const std::string& json_text) { return py::module_::import("json").attr("loads")(json_text); }

std::shared_ptr<const seqal::Matrix> to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("features must be a 2-d array");
    const auto n = static_cast<std::size_t>(a.shape(0)), p = static_cast<std::size_t>(a.shape(1));
    seqal::Matrix m(n, p);
    auto r = a.unchecked<2>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) m(i, j) = r(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j));
    return std::make_shared<const seqal::Matrix>(std::move(m));
}

seqal::LearnerConfig config_from(const py::kwargs& kw, std::size_t p) {
    return seqal::service::parse_learner_config(to_json(kw), p);
}

py::object opt(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); }

/// The interactive learner: ask pending(), answer with submit().
class PyLearner {
public:
    PyLearner(const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
              std::optional<std::vector<std::size_t>> bootstrap, const py::kwargs& kw) {
        auto x = to_matrix(features);
        const auto cfg = config_from(kw, x->cols());
        learner_ = bootstrap ? std::make_unique<seqal::ActiveLearner>(x, cfg, *bootstrap)
                             : std::make_unique<seqal::ActiveLearner>(x, cfg);
    }

    py::object pending() const {
        const auto q = learner_->pending();
        if (!q) return py::none();
        py::dict d;
        d["subject_id"] = q->subject;
        d["bootstrap"] = q->bootstrap;
        d["u_score"] = opt(q->u_score);
        d["d_rank"] = q->d_rank ? py::object(py::int_(*q->d_rank)) : py::object(py::none());
        return std::move(d);
    }

    void submit(std::size_t subject, int label) { learner_->submit(subject, label); }

    py::dict state() const {
        py::dict d;
        d["phase"] = seqal::to_string(learner_->phase());
        d["finished"] = learner_->finished();
        d["n_labeled"] = learner_->n_labeled();
        d["n0"] = learner_->n0();
        d["labeled"] = learner_->labeled();
        if (const auto& ev = learner_->latest()) {
            d["beta_hat"] = ev->beta_hat;
            d["beta_tilde"] = ev->beta_tilde;
            d["indicators"] = ev->indicators;
            d["p0_hat"] = ev->p0_hat ? py::object(py::int_(*ev->p0_hat)) : py::object(py::none());
            d["nu_n"] = opt(ev->nu_n);
            d["threshold"] = opt(ev->threshold);
            d["kappa"] = opt(ev->kappa);
        }
        return d;
    }

    py::object report() const { return report_to_py(seqal::emit_report(seqal::summarize(*learner_), seqal::ReportFormat::Json)); }

private:
    std::unique_ptr<seqal::ActiveLearner> learner_;
};

}  // namespace

PYBIND11_MODULE(seqal, m) {
    m.doc() = "Active learning for logistic models with sequential variable selection";
    m.attr("__version__") = seqal::kVersion;

    static py::exception<seqal::Error> seqal_error(m, "SeqalError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const seqal::service::ApiError& e) {
            std::string msg = e.what();
            if (e.field()) msg = *e.field() + ": " + msg;
            PyErr_SetString(PyExc_ValueError, msg.c_str());
        } catch (const seqal::Error& e) {
            py::set_error(seqal_error, (std::string(seqal::to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("chi2_quantile", &seqal::chi2_quantile, py::arg("df"), py::arg("prob"));

    m.def(
        "auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) { return seqal::auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));

    m.def(
        "fit_mle",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, const std::vector<int>& y) {
            const auto fit = seqal::fit_mle(*to_matrix(x), y);
            py::dict d;
            d["beta"] = fit.beta_tilde;
            d["converged"] = fit.converged;
            d["separation"] = fit.separation_flag;
            d["iterations"] = fit.iterations;
            d["loglik"] = fit.loglik;
            return d;
        },
        py::arg("x"), py::arg("y"), "Logistic maximum likelihood by Newton iterations.");

    m.def(
        "simulate",
        [](std::size_t runs, std::uint64_t seed, std::size_t pool_size, std::vector<double> beta, bool intercept,
           unsigned jobs, const py::kwargs& kw) {
            seqal::SyntheticSpec spec;
            spec.n_pool = pool_size;
            spec.beta_true = std::move(beta);
            spec.intercept = intercept;
            spec.covariate_dim = spec.beta_true.size() - (intercept ? 1 : 0);
            spec.seed = seed;
            const auto cfg = config_from(kw, spec.beta_true.size());
            seqal::ReplicationSummary s;
            {
                py::gil_scoped_release release;
                s = seqal::replicate(spec, cfg, seqal::ReplicateOptions{runs, jobs, false});
            }
            return report_to_py(seqal::emit_report(s, seqal::ReportFormat::Json));
        },
        py::arg("runs") = 1, py::arg("seed") = 0, py::arg("pool_size") = 30000,
        py::arg("beta") = std::vector<double>{-1.0, 1.0, 0.0, 0.0}, py::arg("intercept") = false, py::arg("jobs") = 1,
        "Replicated synthetic runs; learner settings as keyword arguments (d, estimator, rho, ...).");

    m.def(
        "run",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, const std::vector<int>& y,
           const py::kwargs& kw) {
            auto features = to_matrix(x);
            const auto cfg = config_from(kw, features->cols());
            seqal::Pool pool{features, y};
            seqal::RunReport r;
            {
                py::gil_scoped_release release;
                seqal::ReplayOracle oracle(y);
                r = seqal::run(pool, cfg, oracle);
            }
            return report_to_py(seqal::emit_report(r, seqal::ReportFormat::Json));
        },
        py::arg("x"), py::arg("y"), "One run replaying the given labels.");

    py::class_<PyLearner>(m, "Learner")
        .def(py::init<const py::array_t<double, py::array::c_style | py::array::forcecast>&,
                      std::optional<std::vector<std::size_t>>, const py::kwargs&>(),
             py::arg("features"), py::arg("bootstrap") = py::none())
        .def("pending", &PyLearner::pending)
        .def("submit", &PyLearner::submit, py::arg("subject_id"), py::arg("label"))
        .def("state", &PyLearner::state)
        .def("report", &PyLearner::report);
}
