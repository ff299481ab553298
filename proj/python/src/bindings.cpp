#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gaf/checkpoint.hpp"
#include "gaf/cli.hpp"
#include "gaf/config.hpp"
#include "gaf/metrics.hpp"
#include "gaf/transport.hpp"

namespace py = pybind11;
using namespace gaf;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class T, class A>
Array<T> to_array(const A& a) {
    if (a.ndim() < 1 || a.ndim() > 2) throw ShapeError("expected a 1-D or 2-D array");
    Shape shape;
    for (py::ssize_t k = 0; k < a.ndim(); ++k) shape.push_back(static_cast<std::size_t>(a.shape(k)));
    return Array<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <class T>
py::array_t<T> to_numpy(const Array<T>& a) {
    std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
    py::array_t<T> out(shape);
    std::copy(a.data(), a.data() + a.size(), out.mutable_data());
    return out;
}

/// Points as (n, d); a single point may be passed as (d,).
Array<float> points(const F32& a, std::size_t d) {
    auto arr = to_array<float>(a);
    if (arr.rank() == 1) arr = arr.reshaped(Shape{1, arr.size()});
    if (arr.cols() != d) throw ShapeError("expected points with " + std::to_string(d) + " coordinates");
    return arr;
}

SampleOptions options(std::size_t steps, const std::string& schedule, double t_eps) {
    return SampleOptions{steps, parse_schedule(schedule), t_eps};
}

}  // namespace

PYBIND11_MODULE(_gaf, m) {
    m.doc() = "Generative Anchored Fields core";

    // Translators are tried newest first, so the base class goes in first.
    py::register_exception<Error>(m, "GafError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);
    py::register_exception<ValueError>(m, "GafValueError", PyExc_ValueError);

    py::class_<GafConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("data_dim", &GafConfig::data_dim)
        .def_readwrite("trunk_width", &GafConfig::trunk_width)
        .def_readwrite("trunk_depth", &GafConfig::trunk_depth)
        .def_readwrite("time_embed", &GafConfig::time_embed)
        .def_readwrite("num_classes", &GafConfig::num_classes)
        .def_readwrite("head_hidden", &GafConfig::head_hidden)
        .def_readwrite("head_layers", &GafConfig::head_layers)
        .def_readwrite("class_conditioning", &GafConfig::class_conditioning)
        .def_readwrite("zero_init_heads", &GafConfig::zero_init_heads)
        .def_readwrite("seed", &GafConfig::seed)
        .def("to_json", [](const GafConfig& c) { return to_json(c).dump(); });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("iterations", &TrainConfig::iterations)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("lambda_res", &TrainConfig::lambda_res)
        .def_readwrite("lambda_swap", &TrainConfig::lambda_swap)
        .def_readwrite("t_eps", &TrainConfig::t_eps)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("log_interval", &TrainConfig::log_interval);

    py::class_<LabeledDataset>(m, "Dataset")
        .def_property_readonly("points", [](const LabeledDataset& d) { return to_numpy(d.points); })
        .def_property_readonly("labels", [](const LabeledDataset& d) { return d.labels; })
        .def_property_readonly("num_classes", &LabeledDataset::num_classes)
        .def_property_readonly("mean", [](const LabeledDataset& d) { return d.stats.mean; })
        .def_property_readonly("std", [](const LabeledDataset& d) { return d.stats.std; })
        .def("class_points", [](const LabeledDataset& d, std::size_t c) { return to_numpy(d.class_points(c)); })
        .def("save", [](const LabeledDataset& d, const std::filesystem::path& p) { save_dataset(p, d); });

    m.def(
        "make_dataset",
        [](const std::string& kind, std::size_t classes, std::size_t per_class, std::uint64_t seed, std::size_t dim) {
            return make_dataset(DatasetSpec{parse_dataset_kind(kind), classes, per_class, dim, seed});
        },
        py::arg("kind") = "gaussians", py::arg("classes") = 3, py::arg("per_class") = 2000, py::arg("seed") = 0,
        py::arg("dim") = 2);
    m.def("load_dataset", &load_dataset);

    py::class_<GafModel<float>>(m, "Model")
        .def(py::init<GafConfig>())
        .def_property_readonly("config", &GafModel<float>::config)
        .def_property_readonly("num_classes", &GafModel<float>::num_classes)
        .def_property_readonly("data_dim", &GafModel<float>::data_dim)
        .def_property_readonly("parameter_count", [](const GafModel<float>& m) { return m.parameters().element_count(); })
        .def("add_class_head", &GafModel<float>::add_class_head)
        .def(
            "velocity",
            [](const GafModel<float>& model, const F32& x, double t, std::vector<double> weights) {
                return to_numpy(velocity(model, points(x, model.data_dim()), t, VelocityQuery::blend(std::move(weights))));
            },
            py::arg("x"), py::arg("t"), py::arg("weights"))
        .def(
            "twins",
            [](const GafModel<float>& model, const F32& x, double t, std::size_t cls) {
                const auto pts = points(x, model.data_dim());
                const std::vector<float> times(pts.rows(), static_cast<float>(t));
                const std::vector<std::size_t> classes(pts.rows(), cls);
                const auto out = twin_forward_batch(model, pts, std::span<const float>(times),
                                                    std::span<const std::size_t>(classes));
                return py::dict(py::arg("j") = to_numpy(out.j), py::arg("k") = to_numpy(out.k),
                                py::arg("j_res") = to_numpy(out.j_res), py::arg("k_res") = to_numpy(out.k_res));
            },
            py::arg("x"), py::arg("t"), py::arg("cls"))
        .def(
            "generate",
            [](const GafModel<float>& model, std::size_t cls, const F32& z0, std::size_t steps,
               const std::string& schedule, double t_eps) {
                return to_numpy(generate(ModelSource<float>(model), cls, points(z0, model.data_dim()),
                                         options(steps, schedule, t_eps)));
            },
            py::arg("cls"), py::arg("z0"), py::arg("steps") = 100, py::arg("schedule") = "linear",
            py::arg("t_eps") = 1e-3)
        .def(
            "transport",
            [](const GafModel<float>& model, const F32& x, std::size_t i, std::size_t j, std::size_t steps,
               const std::string& schedule, double t_eps) {
                return to_numpy(cross_class_transport(ModelSource<float>(model), points(x, model.data_dim()), i, j,
                                                      options(steps, schedule, t_eps)));
            },
            py::arg("x"), py::arg("i"), py::arg("j"), py::arg("steps") = 100, py::arg("schedule") = "linear",
            py::arg("t_eps") = 1e-3)
        .def(
            "interpolate",
            [](const GafModel<float>& model, std::size_t i, std::size_t j, const std::vector<double>& alphas,
               const F32& z0, std::size_t steps) {
                std::vector<py::array_t<float>> out;
                for (const auto& f : interpolate_pair(ModelSource<float>(model), i, j, alphas,
                                                      points(z0, model.data_dim()), SampleOptions{steps}))
                    out.push_back(to_numpy(f));
                return out;
            },
            py::arg("i"), py::arg("j"), py::arg("alphas"), py::arg("z0"), py::arg("steps") = 100)
        .def(
            "cycle_closure",
            [](const GafModel<float>& model, const std::vector<std::size_t>& cycle, const F32& z0,
               std::size_t alpha_steps, std::size_t steps) {
                return cyclic_transport(ModelSource<float>(model), cycle, points(z0, model.data_dim()), alpha_steps,
                                        SampleOptions{steps})
                    .closure;
            },
            py::arg("cycle"), py::arg("z0"), py::arg("alpha_steps") = 5, py::arg("steps") = 100)
        .def(
            "barycentric_grid",
            [](const GafModel<float>& model, std::size_t i, std::size_t j, std::size_t k, std::size_t resolution,
               const F32& z0, std::size_t steps) {
                const auto g = barycentric_grid(ModelSource<float>(model), i, j, k, resolution,
                                                points(z0, model.data_dim()), SampleOptions{steps});
                py::list cells;
                for (const auto& c : g.cells) {
                    cells.append(py::dict(py::arg("row") = c.row, py::arg("col") = c.col,
                                          py::arg("weights") = std::vector<double>{c.weights.alpha, c.weights.beta, c.weights.gamma},
                                          py::arg("sample") = to_numpy(c.sample)));
                }
                return cells;
            },
            py::arg("i"), py::arg("j"), py::arg("k"), py::arg("resolution"), py::arg("z0"), py::arg("steps") = 100);

    m.def(
        "train",
        [](const GafConfig& model, const TrainConfig& train_cfg, const LabeledDataset& data) {
            py::gil_scoped_release release;
            auto result = train(model, train_cfg, data);
            std::vector<std::pair<std::uint64_t, double>> log;
            for (const auto& r : result.log) log.emplace_back(r.iteration, r.loss.total);
            return std::make_pair(result.checkpoint.model(), log);
        },
        py::arg("model"), py::arg("train"), py::arg("data"));
    m.def("load_model", [](const std::filesystem::path& p) { return load_checkpoint(p).model(); });

    m.def("energy_distance", [](const F64& a, const F64& b) { return energy_distance(to_array<double>(a), to_array<double>(b)); });
    m.def(
        "sliced_wasserstein",
        [](const F64& a, const F64& b, std::size_t projections, std::uint64_t seed) {
            return sliced_wasserstein(to_array<double>(a), to_array<double>(b), projections, seed);
        },
        py::arg("a"), py::arg("b"), py::arg("projections") = 64, py::arg("seed") = 0);
    m.def("latents", [](std::size_t n, std::size_t dim, std::uint64_t seed, std::uint64_t tag) { return to_numpy(sample_latents(n, dim, seed, tag)); }, py::arg("n"), py::arg("dim"), py::arg("seed"), py::arg("tag") = 0);
    m.def("square_to_simplex", [](double u, double v) {
        const auto w = square_to_simplex(u, v);
        return std::make_tuple(w.alpha, w.beta, w.gamma);
    });
    m.def(
        "run",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_command(args, out, err);
            }
            return std::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
    m.attr("__version__") = code_version();
}
