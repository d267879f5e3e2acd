#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <stdexcept>

#include "cavlab/artifacts.hpp"
#include "cavlab/cav.hpp"
#include "cavlab/checkpoint.hpp"
#include "cavlab/elements.hpp"
#include "cavlab/entanglement.hpp"
#include "cavlab/model.hpp"
#include "cavlab/spatial.hpp"
#include "cavlab/stats.hpp"
#include "cavlab/tcav.hpp"

namespace py = pybind11;
using namespace cavlab;

namespace {

DatasetConfig make_config(const std::string& preset, int side, uint64_t seed) {
    DatasetConfig cfg;
    if (preset == "simple")
        cfg = DatasetConfig::simple();
    else if (preset == "standard")
        cfg = DatasetConfig::standard();
    else
        throw std::invalid_argument("preset must be simple or standard");
    cfg.scale_to_side(side);
    cfg.seed = seed;
    return cfg;
}

py::array_t<float> tensor_to_numpy(const TensorF& t) {
    py::array_t<float> out({t.h, t.w, t.d});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

MatF numpy_to_mat(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2d array");
    MatF m(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), m.data());
    return m;
}

struct PyModel {
    Network net;

    explicit PyModel(const std::string& path) : net(load_network(path)) {}

    std::vector<std::string> layers() const {
        std::vector<std::string> out;
        for (int l = 0; l < net.cfg.blocks(); ++l) out.push_back(layer_name(l));
        return out;
    }

    py::array_t<float> logits_of(
        const py::array_t<float, py::array::c_style | py::array::forcecast>& img) const {
        TensorF t = numpy_to_tensor(img);
        VecF z = logits(net, t);
        py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(z.size())});
        std::copy(z.data(), z.data() + z.size(), out.mutable_data());
        return out;
    }

    py::array_t<float> capture(
        const py::array_t<float, py::array::c_style | py::array::forcecast>& img, int layer) const {
        TensorF act = forward_capture(net, numpy_to_tensor(img), layer);
        py::array_t<float> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(act.size())});
        std::copy(act.data.begin(), act.data.end(), out.mutable_data());
        return out;
    }

private:
    static TensorF numpy_to_tensor(
        const py::array_t<float, py::array::c_style | py::array::forcecast>& img) {
        if (img.ndim() != 3 || img.shape(2) != 3)
            throw std::invalid_argument("expected an (h, w, 3) array");
        TensorF t(static_cast<int>(img.shape(0)), static_cast<int>(img.shape(1)), 3);
        std::copy(img.data(), img.data() + img.size(), t.data.begin());
        return t;
    }
};

} // namespace

PYBIND11_MODULE(_cavlab, m) {
    m.doc() = "concept vector laboratory core";

    m.def("version", &tool_version);

    m.def(
        "dataset_image",
        [](const std::string& preset, int side, uint64_t seed, long index) {
            DatasetConfig cfg = make_config(preset, side, seed);
            return tensor_to_numpy(render_scene(dataset_scene(cfg, index), cfg.image_side));
        },
        py::arg("preset"), py::arg("side"), py::arg("seed"), py::arg("index"),
        "render dataset image #index as an (h, w, 3) float array");

    m.def(
        "class_names",
        [](const std::string& preset, int side) {
            return ClassTable::build(make_config(preset, side, 0)).names();
        },
        py::arg("preset"), py::arg("side"));

    m.def(
        "image_classes",
        [](const std::string& preset, int side, uint64_t seed, long index) {
            DatasetConfig cfg = make_config(preset, side, seed);
            ClassTable table = ClassTable::build(cfg);
            return assign_classes(dataset_scene(cfg, index), table, cfg.image_side);
        },
        py::arg("preset"), py::arg("side"), py::arg("seed"), py::arg("index"),
        "multi-hot labels of dataset image #index");

    m.def(
        "train_cav",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pos,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& neg, int iters,
           double l2) {
            ProbeHyper hyper;
            hyper.iters = iters;
            hyper.l2 = l2;
            Cav cav = train_cav_from_activations(numpy_to_mat(pos), numpy_to_mat(neg), hyper);
            py::array_t<float> v(std::vector<py::ssize_t>{static_cast<py::ssize_t>(cav.v.size())});
            std::copy(cav.v.begin(), cav.v.end(), v.mutable_data());
            return py::make_tuple(v, cav.b, cav.test_accuracy);
        },
        py::arg("pos"), py::arg("neg"), py::arg("iters") = 500, py::arg("l2") = 1e-4,
        "unit normal, intercept and held-out accuracy of the separating probe");

    m.def(
        "tcav_score",
        [](const std::vector<double>& dots) { return tcav_score_from_dots(dots); },
        py::arg("dots"), "fraction of strictly positive directional derivatives");

    m.def("pair_fraction", &pair_fraction, py::arg("a"), py::arg("b"),
          "P(a > b) over all pairs, ties counted half");

    m.def(
        "welch_p",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return welch_t_test(a, b).p;
        },
        py::arg("a"), py::arg("b"), "two sided p of the unequal-variance t test");

    m.def(
        "direction_grid",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& v, int side,
           int channels) {
            if (v.ndim() != 1) throw std::invalid_argument("expected a flat direction");
            std::vector<float> vec(v.data(), v.data() + v.size());
            MatD g = direction_grid(vec, side, channels, GridReduction::Norm);
            py::array_t<double> out({static_cast<py::ssize_t>(g.rows()),
                                     static_cast<py::ssize_t>(g.cols())});
            for (Eigen::Index i = 0; i < g.rows(); ++i)
                for (Eigen::Index k = 0; k < g.cols(); ++k)
                    out.mutable_at(i, k) = g(i, k);
            return out;
        },
        py::arg("v"), py::arg("side"), py::arg("channels"),
        "per-cell norm grid of a flattened direction");

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("path"))
        .def_property_readonly("layers", &PyModel::layers)
        .def("logits", &PyModel::logits_of, py::arg("image"))
        .def("capture", &PyModel::capture, py::arg("image"), py::arg("layer"),
             "flattened activations at a block output");
}
