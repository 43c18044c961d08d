#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hgseg/corrupt.hpp"
#include "hgseg/hungarian.hpp"
#include "hgseg/inference.hpp"
#include "hgseg/losses.hpp"
#include "hgseg/metrics.hpp"
#include "hgseg/model.hpp"
#include "hgseg/synth.hpp"

namespace py = pybind11;
using namespace hgseg;

namespace {

Tensor tensor_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  Shape shape(size_t(a.ndim()));
  for (size_t i = 0; i < shape.size(); ++i) shape[i] = size_t(a.shape(py::ssize_t(i)));
  std::vector<real> data(a.data(), a.data() + a.size());
  return Tensor::from_data(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  auto* dst = out.mutable_data();
  for (size_t i = 0; i < t.numel(); ++i) dst[i] = double(t.data()[i]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_hgseg, m) {
  m.doc() = "hierarchical grouping segmentation core";

  m.def("softmax", [](py::array_t<double> a, int axis) {
    NoGradGuard ng;
    return array_from_tensor(softmax(tensor_from_array(a), axis));
  });
  m.def("matmul", [](py::array_t<double> a, py::array_t<double> b) {
    NoGradGuard ng;
    return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
  });
  m.def("dice_loss", [](py::array_t<double> pred, std::vector<double> gt) {
    NoGradGuard ng;
    std::vector<real> g(gt.begin(), gt.end());
    return double(dice_loss(tensor_from_array(pred), g).item());
  });
  m.def("hungarian", [](std::vector<double> cost, size_t rows, size_t cols) {
    return hungarian_min_assignment(cost, rows, cols);
  });
  m.def("miou",
        [](std::vector<int64_t> pred, std::vector<int64_t> gt, int K) {
          return compute_miou(pred, gt, K).miou;
        });
  m.def("generate_scene", [](uint64_t seed, size_t h, size_t w, int K) {
    SceneSpec spec{seed, h, w, K};
    Scene sc = generate_scene(spec);
    std::vector<double> img(sc.image.begin(), sc.image.end());
    return py::make_tuple(img, sc.labels, sc.h, sc.w);
  });
  m.def("corrupt", [](std::vector<double> rgb, size_t h, size_t w,
                      const std::string& kind, int severity, uint64_t seed) {
    CorruptionSpec cs{corruption_from_name(kind), severity, seed};
    std::vector<real> in(rgb.begin(), rgb.end());
    auto out = corrupt(in, h, w, cs);
    return std::vector<double>(out.begin(), out.end());
  });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d", &ModelConfig::d)
      .def_readwrite("r", &ModelConfig::r)
      .def_readwrite("L", &ModelConfig::L)
      .def_readwrite("tau", &ModelConfig::tau)
      .def_readwrite("num_queries", &ModelConfig::num_queries)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&>())
      .def("num_params",
           [](const Model& mo) { return mo.params().count_scalars(); })
      .def("predict",
           [](const Model& mo, std::vector<double> img, size_t h, size_t w) {
             std::vector<real> im(img.begin(), img.end());
             Prediction p = mo.predict(im, h, w);
             return py::make_tuple(p.ensemble, p.part_only, p.whole_only);
           })
      .def("loss", [](const Model& mo, std::vector<double> img,
                      std::vector<int64_t> labels, size_t h, size_t w) {
        std::vector<real> im(img.begin(), img.end());
        Tensor x = Tensor::from_data({h * w, 3}, im);
        ForwardOutputs fo = mo.forward(x, h, w);
        GroundTruth gt = mo.ground_truth_for(labels, h, w);
        LossBreakdown lb = mo.compute_loss(fo, gt);
        py::dict d;
        d["part_cls"] = double(lb.part_cls.item());
        d["contrast"] = double(lb.contrast.item());
        d["dice"] = double(lb.dice.item());
        d["mask"] = double(lb.mask.item());
        d["mask_cls"] = double(lb.mask_cls.item());
        d["total"] = double(lb.total.item());
        return d;
      });
}
