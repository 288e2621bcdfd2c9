#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "gmcnn/checkpoint.hpp"
#include "gmcnn/config.hpp"
#include "gmcnn/data.hpp"
#include "gmcnn/image_io.hpp"
#include "gmcnn/mask.hpp"
#include "gmcnn/metrics.hpp"
#include "gmcnn/parallel.hpp"
#include "gmcnn/selftest.hpp"
#include "gmcnn/train.hpp"

namespace py = pybind11;
using namespace gmcnn;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// (h, w) or (h, w, c) uint8 array -> Image.
Image to_image(const U8Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("image must be (h, w) or (h, w, c)");
    Image im;
    im.h = static_cast<int>(a.shape(0));
    im.w = static_cast<int>(a.shape(1));
    im.channels = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    if (im.channels != 1 && im.channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
    im.pixels.assign(a.data(), a.data() + a.size());
    return im;
}

U8Array from_image(const Image& im) {
    std::vector<py::ssize_t> shape = {im.h, im.w};
    if (im.channels != 1) shape.push_back(im.channels);
    U8Array out(shape);
    std::memcpy(out.mutable_data(), im.pixels.data(), im.pixels.size());
    return out;
}

// Nonzero entries are unknown pixels.
Mask to_mask(const U8Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be (h, w)");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    std::vector<std::uint8_t> gray(a.data(), a.data() + a.size());
    for (auto& v : gray) v = v ? 255 : 0;
    return Mask::from_gray(h, w, gray);
}

U8Array from_mask(const Mask& m) {
    U8Array out({m.h, m.w});
    std::memcpy(out.mutable_data(), m.values.data(), m.values.size());
    return out;
}

py::array_t<double> from_weights(const WeightMask& w) {
    py::array_t<double> out({w.h, w.w});
    std::memcpy(out.mutable_data(), w.values.data(), w.values.size() * sizeof(double));
    return out;
}

py::dict record_dict(const LossRecord& r) {
    py::dict d;
    d["iteration"] = r.iteration;
    d["phase"] = r.phase;
    d["L_c"] = r.reconstruction;
    d["L_mrf"] = r.mrf;
    d["L_adv"] = r.adversarial;
    d["critic"] = r.critic;
    d["total"] = r.total;
    d["masked_l1"] = r.masked_l1;
    return d;
}

}  // namespace

PYBIND11_MODULE(_gmcnn, m) {
    m.doc() = "Native core of the gmcnn package";

    m.def("set_num_threads", &set_num_threads, py::arg("n"));
    m.def("num_threads", &num_threads);

    m.def("read_png", [](const std::string& path) { return from_image(read_png(path)); }, py::arg("path"));
    m.def("write_png", [](const std::string& path, const U8Array& image) { write_png(path, to_image(image)); },
          py::arg("path"), py::arg("image"));

    m.def("psnr", [](const U8Array& a, const U8Array& b) { return psnr(to_image(a), to_image(b)); }, py::arg("a"),
          py::arg("b"));
    m.def("ssim", [](const U8Array& a, const U8Array& b) { return ssim(to_image(a), to_image(b)); }, py::arg("a"),
          py::arg("b"));

    m.def("sample_mask",
          [](std::uint64_t seed, int h, int w, int max_hole_h, int max_hole_w) {
              return from_mask(sample_mask(seed, h, w, max_hole_h, max_hole_w));
          },
          py::arg("seed"), py::arg("h"), py::arg("w"), py::arg("max_hole_h"), py::arg("max_hole_w"));
    m.def("gaussian_kernel",
          [](int size, double sigma) {
              const GaussKernel k = gaussian_kernel(size, sigma);
              py::array_t<double> out({size, size});
              std::memcpy(out.mutable_data(), k.values.data(), k.values.size() * sizeof(double));
              return out;
          },
          py::arg("size"), py::arg("sigma"));
    m.def("propagate_confidence",
          [](const U8Array& mask, int kernel_size, double sigma, int iterations) {
              return from_weights(propagate_confidence(to_mask(mask), gaussian_kernel(kernel_size, sigma), iterations));
          },
          py::arg("mask"), py::arg("kernel_size"), py::arg("sigma"), py::arg("iterations") = kDefaultConfidenceIterations);

    m.def("synthetic_textures",
          [](int count, int size, int channels, std::uint64_t seed) {
              py::list out;
              for (const Image& im : synthetic_textures(count, size, channels, seed)) out.append(from_image(im));
              return out;
          },
          py::arg("count"), py::arg("size"), py::arg("channels") = 3, py::arg("seed") = 0);

    m.def("normalize_config", [](const std::string& text) { return TrainConfig::parse(text).to_text(); },
          py::arg("text"), "Parses a config and returns its canonical text (raises ValueError on bad input).");

    m.def("train",
          [](const std::string& config_text, bool write_files) {
              const TrainConfig cfg = TrainConfig::parse(config_text);
              TrainOptions opt;
              opt.write_files = write_files;
              TrainResult r;
              {
                  py::gil_scoped_release release;
                  r = train(cfg, opt);
              }
              py::dict d;
              py::list records;
              for (const LossRecord& rec : r.records) records.append(record_dict(rec));
              d["records"] = records;
              d["probe_before"] = r.probe_before;
              d["probe_after"] = r.probe_after;
              const auto bytes = r.final_checkpoint.serialize();
              d["checkpoint"] = py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
              return d;
          },
          py::arg("config_text"), py::arg("write_files") = false,
          "Runs both training phases; returns the loss records, probe masked L1 and the final checkpoint bytes.");

    py::class_<Generator>(m, "Generator")
        .def_static("from_checkpoint",
                    [](const std::string& path) { return generator_from_checkpoint(Checkpoint::load(path)); },
                    py::arg("path"))
        .def_static("from_bytes",
                    [](const py::bytes& data) {
                        const std::string s = data;
                        return generator_from_checkpoint(
                            Checkpoint::deserialize(std::vector<std::uint8_t>(s.begin(), s.end())));
                    },
                    py::arg("data"))
        .def_property_readonly("parameter_count", &Generator::parameter_count)
        .def_property_readonly("channels", [](const Generator& g) { return g.config().image_channels; })
        .def("infer",
             [](const Generator& g, const U8Array& image, const U8Array& mask) {
                 return from_image(infer(g, to_image(image), to_mask(mask)));
             },
             py::arg("image"), py::arg("mask"),
             "Completes the pixels where mask is nonzero; known pixels are returned unchanged.");

    m.def("selftest", [](std::uint64_t seed) {
        py::list out;
        for (const SelftestResult& r : run_selftest(seed)) out.append(py::make_tuple(r.name, r.passed, r.detail));
        return out;
    }, py::arg("seed") = 1);

    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception<NonFiniteLoss>(m, "NonFiniteLoss", PyExc_ArithmeticError);
}
