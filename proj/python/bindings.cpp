#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "edms/metrics.hpp"
#include "edms/nets.hpp"
#include "edms/pipeline.hpp"
#include "edms/train.hpp"
#include "edms/weights.hpp"

namespace py = pybind11;
using namespace edms;

namespace {

ImageU8 image_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) {
        throw py::value_error("expected an HxWx3 uint8 array");
    }
    ImageU8 img(int(a.shape(1)), int(a.shape(0)));
    std::memcpy(img.data.data(), a.data(), img.data.size());
    return img;
}

py::array_t<uint8_t> array_from_image(const ImageU8& img) {
    py::array_t<uint8_t> a({img.h, img.w, 3});
    std::memcpy(a.mutable_data(), img.data.data(), img.data.size());
    return a;
}

py::array_t<uint8_t> array_from_map(const ClassMap& m) {
    py::array_t<uint8_t> a({m.h, m.w});
    std::memcpy(a.mutable_data(), m.data.data(), m.data.size());
    return a;
}

py::dict stats_dict(const CodecStats& st) {
    py::dict d;
    d["header_bytes"] = st.header_bytes;
    d["compact_bytes"] = st.compact_bytes;
    d["residual_bytes"] = st.residual_bytes;
    d["hash_bytes"] = st.hash_bytes;
    d["total_bytes"] = st.total_bytes;
    d["bpp"] = st.bpp;
    d["psnr_db"] = st.psnr_db;
    d["ms_ssim"] = st.ms_ssim;
    d["enc_s"] = st.enc_s;
    d["dec_s"] = st.dec_s;
    d["synth_hash8"] = hex8(st.synth_hash8);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "EDMS layered image codec with encoder-decoder matched segmentation";

    py::class_<WeightSet>(m, "WeightSet")
        .def("__len__", [](const WeightSet& w) { return w.size(); })
        .def("digest_hex8",
             [](const WeightSet& w) {
                 return hex8(std::span<const uint8_t, 8>(w.digest().data(), 8));
             })
        .def("names", [](const WeightSet& w) {
            std::vector<std::string> names;
            for (const auto& e : w.entries()) names.push_back(e.name);
            return names;
        });

    m.def("init_weights", &init_weights, py::arg("seed"), py::arg("seg_classes") = 4,
          "Seeded random initialization of all four networks");
    m.def("load_weights", [](const std::string& path) { return load_weights(path); },
          py::arg("path"));
    m.def("save_weights",
          [](const WeightSet& w, const std::string& path) { save_weights(w, path); },
          py::arg("weights"), py::arg("path"));

    m.def(
        "encode",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& img,
           const WeightSet& w, int q, bool embed_synth_hash, bool enhance) {
            EncodeOptions opt;
            opt.q = q;
            opt.embed_synth_hash = embed_synth_hash;
            opt.enhance = enhance;
            auto [bytes, stats] = encode(image_from_array(img), w, opt);
            return py::make_tuple(py::bytes(reinterpret_cast<const char*>(bytes.data()),
                                            bytes.size()),
                                  stats_dict(stats));
        },
        py::arg("image"), py::arg("weights"), py::arg("q") = 1,
        py::arg("embed_synth_hash") = false, py::arg("enhance") = true,
        "Encode an HxWx3 uint8 image; returns (container_bytes, stats)");

    m.def(
        "decode",
        [](const py::bytes& data, const WeightSet& w) {
            const std::string_view view = data;
            auto [img, stats] = decode(
                std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(view.data()),
                                         view.size()),
                w);
            return py::make_tuple(array_from_image(img), stats_dict(stats));
        },
        py::arg("container"), py::arg("weights"),
        "Decode a container; returns (image, stats)");

    m.def(
        "verify_matched",
        [](const py::bytes& data, const WeightSet& w) {
            const std::string_view view = data;
            const MatchReport r = verify_matched(
                std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(view.data()),
                                         view.size()),
                w);
            py::dict d;
            d["match"] = r.match;
            d["stored_hash8"] = hex8(r.stored_hash8);
            d["recomputed_hash8"] = hex8(r.recomputed_hash8);
            d["total_bytes"] = r.total_bytes;
            d["bpp"] = r.bpp;
            return d;
        },
        py::arg("container"), py::arg("weights"));

    m.def(
        "psnr",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& b) {
            return psnr(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "ms_ssim",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& b) {
            return ms_ssim(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "gen_dataset",
        [](uint64_t seed, int count, int size, int classes) {
            py::list out;
            for (const Sample& s : gen_dataset(seed, count, size, classes)) {
                out.append(py::make_tuple(array_from_image(s.image), array_from_map(s.labels)));
            }
            return out;
        },
        py::arg("seed"), py::arg("count"), py::arg("size") = 64, py::arg("classes") = 4,
        "Synthetic labeled scenes; returns a list of (image, class_map) pairs");

    py::register_exception<DigestMismatch>(m, "DigestMismatchError");
    py::register_exception<SynthHashMismatch>(m, "SynthHashMismatchError");
}
