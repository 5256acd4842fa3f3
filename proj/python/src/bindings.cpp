#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "latentprobe/apcr.hpp"
#include "latentprobe/controlset.hpp"
#include "latentprobe/core.hpp"
#include "latentprobe/errors.hpp"
#include "latentprobe/manipulate.hpp"
#include "latentprobe/models.hpp"

namespace py = pybind11;
using namespace latentprobe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

LatentVector to_latent(const Array& a) {
    if (a.ndim() != 1) throw ShapeError("latent must be one-dimensional");
    return LatentVector(std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(std::span<const double> v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array image_array(const Image& img) {
    Array out({img.height(), img.width()});
    std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
    return out;
}

std::vector<LatentVector> to_bases(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("bases must be a (count, n) array");
    std::vector<LatentVector> out;
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    for (std::size_t r = 0; r < rows; ++r) out.emplace_back(std::vector<double>(a.data() + r * cols, a.data() + (r + 1) * cols));
    return out;
}

py::list set_entries(const ControllingSet& s) {
    py::list out;
    for (const auto& e : s.entries) out.append(py::make_tuple(e.dim, e.sign));
    return out;
}

ControllingSet make_set(std::size_t concept_id, const std::vector<std::pair<std::size_t, int>>& entries) {
    ControllingSet s;
    s.concept_id = ConceptId{concept_id};
    for (const auto& [d, sign] : entries) s.entries.push_back({d, sign});
    s.validate();
    return s;
}

OptimizerConfig make_config(double xi, double lambda, int iterations, double step, double fd_step, std::uint64_t seed,
                            const std::string& penalty, unsigned threads) {
    OptimizerConfig cfg;
    cfg.xi = xi;
    cfg.lambda = lambda;
    cfg.iterations = iterations;
    cfg.step_size = step;
    cfg.fd_step = fd_step;
    cfg.seed = seed;
    cfg.penalty = penalty_from_string(penalty);
    cfg.threads = threads;
    cfg.validate();
    return cfg;
}

py::dict result_dict(const OptimizationResult& r) {
    py::dict d;
    d["w"] = to_array(r.w.values());
    d["history"] = r.objective_history;
    d["initial_objective"] = r.initial_objective;
    d["final_objective"] = r.final_objective();
    d["best_iteration"] = r.best_iteration;
    d["delta_s"] = r.delta_s;
    d["json"] = optimization_result_to_json(r);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Latent-space concept attribution for generator/classifier pairs";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<IndexError>(m, "OutOfRange", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<ModelPair>(m, "ModelPair")
        .def_property_readonly("latent_width", [](const ModelPair& p) { return p.generator->latent_width(); })
        .def_property_readonly("concept_count", [](const ModelPair& p) { return p.classifier->concept_count(); })
        .def_property_readonly("image_shape",
                               [](const ModelPair& p) {
                                   return py::make_tuple(p.generator->image_height(), p.generator->image_width());
                               })
        .def_property_readonly("ground_truth",
                               [](const ModelPair& p) {
                                   py::list out;
                                   for (const auto& s : p.ground_truth) out.append(set_entries(s));
                                   return out;
                               })
        .def("generate", [](const ModelPair& p, const Array& z) { return image_array(p.generator->generate(to_latent(z))); },
             py::arg("z"))
        .def("classify",
             [](const ModelPair& p, const Array& z) {
                 return to_array(p.classifier->classify(p.generator->generate(to_latent(z))).values());
             },
             py::arg("z"), "Class probabilities of the image generated from z.");

    m.def("load_pair", &load_model_pair, py::arg("generator"), py::arg("classifier"));
    m.def("synthetic_pair", [](const std::string& spec_json) { return make_synthetic_generator(synthetic_spec_from_json(spec_json)); },
          py::arg("spec_json"));

    m.def("sample_latent", [](std::size_t n, std::uint64_t seed) { return to_array(sample_latent(n, seed).values()); },
          py::arg("n"), py::arg("seed"));
    m.def("sample_latents",
          [](std::size_t n, std::size_t count, std::uint64_t seed) {
              Array out({count, n});
              auto* dst = out.mutable_data();
              for (const auto& z : sample_latents(n, count, seed)) dst = std::copy(z.values().begin(), z.values().end(), dst);
              return out;
          },
          py::arg("n"), py::arg("count"), py::arg("seed"));

    m.def("apcr_from_series",
          [](const Array& s, const std::string& variant) {
              return apcr_from_series(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                      apcr_variant_from_string(variant));
          },
          py::arg("series"), py::arg("variant") = "endpoint");

    m.def("apcr_matrix",
          [](const ModelPair& p, const Array& bases, double delta, int steps, const std::string& variant,
             unsigned threads) {
              const auto zs = to_bases(bases);
              ApcrMatrix mat;
              {
                  py::gil_scoped_release release;
                  mat = apcr_matrix(*p.generator, *p.classifier, zs, delta, steps, apcr_variant_from_string(variant),
                                    threads);
              }
              Array values({mat.n, mat.l}), direction({mat.n, mat.l});
              std::copy(mat.values.begin(), mat.values.end(), values.mutable_data());
              std::copy(mat.direction.begin(), mat.direction.end(), direction.mutable_data());
              return py::make_tuple(values, direction);
          },
          py::arg("pair"), py::arg("bases"), py::arg("delta") = 0.5, py::arg("steps") = 10,
          py::arg("variant") = "endpoint", py::arg("threads") = 1,
          "Returns (apcr, direction), both shaped (n, concepts).");

    m.def("optimize",
          [](const ModelPair& p, const Array& bases, std::size_t concept_id, double xi, double lambda, int iterations,
             double step, double fd_step, std::uint64_t seed, const std::string& penalty, unsigned threads) {
              const auto zs = to_bases(bases);
              const auto cfg = make_config(xi, lambda, iterations, step, fd_step, seed, penalty, threads);
              OptimizationResult r;
              {
                  py::gil_scoped_release release;
                  r = optimize_weights(*p.generator, *p.classifier, zs, ConceptId{concept_id}, cfg);
              }
              return result_dict(r);
          },
          py::arg("pair"), py::arg("bases"), py::arg("concept"), py::arg("xi") = 3.0, py::arg("lam") = 0.01,
          py::arg("iterations") = 200, py::arg("step") = 0.05, py::arg("fd_step") = 1e-3, py::arg("seed") = 1,
          py::arg("penalty") = "l2", py::arg("threads") = 1);

    m.def("top_k_set",
          [](const Array& w, std::size_t concept_id, std::size_t k) {
              OptimizationResult r;
              r.w = WeightVector(std::vector<double>(w.data(), w.data() + w.size()));
              return set_entries(threshold_controlling_set(r, ConceptId{concept_id}, ThresholdMode::top(k)));
          },
          py::arg("w"), py::arg("concept"), py::arg("k"), "Top-k dims of w by magnitude, as (dim, sign) pairs.");

    m.def("intersection_ratio",
          [](const std::vector<std::pair<std::size_t, int>>& a, const std::vector<std::pair<std::size_t, int>>& b) {
              return intersection_ratio(make_set(0, a), make_set(0, b));
          },
          py::arg("a"), py::arg("b"));

    m.def("impulse",
          [](const ModelPair& p, const Array& z, std::size_t dim, double magnitude, int sign) {
              const auto r = extreme_impulse(*p.generator, *p.classifier, to_latent(z), dim, magnitude, sign);
              return py::make_tuple(r.argmax.index, to_array(r.probs.values()));
          },
          py::arg("pair"), py::arg("z"), py::arg("dim"), py::arg("magnitude") = 10.0, py::arg("sign") = 1);

    m.def("manipulate",
          [](const ModelPair& p, const Array& z, std::size_t concept_id,
             const std::vector<std::pair<std::size_t, int>>& entries, double strength, int steps) {
              const auto frames =
                  manipulate_with_set(*p.generator, *p.classifier, to_latent(z), make_set(concept_id, entries), strength, steps);
              Array probs({frames.size(), p.classifier->concept_count()});
              auto* dst = probs.mutable_data();
              for (const auto& f : frames) dst = std::copy(f.probs.values().begin(), f.probs.values().end(), dst);
              return probs;
          },
          py::arg("pair"), py::arg("z"), py::arg("concept"), py::arg("entries"), py::arg("strength") = 3.0,
          py::arg("steps") = 8, "Class probabilities for each frame, shaped (steps + 1, concepts).");
}
