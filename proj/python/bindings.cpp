#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <sstream>

#include "compemb/run.hpp"

namespace py = pybind11;
using namespace compemb;

namespace {

py::array_t<float> to_array(const std::vector<float>& v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

EmbeddingTable<float> table_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw std::invalid_argument("embedding table must be a 2-D array");
  return EmbeddingTable<float>::from_values(a.shape(0), a.shape(1),
                                            std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> table_to_array(const EmbeddingTable<float>& t) {
  py::array_t<float> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.dim())});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict summary_to_dict(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_compemb, m) {
  m.doc() = "Compositional embeddings over complementary partitions";

  py::class_<PartitionSet>(m, "PartitionSet")
      .def_static("naive", &PartitionSet::naive, py::arg("size"))
      .def_static("quotient_remainder", &PartitionSet::quotient_remainder, py::arg("size"), py::arg("modulus"))
      .def_static("generalized_qr", &PartitionSet::generalized_qr, py::arg("size"), py::arg("moduli"))
      .def_static("crt", &PartitionSet::crt, py::arg("size"), py::arg("moduli"))
      .def_static("hashing", &PartitionSet::hashing, py::arg("size"), py::arg("modulus"))
      .def_static("from_blocks", &PartitionSet::from_blocks, py::arg("size"), py::arg("partitions"))
      .def_property_readonly("kind", [](const PartitionSet& ps) { return std::string(to_string(ps.kind())); })
      .def_property_readonly("size", &PartitionSet::domain_size)
      .def_property_readonly("sizes", &PartitionSet::sizes)
      .def("__len__", &PartitionSet::count)
      .def("class_index", &PartitionSet::class_index, py::arg("j"), py::arg("i"))
      .def("class_tuple", &PartitionSet::class_tuple, py::arg("i"))
      .def("total_classes", &PartitionSet::total_classes)
      .def("__repr__", [](const PartitionSet& ps) {
        std::ostringstream s;
        s << "PartitionSet(" << to_string(ps.kind()) << ", size=" << ps.domain_size() << ", k=" << ps.count() << ")";
        return s.str();
      });

  py::class_<VerifyReport>(m, "VerifyReport")
      .def_readonly("complementary", &VerifyReport::complementary)
      .def_readonly("exhaustive", &VerifyReport::exhaustive)
      .def_readonly("pairs_checked", &VerifyReport::pairs_checked)
      .def_readonly("witness", &VerifyReport::witness);

  m.def(
      "verify_complementary",
      [](const PartitionSet& ps, Index cap, std::uint64_t pairs, std::uint64_t seed) {
        return verify_complementary(ps, VerifyOptions{cap, pairs, seed});
      },
      py::arg("partitions"), py::arg("exhaustive_cap") = 10'000, py::arg("sampled_pairs") = 1'000'000,
      py::arg("seed") = 0);
  m.def("find_tuple_collision", &find_tuple_collision, py::arg("partitions"));

  py::class_<CompositionScheme<float>>(m, "CompositionScheme")
      .def(py::init([](const PartitionSet& ps, std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>
                                                   tables,
                       const std::string& op) {
             std::vector<EmbeddingTable<float>> ts;
             for (auto& t : tables) ts.push_back(table_from_array(t));
             return CompositionScheme<float>(ps, std::move(ts), composition_op_from_string(op));
           }),
           py::arg("partitions"), py::arg("tables"), py::arg("op"))
      .def_static(
          "random",
          [](const PartitionSet& ps, std::vector<std::size_t> dims, const std::string& op, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return CompositionScheme<float>::random(ps, std::move(dims), composition_op_from_string(op), rng);
          },
          py::arg("partitions"), py::arg("dims"), py::arg("op"), py::arg("seed") = 0)
      .def_property_readonly("out_dim", &CompositionScheme<float>::out_dim)
      .def_property_readonly("op", [](const CompositionScheme<float>& s) { return std::string(to_string(s.op())); })
      .def("param_count", &CompositionScheme<float>::param_count)
      .def("tables",
           [](const CompositionScheme<float>& s) {
             std::vector<py::array_t<float>> out;
             for (const auto& t : s.tables()) out.push_back(table_to_array(t));
             return out;
           })
      .def("lookup", [](const CompositionScheme<float>& s, Index i) { return to_array(s.lookup(i)); }, py::arg("i"))
      .def("unique", [](const CompositionScheme<float>& s) { return !check_uniqueness(s).has_value(); });

  m.def(
      "qr_lookup",
      [](py::array_t<float> remainder, py::array_t<float> quotient, Index i, Index m) {
        return to_array(qr_lookup(table_from_array(remainder), table_from_array(quotient), i, m));
      },
      py::arg("remainder"), py::arg("quotient"), py::arg("i"), py::arg("modulus"));

  m.def("modulus_for_collisions", &modulus_for_collisions, py::arg("size"), py::arg("collisions"));
  m.def("criteo_kaggle_cardinalities", &criteo_kaggle_cardinalities);

  m.def(
      "count_params",
      [](const std::string& config_json, std::vector<Index> cardinalities) {
        const auto config = model_config_from_json(nlohmann::json::parse(config_json));
        const auto r = count_params(config, cardinalities);
        py::dict d;
        d["embedding_params"] = r.embedding_params;
        d["dense_params"] = r.dense_params;
        d["total"] = r.total();
        std::vector<std::size_t> per_feature;
        for (const auto& f : r.features) per_feature.push_back(f.params);
        d["per_feature"] = per_feature;
        return d;
      },
      py::arg("model_config_json"), py::arg("cardinalities"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed, bool inject_sign_flip) {
        GradcheckOptions o;
        o.seed = seed;
        o.inject_sign_flip = inject_sign_flip;
        std::vector<std::tuple<std::string, double, bool>> out;
        for (const auto& r : run_gradchecks(o)) out.emplace_back(r.name, r.max_relative_error, r.passed);
        return out;
      },
      py::arg("seed") = 0, py::arg("inject_sign_flip") = false);

  m.def(
      "train",
      [](const std::string& config_json) {
        const auto config = run_config_from_json(nlohmann::json::parse(config_json));
        std::vector<SweepPointResult> points;
        {
          py::gil_scoped_release release;
          points = run_train(config);
        }
        py::list out;
        for (const auto& p : points) out.append(summary_to_dict(p.summary));
        return out;
      },
      py::arg("run_config_json"));

  m.attr("SCHEMA_VERSION") = kSchemaVersion;
}
