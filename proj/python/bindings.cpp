// Python bindings for the main pipeline operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "docie/json_io.hpp"
#include "docie/kbalign.hpp"
#include "docie/pipeline.hpp"
#include "docie/report.hpp"
#include "docie/synth.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Documents cross the boundary as plain dicts in the corpus JSON schema.
py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<long long>());
    case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
    default: return py::none();
  }
}

json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    json out = json::object();
    for (auto item : obj.cast<py::dict>()) {
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    }
    return out;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    json out = json::array();
    for (auto item : obj.cast<py::sequence>()) out.push_back(py_to_json(item));
    return out;
  }
  throw std::invalid_argument("unsupported python value in document");
}

docie::Document doc_from_py(const py::dict& d) {
  docie::Document doc = docie::document_from_json(py_to_json(d));
  auto violations = docie::validate_document(doc);
  if (!violations.empty()) throw std::invalid_argument("invalid document: " + violations.front());
  return docie::derive_salience(doc);
}

std::vector<docie::Document> corpus_from_py(const py::list& docs) {
  std::vector<docie::Document> out;
  for (auto item : docs) out.push_back(doc_from_py(item.cast<py::dict>()));
  return out;
}

py::list corpus_to_py(const std::vector<docie::Document>& corpus) {
  py::list out;
  for (const docie::Document& doc : corpus) out.append(json_to_py(docie::document_to_json(doc)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_docie, m) {
  m.doc() = "Document-level information extraction pipeline (C++ core)";

  m.def(
      "load_corpus",
      [](const std::string& path) { return corpus_to_py(docie::load_corpus(path)); },
      py::arg("path"), "Load a canonical JSON-lines corpus as a list of dicts.");

  m.def(
      "save_corpus",
      [](const py::list& docs, const std::string& path) {
        docie::save_corpus(corpus_from_py(docs), path);
      },
      py::arg("docs"), py::arg("path"));

  m.def(
      "validate_document",
      [](const py::dict& doc) {
        return docie::validate_document(docie::document_from_json(py_to_json(doc)));
      },
      py::arg("doc"), "Invariant violations for one document (empty list: valid).");

  m.def(
      "derive_salience",
      [](const py::dict& doc) {
        return json_to_py(docie::document_to_json(
            docie::derive_salience(docie::document_from_json(py_to_json(doc)))));
      },
      py::arg("doc"));

  m.def(
      "corpus_stats",
      [](const py::list& docs) {
        return json_to_py(docie::report::stats_to_json(docie::corpus_stats(corpus_from_py(docs))));
      },
      py::arg("docs"));

  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, int n_docs, const py::object& config) {
        docie::synth::SynthConfig cfg;
        if (!config.is_none()) {
          cfg = docie::synth::SynthConfig::from_json(py_to_json(config));
        }
        return corpus_to_py(docie::synth::generate_synthetic(seed, n_docs, cfg));
      },
      py::arg("seed"), py::arg("n_docs"), py::arg("config") = py::none());

  m.def(
      "split_corpus",
      [](const py::list& docs, const std::vector<double>& fractions, std::uint64_t seed) {
        py::list out;
        for (const auto& part : docie::split_corpus(corpus_from_py(docs), fractions, seed)) {
          out.append(corpus_to_py(part));
        }
        return out;
      },
      py::arg("docs"), py::arg("fractions"), py::arg("seed"));

  py::class_<docie::pipe::Model>(m, "Model")
      .def_static(
          "load", [](const std::string& path) { return docie::pipe::load_checkpoint(path); },
          py::arg("path"))
      .def("save",
           [](const docie::pipe::Model& model, const std::string& path) {
             docie::pipe::save_checkpoint(model, path);
           })
      .def_property_readonly("config", [](const docie::pipe::Model& model) {
        return json_to_py(model.config.to_json());
      });

  m.def(
      "train",
      [](const py::list& train_docs, const py::list& dev_docs, const py::object& config) {
        docie::pipe::ModelConfig cfg;
        if (!config.is_none()) cfg = docie::pipe::ModelConfig::from_json(py_to_json(config));
        std::vector<docie::Document> train = corpus_from_py(train_docs);
        std::vector<docie::Document> dev = corpus_from_py(dev_docs);
        docie::enc::Vocabulary vocab = docie::enc::Vocabulary::build(train);
        auto model = std::make_unique<docie::pipe::Model>(
            docie::pipe::Model::make(cfg, std::move(vocab)));
        docie::pipe::TrainResult result = docie::pipe::train_joint(*model, train, dev);
        json log = json::array();
        for (const auto& entry : result.log) log.push_back(entry.to_json());
        py::dict out;
        out["model"] = py::cast(std::move(model));
        out["log"] = json_to_py(log);
        out["best_dev_4ary_f1"] = result.best_dev_f1;
        out["best_epoch"] = result.best_epoch;
        return out;
      },
      py::arg("train_docs"), py::arg("dev_docs"), py::arg("config") = py::none(),
      "Joint training; returns {'model', 'log', 'best_dev_4ary_f1', 'best_epoch'}.");

  m.def(
      "predict",
      [](const docie::pipe::Model& model, const py::dict& doc) {
        docie::Document document = doc_from_py(doc);
        docie::pipe::Prediction pred = docie::pipe::predict_document(document, model);
        py::dict out;
        out["document"] = json_to_py(docie::document_to_json(pred.as_document(document)));
        py::list rel4;
        for (const auto& r : pred.relations4) {
          py::dict item;
          for (docie::EntityType t : docie::kAllTypes) {
            item[py::str(docie::type_name(t))] = r.tuple.role(t);
          }
          item["probability"] = r.probability;
          rel4.append(item);
        }
        out["relations_4ary"] = rel4;
        return out;
      },
      py::arg("model"), py::arg("doc"));

  m.def(
      "diagnose",
      [](const docie::pipe::Model& model, const py::list& docs, const std::string& mode, int jobs) {
        auto parsed = docie::pipe::parse_diagnose_mode(mode);
        if (!parsed) throw std::invalid_argument("unknown diagnose mode: " + mode);
        auto report = docie::pipe::diagnose(corpus_from_py(docs), model, *parsed, jobs);
        return json_to_py(docie::report::diagnose_to_json(report));
      },
      py::arg("model"), py::arg("docs"), py::arg("mode"), py::arg("jobs") = 1);

  m.def(
      "evaluate",
      [](const py::list& gold, const py::list& pred) {
        auto report =
            docie::pipe::evaluate_predictions(corpus_from_py(gold), corpus_from_py(pred));
        return json_to_py(docie::report::evaluation_to_json(report));
      },
      py::arg("gold"), py::arg("pred"));

  // kbalign
  m.def("name_jaccard", &docie::kb::name_jaccard, py::arg("mention_surface"),
        py::arg("entity_name"));
  m.def(
      "link_mentions",
      [](const std::vector<std::string>& surfaces, const std::vector<std::string>& entities,
         double epsilon) {
        py::list out;
        for (const auto& d : docie::kb::link_mentions(surfaces, entities, epsilon)) {
          py::dict item;
          item["surface"] = d.mention_surface;
          item["entity"] = d.entity ? py::object(py::str(*d.entity)) : py::object(py::none());
          item["similarity"] = d.similarity;
          out.append(item);
        }
        return out;
      },
      py::arg("surfaces"), py::arg("entities"), py::arg("epsilon"));
  m.def(
      "select_epsilon",
      [](const py::list& labeled, const std::vector<std::string>& entities,
         const std::vector<double>& grid) {
        std::vector<docie::kb::LabeledLink> links;
        for (auto item : labeled) {
          py::dict d = item.cast<py::dict>();
          docie::kb::LabeledLink l;
          l.mention_surface = d["surface"].cast<std::string>();
          if (d.contains("entity") && !d["entity"].is_none()) {
            l.gold_entity = d["entity"].cast<std::string>();
          }
          links.push_back(std::move(l));
        }
        return docie::kb::select_epsilon(links, entities, grid);
      },
      py::arg("labeled"), py::arg("entities"), py::arg("grid"));

  // coref primitives
  m.def(
      "pair_score",
      [](const std::string& a, const std::string& b, double w_trigram, double w_jaccard,
         double w_exact, double w_abbrev, double bias) {
        docie::coref::SurfaceScorerParams p;
        p.weights << w_trigram, w_jaccard, w_exact, w_abbrev;
        p.bias = bias;
        return docie::coref::pair_score(a, b, p);
      },
      py::arg("surface_a"), py::arg("surface_b"), py::arg("w_trigram") = 4.0,
      py::arg("w_jaccard") = 4.0, py::arg("w_exact") = 4.0, py::arg("w_abbrev") = 4.0,
      py::arg("bias") = -6.0);

  m.def("cohen_kappa", &docie::metrics::cohen_kappa, py::arg("labels_a"), py::arg("labels_b"));
}
