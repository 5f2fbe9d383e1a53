#include <pybind11/pybind11.h>
#include <pybind11/eigen.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <tuple>

#include "geoloc/commands.hpp"
#include "geoloc/container.hpp"
#include "geoloc/corpus.hpp"
#include "geoloc/discretise.hpp"
#include "geoloc/embeddings.hpp"
#include "geoloc/error.hpp"
#include "geoloc/geodesy.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace geoloc;

namespace {

using RecordTuple = std::tuple<std::string, double, double, std::string>;

std::vector<UserRecord> to_records(const std::vector<RecordTuple>& rows) {
  std::vector<UserRecord> out;
  out.reserve(rows.size());
  for (const auto& [id, lat, lon, text] : rows) out.push_back({id, lat, lon, text});
  return out;
}

std::vector<GeoPoint> to_points(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<GeoPoint> out;
  out.reserve(pairs.size());
  for (const auto& [lat, lon] : pairs) out.emplace_back(lat, lon);
  return out;
}

std::pair<double, double> as_pair(const GeoPoint& p) { return {p.lat(), p.lon()}; }

py::dict report_dict(const GeoEvalReport& r) {
  py::dict d("acc_at_161"_a = r.acc_at_161, "mean_km"_a = r.mean_km, "median_km"_a = r.median_km,
             "n_users"_a = r.n_users);
  if (!r.per_group.empty()) {
    py::dict groups;
    for (const auto& [name, stat] : r.per_group) groups[py::str(name)] = py::make_tuple(stat.median_km, stat.count);
    d["per_group"] = groups;
  }
  return d;
}

py::list recall_list(const std::vector<RecallPoint>& points) {
  py::list out;
  for (const auto& p : points) {
    out.append(py::dict("k_percent"_a = p.k_percent, "retrieved"_a = p.retrieved, "recall"_a = p.recall,
                        "hits"_a = p.hits, "n_gold"_a = p.n_gold, "n_regions"_a = p.n_regions));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_geoloc, m) {
  m.doc() = "Text-based user geolocation with an MLP over bag-of-words features";

  static py::exception<Error> geoloc_error(m, "GeolocError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(geoloc_error.ptr(), e.formatted().c_str());
    }
  });

  m.def("tokenize", &tokenize, "text"_a);
  m.def("haversine_km", [](std::pair<double, double> a, std::pair<double, double> b) {
    return haversine_km(GeoPoint(a.first, a.second), GeoPoint(b.first, b.second));
  }, "a"_a, "b"_a, "Great-circle distance between (lat, lon) pairs");
  m.def("evaluate", [](const std::vector<std::pair<double, double>>& pred,
                       const std::vector<std::pair<double, double>>& gold) {
    return report_dict(evaluate(to_points(pred), to_points(gold)));
  }, "pred"_a, "gold"_a);

  py::class_<Discretiser>(m, "Discretiser")
      .def_property_readonly("kind", [](const Discretiser& d) { return std::string(discretiser_kind_name(d.kind())); })
      .def_property_readonly("num_classes", &Discretiser::num_classes)
      .def_property_readonly("assignments", &Discretiser::assignments)
      .def_property_readonly("inertia_history", &Discretiser::inertia_history)
      .def("assign", [](const Discretiser& d, double lat, double lon) { return d.assign(GeoPoint(lat, lon)); },
           "lat"_a, "lon"_a)
      .def("representative", [](const Discretiser& d, std::size_t c) { return as_pair(d.representative(c)); }, "c"_a)
      .def("hull", [](const Discretiser& d, std::size_t c) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : d.hull(c)) out.push_back(as_pair(p));
        return out;
      }, "c"_a)
      .def("serialize", &Discretiser::serialize)
      .def("geojson", [](const Discretiser& d) { return discretiser_geojson(d); });

  m.def("fit_kdtree", [](const std::vector<std::pair<double, double>>& points, std::size_t k) {
    return fit_kdtree(to_points(points), k);
  }, "points"_a, "k"_a);
  m.def("fit_kmeans", [](const std::vector<std::pair<double, double>>& points, std::size_t k,
                         std::uint64_t seed, std::size_t max_iter) {
    return fit_kmeans(to_points(points), k, KMeansOptions{seed, max_iter, false});
  }, "points"_a, "k"_a, "seed"_a = 1, "max_iter"_a = 100);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_property_readonly("terms", &Vocabulary::terms)
      .def_property_readonly("doc_freq", &Vocabulary::doc_freq)
      .def("__len__", &Vocabulary::size)
      .def("find", &Vocabulary::find, "term"_a);
  m.def("fit_vocabulary", [](const std::vector<RecordTuple>& records, std::size_t min_df) {
    return fit_vocabulary(to_records(records), min_df, default_stopwords());
  }, "records"_a, "min_df"_a = 10);
  m.def("featurize", [](const std::vector<RecordTuple>& records, const Vocabulary& vocab) {
    const auto f = featurize(to_records(records), vocab);
    return py::dict("row_ptr"_a = f.matrix.row_ptr, "col_idx"_a = f.matrix.col_idx,
                    "values"_a = f.matrix.values, "cols"_a = f.matrix.cols,
                    "featureless"_a = f.featureless);
  }, "records"_a, "vocab"_a, "CSR arrays of l2-normalised count rows");

  py::class_<ModelContainer>(m, "Model")
      .def_property_readonly("vocabulary", [](const ModelContainer& c) { return c.vocab; })
      .def_property_readonly("discretiser", [](const ModelContainer& c) { return c.discretiser; })
      .def_property_readonly("manifest", [](const ModelContainer& c) { return c.manifest; })
      .def_property_readonly("config", [](const ModelContainer& c) { return c.model.meta.config; })
      .def_property_readonly("w1", [](const ModelContainer& c) { return c.model.params.w1; })
      .def_property_readonly("b1", [](const ModelContainer& c) { return c.model.params.b1; })
      .def("predict", [](const ModelContainer& c, const std::vector<RecordTuple>& records) {
        const auto outcome = evaluate_records(c, to_records(records));
        std::vector<std::tuple<std::uint32_t, double, double>> out;
        for (const auto& u : outcome.users) out.emplace_back(u.cls, u.predicted.lat(), u.predicted.lon());
        return out;
      }, "records"_a, "(class, lat, lon) per user")
      .def("evaluate", [](const ModelContainer& c, const std::vector<RecordTuple>& records) {
        return report_dict(evaluate_records(c, to_records(records)).report);
      }, "records"_a)
      .def("nearest", [](const ModelContainer& c, const std::vector<std::string>& query, std::size_t n,
                         bool include_query, const std::string& similarity) {
        NnOptions options;
        options.n = n;
        options.include_query = include_query;
        options.similarity = parse_similarity(similarity);
        std::vector<std::pair<std::string, double>> out;
        for (const auto& nb : nearest_for_query(c, query, options).neighbours) out.emplace_back(nb.term, nb.score);
        return out;
      }, "query"_a, "n"_a = 10, "include_query"_a = false, "similarity"_a = "cosine")
      .def("embed", [](const ModelContainer& c, const std::vector<std::string>& terms) {
        return embed_bow(c.model, c.vocab, terms).vector;
      }, "terms"_a, "Hidden-layer output for a bag of terms")
      .def("priors", [](const ModelContainer& c, const std::vector<RecordTuple>& records, std::size_t top) {
        return priors_tsv(c, to_records(records), top);
      }, "records"_a, "top"_a = 10)
      .def("save", [](const ModelContainer& c, const std::filesystem::path& path) { save_model(c, path); }, "path"_a)
      .def("to_bytes", [](const ModelContainer& c) { return py::bytes(serialize_model(c)); });

  m.def("load_model", &load_model, "path"_a);
  m.def("train", [](const std::vector<RecordTuple>& train_records, const std::vector<RecordTuple>& dev_records,
                    const std::map<std::string, std::string>& config, bool verbose) {
    const auto run = RunConfig::from_pairs(config);
    std::ostringstream log;
    auto outcome = train_pipeline(to_records(train_records), to_records(dev_records), run, &log);
    if (verbose) py::print(log.str(), "end"_a = "");
    return outcome.container;
  }, "train"_a, "dev"_a, "config"_a = std::map<std::string, std::string>{}, "verbose"_a = false,
     "Fit vocabulary, discretiser and MLP; config takes the same keys as a run file");

  m.def("dialect_eval", [](const std::filesystem::path& model, const std::filesystem::path& dareds,
                           const std::filesystem::path& city_map, const std::filesystem::path& freq,
                           std::size_t cutoff, std::vector<double> k_percents) {
    DialectEvalOptions options;
    options.model_path = model;
    options.dareds_path = dareds;
    options.city_map_path = city_map;
    options.freq_path = freq;
    options.cutoff = cutoff;
    if (!k_percents.empty()) options.k_percents = std::move(k_percents);
    return recall_list(cmd_dialect_eval(options));
  }, "model"_a, "dareds"_a, "city_map"_a, "freq"_a, "cutoff"_a = 50000,
     "k_percents"_a = std::vector<double>{});
}
