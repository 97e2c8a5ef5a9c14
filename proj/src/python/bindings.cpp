#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "linkbackdoor/experiment.hpp"
#include "linkbackdoor/viz_export.hpp"

namespace py = pybind11;
using namespace lbd;

namespace {

using EdgeArray = py::array_t<std::int64_t>;

EdgeArray to_array(const std::vector<Edge>& edges) {
  EdgeArray a({static_cast<py::ssize_t>(edges.size()), py::ssize_t{2}});
  auto m = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    m(static_cast<py::ssize_t>(i), 0) = edges[i].u;
    m(static_cast<py::ssize_t>(i), 1) = edges[i].v;
  }
  return a;
}

std::vector<Edge> from_array(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.size() == 0) return {};
  if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("edges: expected an (E, 2) array");
  auto r = a.unchecked<2>();
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    out.push_back({static_cast<NodeId>(r(i, 0)), static_cast<NodeId>(r(i, 1))});
  return out;
}

ExperimentConfig config_from(const std::string& text, const std::map<std::string, std::string>& overrides) {
  std::istringstream in(text);
  ExperimentConfig cfg = parse_config(in, "<config>");
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  return cfg;
}

py::dict trigger_dict(const Trigger& t) {
  py::dict d;
  d["m"] = t.m;
  d["q_a"] = t.q_a;
  d["q_x"] = t.q_x;
  d["alpha"] = t.alpha;
  d["pattern"] = t.pattern;
  d["features"] = t.features;
  d["reference"] = t.reference;
  d["anchors"] = t.anchors;
  d["edges"] = to_array(trigger_slots(t));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Link prediction autoencoders and node-injection backdoor attacks";

  py::class_<Graph>(m, "Graph")
      .def(py::init([](std::size_t n, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& edges,
                       Matrix features) { return Graph(n, from_array(edges), std::move(features)); }),
           py::arg("n_nodes"), py::arg("edges"), py::arg("features"))
      .def_property_readonly("n_nodes", &Graph::n_nodes)
      .def_property_readonly("n_features", &Graph::n_features)
      .def_property_readonly("n_edges", &Graph::n_edges)
      .def_property_readonly("edges", [](const Graph& g) { return to_array(g.edges()); })
      .def_property_readonly("features", [](const Graph& g) { return Matrix(g.features()); })
      .def("has_edge", &Graph::has_edge)
      .def("degree", &Graph::degree)
      .def("__repr__", [](const Graph& g) {
        return "<Graph nodes=" + std::to_string(g.n_nodes()) + " edges=" + std::to_string(g.n_edges()) +
               " features=" + std::to_string(g.n_features()) + ">";
      });

  py::class_<SplitResult>(m, "Split")
      .def_property_readonly("train_graph", [](const SplitResult& s) { return s.train_graph; })
      .def_property_readonly("train_pos", [](const SplitResult& s) { return to_array(s.split.train_pos); })
      .def_property_readonly("val_pos", [](const SplitResult& s) { return to_array(s.split.val_pos); })
      .def_property_readonly("val_neg", [](const SplitResult& s) { return to_array(s.split.val_neg); })
      .def_property_readonly("test_pos", [](const SplitResult& s) { return to_array(s.split.test_pos); })
      .def_property_readonly("test_neg", [](const SplitResult& s) { return to_array(s.split.test_neg); });

  py::class_<ModelState>(m, "Model")
      .def_property_readonly("kind", [](const ModelState& s) { return std::string(to_string(s.kind)); })
      .def_property_readonly("params", [](const ModelState& s) { return s.params; })
      .def("embed", &embed, py::arg("graph"))
      .def("score", [](const ModelState& s, const Graph& g,
                       const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& pairs) {
        return score_pairs(embed(s, g), from_array(pairs));
      }, py::arg("graph"), py::arg("pairs"));

  m.def("load_dataset", [](const std::filesystem::path& dir, const std::string& name) {
    Dataset ds = load_dataset(dir, name);
    return py::make_tuple(std::move(ds.graph), ds.labels);
  }, py::arg("dir"), py::arg("name"), "Returns (graph, labels); labels is empty when the files carry none.");

  m.def("save_dataset", [](const std::filesystem::path& dir, const std::string& name, const Graph& g,
                           const std::vector<int>& labels) { save_dataset(Dataset{name, g, labels}, dir); },
        py::arg("dir"), py::arg("name"), py::arg("graph"), py::arg("labels") = std::vector<int>{});

  m.def("make_synthetic", [](std::size_t nodes, std::size_t features, std::size_t edges, std::size_t classes,
                             std::uint64_t seed) {
    SynthConfig c;
    c.nodes = nodes;
    c.features = features;
    c.edges = edges;
    c.classes = classes;
    c.seed = seed;
    Dataset ds = make_synthetic(c);
    return py::make_tuple(std::move(ds.graph), ds.labels);
  }, py::arg("nodes") = 2708, py::arg("features") = 1433, py::arg("edges") = 5278, py::arg("classes") = 7,
     py::arg("seed") = 7);

  m.def("split_edges", &split_edges, py::arg("graph"), py::arg("seed"));

  m.def("train", [](const std::string& kind, const SplitResult& split, std::uint64_t seed,
                    const std::map<std::string, std::string>& settings) {
    ExperimentConfig cfg;
    for (const auto& [k, v] : settings) apply_setting(cfg, "model." + k, v);
    py::gil_scoped_release release;
    return train(parse_model_kind(kind), split.train_graph, split.split, cfg.model_cfg, seed).state;
  }, py::arg("kind"), py::arg("split"), py::arg("seed") = 0, py::arg("settings") = std::map<std::string, std::string>{},
     "Trains with early stopping; `settings` are [model] config keys as strings.");

  m.def("auc", [](const std::vector<double>& pos, const std::vector<double>& neg) { return auc(pos, neg); },
        py::arg("pos_scores"), py::arg("neg_scores"));

  m.def("load_trigger", [](const std::filesystem::path& p) { return trigger_dict(load_trigger(p)); }, py::arg("path"));

  m.def("render_config", [](const std::string& text, const std::map<std::string, std::string>& overrides) {
    return render_config(config_from(text, overrides));
  }, py::arg("text") = "", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def("run", [](const std::string& verb, const std::string& text, const std::map<std::string, std::string>& overrides) {
    const ExperimentConfig cfg = config_from(text, overrides);
    std::ostringstream log;
    int code = 0;
    {
      py::gil_scoped_release release;
      if (verb == "run") code = run_experiment(cfg, log);
      else if (verb == "defend") code = run_defense(cfg, log);
      else if (verb == "transfer") code = run_transfer(cfg, log);
      else if (verb == "sensitivity") code = run_sensitivity(cfg, log);
      else throw std::invalid_argument("unknown verb '" + verb + "'");
    }
    return py::make_tuple(code, log.str());
  }, py::arg("verb"), py::arg("config") = "", py::arg("overrides") = std::map<std::string, std::string>{},
     "Runs an experiment verb. Returns (exit_code, log).");

  m.def("read_reports", [](const std::filesystem::path& dir) {
    py::list out;
    for (const auto& r : collect_reports(dir)) {
      py::dict d;
      d["dataset"] = r.dataset;
      d["model"] = r.model;
      d["attack"] = r.attack;
      d["seed"] = r.seed;
      d["asr"] = r.asr;
      d["amc"] = r.amc ? py::cast(*r.amc) : py::none();
      d["auc_clean"] = r.auc_clean;
      d["auc_backdoored"] = r.auc_backdoored;
      d["bpd"] = r.bpd;
      d["n_eval_targets"] = r.n_eval_targets;
      d["n_success"] = r.n_success;
      d["trigger_edges"] = r.trigger_edges;
      out.append(std::move(d));
    }
    return out;
  }, py::arg("run_dir"));

  m.def("export_viz", [](const std::filesystem::path& run_dir, const std::filesystem::path& out,
                         std::optional<std::string> model, std::optional<std::uint64_t> seed) {
    std::optional<ModelKind> kind;
    if (model) kind = parse_model_kind(*model);
    const VizSummary s = export_run(run_dir, kind, seed, out);
    py::dict d;
    d["nodes"] = s.nodes;
    d["injected"] = s.injected;
    d["original_edges"] = s.original_edges;
    d["trigger_edges"] = s.trigger_edges;
    d["target_edges"] = s.target_edges;
    return d;
  }, py::arg("run_dir"), py::arg("out"), py::arg("model") = py::none(), py::arg("seed") = py::none());
}
