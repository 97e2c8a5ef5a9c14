#include "linkbackdoor/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string_view>
#include <unordered_map>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_number(std::string_view tok, const std::string& where) {
  T value{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw std::runtime_error(where + ": cannot parse '" + std::string(tok) + "'");
  }
  return value;
}

std::map<std::string, std::string> parse_header(const std::string& line) {
  std::map<std::string, std::string> kv;
  for (auto tok : split_ws(line)) {
    const auto eq = tok.find('=');
    if (eq != std::string_view::npos) {
      kv.emplace(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
    }
  }
  return kv;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return in;
}

void write_feature(std::ostream& os, double v) {
  if (v == 0.0) {
    os << '0';
  } else if (v == 1.0) {
    os << '1';
  } else {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
  }
}

}  // namespace

Dataset load_dataset(const fs::path& dir, const std::string& name) {
  const fs::path node_path = dir / (name + ".nodes");
  const fs::path edge_path = dir / (name + ".edges");
  auto nodes_in = open_in(node_path);
  std::string line;
  if (!std::getline(nodes_in, line) || line.rfind("# linkbackdoor", 0) != 0) {
    throw std::runtime_error(node_path.string() + ": missing '# linkbackdoor' header");
  }
  const auto header = parse_header(line);
  const auto n = std::stoul(header.at("nodes"));
  const auto d = std::stoul(header.at("features"));
  const bool has_labels = header.count("labels") && header.at("labels") == "1";

  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(nodes_in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    const std::size_t expected = 1 + d + (has_labels ? 1 : 0);
    const std::string where = node_path.string() + ":" + std::to_string(row + 2);
    if (toks.size() != expected) {
      throw std::runtime_error(where + ": expected " + std::to_string(expected) + " fields, got " +
                               std::to_string(toks.size()));
    }
    if (row >= n || parse_number<std::size_t>(toks[0], where) != row) {
      throw std::runtime_error(where + ": node ids must be 0..N-1 in order");
    }
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = parse_number<double>(toks[1 + j], where);
    }
    if (has_labels) labels.push_back(parse_number<int>(toks.back(), where));
    ++row;
  }
  if (row != n) {
    throw std::runtime_error(node_path.string() + ": header says " + std::to_string(n) +
                             " nodes, file has " + std::to_string(row));
  }

  auto edges_in = open_in(edge_path);
  std::vector<Edge> edges;
  std::size_t lineno = 0;
  while (std::getline(edges_in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto toks = split_ws(line);
    const std::string where = edge_path.string() + ":" + std::to_string(lineno);
    if (toks.size() != 2) throw std::runtime_error(where + ": expected 'u v'");
    edges.push_back(make_edge(parse_number<NodeId>(toks[0], where), parse_number<NodeId>(toks[1], where)));
  }
  return Dataset{name, Graph(n, std::move(edges), std::move(x)), std::move(labels)};
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  const Graph& g = ds.graph;
  const bool has_labels = !ds.labels.empty();
  if (has_labels && ds.labels.size() != g.n_nodes()) {
    throw std::invalid_argument("save_dataset: label count does not match node count");
  }
  {
    std::ofstream os(dir / (ds.name + ".nodes"), std::ios::binary);
    os << "# linkbackdoor nodes=" << g.n_nodes() << " features=" << g.n_features()
       << " labels=" << (has_labels ? 1 : 0) << '\n';
    const Matrix& x = g.features();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      os << i;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        os << ' ';
        write_feature(os, x(i, j));
      }
      if (has_labels) os << ' ' << ds.labels[static_cast<std::size_t>(i)];
      os << '\n';
    }
    if (!os) throw std::runtime_error("save_dataset: write failed for " + ds.name + ".nodes");
  }
  std::ofstream os(dir / (ds.name + ".edges"), std::ios::binary);
  os << "# linkbackdoor edges=" << g.n_edges() << '\n';
  for (const auto& e : g.edges()) os << e.u << ' ' << e.v << '\n';
  if (!os) throw std::runtime_error("save_dataset: write failed for " + ds.name + ".edges");
}

PrepareReport convert_linqs(const fs::path& raw_dir, const std::string& name, const fs::path& out_dir) {
  const fs::path content = raw_dir / (name + ".content");
  const fs::path cites = raw_dir / (name + ".cites");
  for (const auto& p : {content, cites}) {
    if (!fs::exists(p)) {
      throw std::runtime_error("prepare: unrecognized dataset layout, missing file " + p.string());
    }
  }

  std::unordered_map<std::string, NodeId> index;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> label_names;
  std::size_t d = 0;
  {
    auto in = open_in(content);
    std::string line;
    while (std::getline(in, line)) {
      const auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() < 3) throw std::runtime_error(content.string() + ": short line");
      const std::size_t width = toks.size() - 2;
      if (d == 0) d = width;
      if (width != d) throw std::runtime_error(content.string() + ": inconsistent feature width");
      std::vector<double> row(d);
      for (std::size_t j = 0; j < d; ++j) row[j] = parse_number<double>(toks[1 + j], content.string());
      const std::string id(toks.front());
      if (index.count(id)) continue;  // duplicated node rows: keep the first
      index.emplace(id, static_cast<NodeId>(rows.size()));
      rows.push_back(std::move(row));
      label_names.emplace_back(toks.back());
    }
  }
  std::vector<std::string> classes = label_names;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  PrepareReport rep;
  rep.name = name;
  std::vector<Edge> edges;
  {
    auto in = open_in(cites);
    std::string line;
    while (std::getline(in, line)) {
      const auto toks = split_ws(line);
      if (toks.empty()) continue;
      ++rep.raw_edge_lines;
      if (toks.size() != 2) throw std::runtime_error(cites.string() + ": expected two ids per line");
      const auto a = index.find(std::string(toks[0]));
      const auto b = index.find(std::string(toks[1]));
      if (a == index.end() || b == index.end() || a->second == b->second) {
        ++rep.dropped_lines;
        continue;
      }
      edges.push_back(make_edge(a->second, b->second));
    }
  }

  const auto n = rows.size();
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), label_names[i]) - classes.begin());
  }
  Dataset ds{name, Graph(n, std::move(edges), std::move(x)), std::move(labels)};
  save_dataset(ds, out_dir);

  rep.nodes = n;
  rep.features = d;
  rep.classes = classes.size();
  rep.unique_edges = ds.graph.n_edges();
  return rep;
}

Dataset make_synthetic(const SynthConfig& cfg) {
  if (cfg.nodes < 2 || cfg.classes == 0 || cfg.features == 0) {
    throw std::invalid_argument("make_synthetic: nodes >= 2, classes >= 1, features >= 1 required");
  }
  Rng rng(cfg.seed);
  const std::size_t n = cfg.nodes;
  const std::size_t k = cfg.classes;
  const std::size_t d = cfg.features;

  std::vector<int> labels(n);
  std::vector<std::vector<NodeId>> members(k);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.below(k));
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<NodeId>(i));
  }
  // Each class is cut into small groups that link and write alike.
  std::vector<std::size_t> group(n);
  std::vector<std::vector<NodeId>> groups;
  for (const auto& mem : members) {
    const std::size_t size = std::max<std::size_t>(2, cfg.group_size);
    const std::size_t count = std::max<std::size_t>(1, mem.size() / size);
    const std::size_t first = groups.size();
    groups.resize(first + count);
    for (std::size_t j = 0; j < mem.size(); ++j) {
      const std::size_t gi = first + j % count;
      group[static_cast<std::size_t>(mem[j])] = gi;
      groups[gi].push_back(mem[j]);
    }
  }

  // Expected degrees with a Pareto tail (Chung-Lu style endpoint sampling).
  std::vector<double> weight(n);
  for (auto& w : weight) w = std::pow(1.0 - rng.uniform(), -1.0 / (cfg.degree_exponent - 1.0));
  auto cumulative = [&](const std::vector<NodeId>& pool) {
    std::vector<double> c(pool.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) c[i] = (acc += weight[static_cast<std::size_t>(pool[i])]);
    return c;
  };
  std::vector<NodeId> everyone(n);
  for (std::size_t i = 0; i < n; ++i) everyone[i] = static_cast<NodeId>(i);
  const auto all_cum = cumulative(everyone);
  std::vector<std::vector<double>> class_cum(k);
  for (std::size_t c = 0; c < k; ++c) class_cum[c] = cumulative(members[c]);
  std::vector<std::vector<double>> group_cum(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) group_cum[gi] = cumulative(groups[gi]);
  auto draw = [&](const std::vector<NodeId>& pool, const std::vector<double>& cum) {
    const double r = rng.uniform() * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), r);
    return pool[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(pool.size()) - 1))];
  };

  const std::uint64_t max_edges = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::size_t target_edges = static_cast<std::size_t>(std::min<std::uint64_t>(cfg.edges, max_edges / 2));
  std::vector<Edge> edges;
  std::unordered_map<std::uint64_t, bool> present;
  std::size_t guard = 0;
  while (edges.size() < target_edges && guard++ < target_edges * 200) {
    const NodeId a = draw(everyone, all_cum);
    NodeId b;
    const auto ca = static_cast<std::size_t>(labels[static_cast<std::size_t>(a)]);
    const std::size_t ga = group[static_cast<std::size_t>(a)];
    if (rng.bernoulli(cfg.locality) && groups[ga].size() > 1) {
      b = draw(groups[ga], group_cum[ga]);
    } else if (rng.bernoulli(cfg.homophily) && members[ca].size() > 1) {
      b = draw(members[ca], class_cum[ca]);
    } else {
      b = draw(everyone, all_cum);
    }
    if (a == b) continue;
    const Edge e = make_edge(a, b);
    const auto key = (static_cast<std::uint64_t>(e.u) << 32) | static_cast<std::uint32_t>(e.v);
    if (!present.emplace(key, true).second) continue;
    edges.push_back(e);
  }

  // Each class owns a topic: a random subset of words with Zipf-like weights.
  const std::size_t topic_size = std::max<std::size_t>(8, d / (2 * k));
  std::vector<std::vector<std::size_t>> topics(k);
  for (auto& t : topics) t = rng.sample_without_replacement(d, std::min(topic_size, d));
  std::vector<std::vector<std::size_t>> subtopics(groups.size());
  for (auto& t : subtopics) t = rng.sample_without_replacement(d, std::min<std::size_t>(6, d));
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& topic = topics[static_cast<std::size_t>(labels[i])];
    const auto& sub = subtopics[group[i]];
    const auto words = static_cast<std::size_t>(std::max(1.0, cfg.words_per_node * (0.5 + rng.uniform())));
    for (std::size_t w = 0; w < words; ++w) {
      std::size_t j;
      if (rng.bernoulli(cfg.group_topic_share)) {
        j = sub[rng.below(sub.size())];
      } else if (rng.bernoulli(cfg.topic_share)) {
        // Zipf over the topic list: favour its head terms.
        const double u = rng.uniform();
        j = topic[std::min(topic.size() - 1, static_cast<std::size_t>(u * u * static_cast<double>(topic.size())))];
      } else {
        j = rng.below(d);
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  return Dataset{cfg.name, Graph(n, std::move(edges), std::move(x)), std::move(labels)};
}

}  // namespace lbd
