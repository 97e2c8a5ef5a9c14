#include "linkbackdoor/trigger.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::size_t Trigger::edge_count() const {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < pattern.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pattern.cols(); ++j) c += pattern(i, j) != 0.0;
  }
  return c;
}

std::vector<Edge> admissible_slots(std::size_t m, bool link_attackers) {
  std::vector<Edge> out;
  const auto s = static_cast<NodeId>(m + 2);
  for (NodeId a = 0; a < s; ++a) {
    for (NodeId b = a + 1; b < s; ++b) {
      if (b < 2) continue;
      if (a >= 2 && !link_attackers) continue;
      out.push_back({a, b});
    }
  }
  return out;
}

std::vector<std::string> trigger_violations(const Trigger& t, std::span<const Edge> admissible) {
  std::vector<std::string> v;
  const auto s = static_cast<Eigen::Index>(t.slot_count());
  if (t.pattern.rows() != s || t.pattern.cols() != s) {
    v.push_back("pattern is not " + std::to_string(s) + "x" + std::to_string(s));
    return v;
  }
  for (Eigen::Index i = 0; i < s; ++i) {
    if (t.pattern(i, i) != 0.0) v.push_back("nonzero diagonal at slot " + std::to_string(i));
    for (Eigen::Index j = 0; j < s; ++j) {
      if (t.pattern(i, j) != t.pattern(j, i)) v.push_back("asymmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      if (t.pattern(i, j) != 0.0 && t.pattern(i, j) != 1.0) v.push_back("non-binary entry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  if (t.pattern(0, 1) != 0.0) v.push_back("target pair slot t0-t1 is wired");
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = i + 1; j < s; ++j) {
      if (t.pattern(i, j) == 0.0) continue;
      const Edge e{static_cast<NodeId>(i), static_cast<NodeId>(j)};
      if (std::find(admissible.begin(), admissible.end(), e) == admissible.end()) {
        v.push_back("edge on inadmissible slot (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  if (t.edge_count() > t.q_a) {
    v.push_back(std::to_string(t.edge_count()) + " edges exceed budget " + std::to_string(t.q_a));
  }
  if (t.features.rows() != static_cast<Eigen::Index>(t.m)) v.push_back("feature rows != m");
  if ((t.features.array() < 0.0).any() || (t.features.array() > 1.0).any()) v.push_back("feature outside [0,1]");
  if (t.reference.size() != 0) {
    if (t.reference.rows() != t.features.rows() || t.reference.cols() != t.features.cols()) {
      v.push_back("reference shape differs from features");
    } else {
      const auto changed = static_cast<std::size_t>((t.features.array() != t.reference.array()).count());
      if (changed > t.q_x) v.push_back(std::to_string(changed) + " modified features exceed budget " + std::to_string(t.q_x));
    }
  }
  if (!t.anchors.empty() && t.anchors.size() != t.m) v.push_back("anchor count != m");
  return v;
}

Trigger gen_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::size_t q_x, double alpha,
                    std::uint64_t seed) {
  if (m == 0) throw std::invalid_argument("gen_trigger: m must be at least 1");
  if (g.n_nodes() == 0) throw std::invalid_argument("gen_trigger: empty graph");
  Rng rng(derive_seed(seed, "gen_trigger"));
  Trigger t;
  t.m = m;
  t.q_a = q_a;
  t.q_x = q_x;
  t.alpha = alpha;
  const auto s = static_cast<Eigen::Index>(m + 2);
  t.pattern = Matrix::Zero(s, s);
  std::vector<Edge> chosen;
  for (const auto& e : admissible_slots(m)) {
    if (rng.bernoulli(0.5)) chosen.push_back(e);
  }
  rng.shuffle(chosen);
  if (chosen.size() > q_a) chosen.resize(q_a);
  for (const auto& e : chosen) t.pattern(e.u, e.v) = t.pattern(e.v, e.u) = 1.0;
  t.features.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g.n_features()));
  for (std::size_t k = 0; k < m; ++k) {
    t.features.row(static_cast<Eigen::Index>(k)) = g.features().row(static_cast<Eigen::Index>(rng.below(g.n_nodes())));
  }
  t.reference = t.features;
  return t;
}

Matrix symmetrize(const Matrix& grad) {
  if (grad.rows() != grad.cols()) throw std::invalid_argument("symmetrize: matrix is not square");
  Matrix out = (grad + grad.transpose()) * 0.5;
  out.diagonal().setZero();
  return out;
}

Trigger update_trigger(const Trigger& t, const Matrix& grad_adj_sym, const Matrix& grad_features,
                       std::span<const Edge> admissible) {
  const auto s = static_cast<Eigen::Index>(t.slot_count());
  if (grad_adj_sym.rows() != s || grad_adj_sym.cols() != s) {
    throw std::invalid_argument("update_trigger: structure gradient must be " + std::to_string(s) + "x" + std::to_string(s));
  }
  if (grad_features.rows() != t.features.rows() || grad_features.cols() != t.features.cols()) {
    throw std::invalid_argument("update_trigger: feature gradient shape mismatch");
  }
  Trigger out = t;

  struct Cand {
    double mag;
    Eigen::Index index;
  };
  auto by_rank = [](const Cand& a, const Cand& b) { return a.mag != b.mag ? a.mag > b.mag : a.index < b.index; };

  std::vector<Cand> flips;
  for (const auto& e : admissible) {
    if (e.u == 0 && e.v == 1) continue;
    const double g = grad_adj_sym(e.u, e.v);
    const double cur = t.pattern(e.u, e.v);
    if (clamp01(cur - sign(g)) != cur) flips.push_back({std::abs(g), e.u * s + e.v});
  }
  std::sort(flips.begin(), flips.end(), by_rank);
  std::size_t edges = t.edge_count();
  for (const auto& c : flips) {
    const Eigen::Index i = c.index / s, j = c.index % s;
    const double next = clamp01(out.pattern(i, j) - sign(grad_adj_sym(i, j)));
    if (next > out.pattern(i, j)) {
      if (edges >= t.q_a) continue;
      ++edges;
    } else {
      --edges;
    }
    out.pattern(i, j) = out.pattern(j, i) = next;
  }

  if (out.reference.size() == 0) out.reference = t.features;
  if (out.reference.rows() != t.features.rows() || out.reference.cols() != t.features.cols()) {
    throw std::invalid_argument("update_trigger: reference shape differs from features");
  }
  std::vector<Cand> feats;
  for (Eigen::Index k = 0; k < t.features.size(); ++k) {
    const double g = grad_features.data()[k];
    const double cur = t.features.data()[k];
    if (clamp01(cur - t.alpha * sign(g)) != cur) feats.push_back({std::abs(g), k});
  }
  std::sort(feats.begin(), feats.end(), by_rank);
  auto changed = static_cast<std::size_t>((out.features.array() != out.reference.array()).count());
  for (const auto& c : feats) {
    const Eigen::Index k = c.index;
    const double ref = out.reference.data()[k];
    const double cur = out.features.data()[k];
    const double next = clamp01(cur - t.alpha * sign(grad_features.data()[k]));
    if (cur == ref && next != ref) {
      if (changed >= t.q_x) continue;
      ++changed;
    } else if (cur != ref && next == ref) {
      --changed;
    }
    out.features.data()[k] = next;
  }
  return out;
}

MixedGraph mix_trigger(const Graph& g, const Trigger& t, std::span<const Edge> targets, bool per_target) {
  const auto n = static_cast<NodeId>(g.n_nodes());
  if (!t.anchors.empty() && t.anchors.size() != t.m) throw std::invalid_argument("mix_trigger: anchor count != m");
  for (NodeId a : t.anchors) {
    if (a < 0 || a >= n) throw std::invalid_argument("mix_trigger: anchor " + std::to_string(a) + " outside the graph");
  }
  MixedGraph out;
  out.n_original = g.n_nodes();
  const std::size_t copies = !t.injects() ? 0 : per_target ? targets.size() : 1;
  for (std::size_t k = 0; k < copies * t.m; ++k) out.injected.push_back(n + static_cast<NodeId>(k));
  std::vector<Edge> edges = g.edges();
  const auto s = static_cast<NodeId>(t.slot_count());
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const Edge tg = targets[ti];
    if (tg.u < 0 || tg.v < 0 || tg.u >= n || tg.v >= n || tg.u == tg.v) {
      throw std::invalid_argument("mix_trigger: target (" + std::to_string(tg.u) + "," + std::to_string(tg.v) + ") invalid");
    }
    if (g.has_edge(tg.u, tg.v)) {
      throw std::invalid_argument("mix_trigger: target (" + std::to_string(tg.u) + "," + std::to_string(tg.v) + ") already linked");
    }
    Placement pl;
    pl.target = tg;
    for (std::size_t k = 0; k < t.m; ++k) {
      if (!t.anchors.empty()) {
        const NodeId a = t.anchors[k];
        if (a == tg.u || a == tg.v) throw std::invalid_argument("mix_trigger: target touches anchor " + std::to_string(a));
        pl.attackers.push_back(a);
      } else {
        const std::size_t c = per_target ? ti : 0;
        pl.attackers.push_back(out.injected[c * t.m + k]);
      }
    }
    auto node_of = [&](NodeId slot) { return slot == 0 ? tg.u : slot == 1 ? tg.v : pl.attackers[static_cast<std::size_t>(slot - 2)]; };
    for (NodeId a = 0; a < s; ++a) {
      for (NodeId b = a + 1; b < s; ++b) {
        if (t.pattern(a, b) == 0.0 || (a == 0 && b == 1)) continue;
        const NodeId x = node_of(a), y = node_of(b);
        if (x == y) continue;
        const Edge e = make_edge(x, y);
        if (e.v < n && g.has_edge(e.u, e.v)) continue;
        edges.push_back(e);
        out.trigger_edges.push_back(e);
      }
    }
    out.placements.push_back(std::move(pl));
  }
  std::sort(out.trigger_edges.begin(), out.trigger_edges.end());
  out.trigger_edges.erase(std::unique(out.trigger_edges.begin(), out.trigger_edges.end()), out.trigger_edges.end());

  const std::size_t total = g.n_nodes() + out.injected.size();
  Matrix x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(g.n_features()));
  x.topRows(n) = g.features();
  if (!out.injected.empty() && t.features.cols() != x.cols()) {
    throw std::invalid_argument("mix_trigger: trigger features have " + std::to_string(t.features.cols()) +
                                " columns, graph has " + std::to_string(x.cols()));
  }
  for (std::size_t c = 0; c < copies; ++c) {
    x.middleRows(n + static_cast<Eigen::Index>(c * t.m), static_cast<Eigen::Index>(t.m)) = t.features;
  }
  out.graph = Graph(total, std::move(edges), std::move(x));
  return out;
}

void save_trigger(const Trigger& t, const std::filesystem::path& path, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write trigger file " + path.string());
  out << "# linkbackdoor trigger v1\n";
  if (!comment.empty()) {
    std::istringstream cs(comment);
    std::string line;
    while (std::getline(cs, line)) out << "# " << line << '\n';
  }
  out << "m=" << t.m << " q_a=" << t.q_a << " q_x=" << t.q_x << " alpha=" << fmt(t.alpha) << " d=" << t.features.cols() << '\n';
  out << "anchors " << t.anchors.size();
  for (NodeId a : t.anchors) out << ' ' << a;
  out << '\n';
  std::vector<Edge> es;
  for (Eigen::Index i = 0; i < t.pattern.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < t.pattern.cols(); ++j) {
      if (t.pattern(i, j) != 0.0) es.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  out << "edges " << es.size() << '\n';
  for (const auto& e : es) out << e.u << ' ' << e.v << '\n';
  auto rows = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << fmt(m(i, j));
      out << '\n';
    }
  };
  out << "features\n";
  rows(t.features);
  out << "reference\n";
  rows(t.reference.size() ? t.reference : t.features);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Trigger load_trigger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trigger file " + path.string());
  auto fail = [&](const std::string& what) -> void {
    throw std::runtime_error("trigger file " + path.string() + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "# linkbackdoor trigger v1") fail("missing header");
  auto next = [&]() {
    while (std::getline(in, line)) {
      if (!line.starts_with("#")) return true;
    }
    return false;
  };
  Trigger t;
  std::size_t d = 0;
  if (!next()) fail("truncated");
  {
    std::istringstream ls(line);
    std::string tok;
    int seen = 0;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("bad token '" + tok + "'");
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "m") t.m = std::stoull(val);
      else if (key == "q_a") t.q_a = std::stoull(val);
      else if (key == "q_x") t.q_x = std::stoull(val);
      else if (key == "alpha") t.alpha = std::stod(val);
      else if (key == "d") d = std::stoull(val);
      else fail("unknown key '" + key + "'");
      ++seen;
    }
    if (seen != 5) fail("parameter line incomplete");
  }
  if (!next()) fail("truncated");
  {
    std::istringstream ls(line);
    std::string tag;
    std::size_t k = 0;
    if (!(ls >> tag >> k) || tag != "anchors") fail("expected anchors line");
    t.anchors.resize(k);
    for (auto& a : t.anchors) {
      if (!(ls >> a)) fail("anchors line short");
    }
  }
  const auto s = static_cast<Eigen::Index>(t.m + 2);
  t.pattern = Matrix::Zero(s, s);
  if (!next()) fail("truncated");
  {
    std::istringstream ls(line);
    std::string tag;
    std::size_t k = 0;
    if (!(ls >> tag >> k) || tag != "edges") fail("expected edges line");
    for (std::size_t i = 0; i < k; ++i) {
      if (!next()) fail("truncated edge list");
      std::istringstream es(line);
      Eigen::Index a = -1, b = -1;
      if (!(es >> a >> b) || a < 0 || b < 0 || a >= s || b >= s || a == b) fail("bad edge '" + line + "'");
      t.pattern(a, b) = t.pattern(b, a) = 1.0;
    }
  }
  auto read_rows = [&](const char* tag, Matrix& m) {
    if (!next() || line != tag) fail(std::string("expected ") + tag + " line");
    m.resize(static_cast<Eigen::Index>(t.m), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!next()) fail(std::string("truncated ") + tag);
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        while (p < end && *p == ' ') ++p;
        double v = 0.0;
        auto [q, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) fail(std::string("bad ") + tag + " row " + std::to_string(i));
        m(i, j) = v;
        p = q;
      }
    }
  };
  read_rows("features", t.features);
  read_rows("reference", t.reference);
  return t;
}

}  // namespace lbd
