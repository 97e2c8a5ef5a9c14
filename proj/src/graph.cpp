#include "linkbackdoor/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace {

std::uint64_t pack(const Edge& e) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.u)) << 32) |
         static_cast<std::uint32_t>(e.v);
}

void check_features(const Matrix& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double f = x.data()[i];
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::invalid_argument("Graph: feature entries must lie in [0,1], got " +
                                  std::to_string(f));
    }
  }
}

}  // namespace

Edge make_edge(NodeId a, NodeId b) {
  if (a == b) throw std::invalid_argument("make_edge: self pair (" + std::to_string(a) + ")");
  return a < b ? Edge{a, b} : Edge{b, a};
}

Graph::Graph(std::size_t n_nodes, std::vector<Edge> edges, Matrix features)
    : neighbors_(n_nodes), features_(std::move(features)) {
  if (static_cast<std::size_t>(features_.rows()) != n_nodes) {
    throw std::invalid_argument("Graph: feature matrix has " + std::to_string(features_.rows()) +
                                " rows for " + std::to_string(n_nodes) + " nodes");
  }
  check_features(features_);
  for (auto& e : edges) {
    if (e.u < 0 || e.v < 0 || static_cast<std::size_t>(e.u) >= n_nodes ||
        static_cast<std::size_t>(e.v) >= n_nodes) {
      throw std::invalid_argument("Graph: edge (" + std::to_string(e.u) + "," +
                                  std::to_string(e.v) + ") out of range");
    }
    e = make_edge(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  for (const auto& e : edges_) {
    neighbors_[static_cast<std::size_t>(e.u)].push_back(e.v);
    neighbors_[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_nodes() ||
      static_cast<std::size_t>(b) >= n_nodes()) {
    return false;
  }
  const auto& nb = neighbors_[static_cast<std::size_t>(a)];
  return std::binary_search(nb.begin(), nb.end(), b);
}

Matrix Graph::dense_adjacency() const {
  const auto n = static_cast<Eigen::Index>(n_nodes());
  Matrix a = Matrix::Zero(n, n);
  for (const auto& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

SparseMatrix Graph::adjacency() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(edges_.size() * 2);
  for (const auto& e : edges_) {
    t.emplace_back(e.u, e.v, 1.0);
    t.emplace_back(e.v, e.u, 1.0);
  }
  const auto n = static_cast<Eigen::Index>(n_nodes());
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

std::vector<Edge> sample_negatives(const Graph& g, std::size_t k, std::span<const Edge> exclude,
                                   std::uint64_t seed) {
  const std::uint64_t n = g.n_nodes();
  std::unordered_set<std::uint64_t> banned;
  for (const auto& raw : exclude) {
    const Edge e = make_edge(raw.u, raw.v);
    if (!g.has_edge(e.u, e.v)) banned.insert(pack(e));
  }
  const std::uint64_t total_pairs = n < 2 ? 0 : n * (n - 1) / 2;
  const std::uint64_t available = total_pairs - g.n_edges() - banned.size();
  if (k > available) {
    throw std::invalid_argument("sample_negatives: requested " + std::to_string(k) +
                                " negatives but only " + std::to_string(available) +
                                " non-edges are available");
  }
  Rng rng(seed);
  std::vector<Edge> out;
  out.reserve(k);
  if (k == 0) return out;

  if (total_pairs <= 2'000'000 || available <= 4 * k) {
    std::vector<Edge> candidates;
    candidates.reserve(static_cast<std::size_t>(available));
    for (NodeId u = 0; u < static_cast<NodeId>(n); ++u) {
      for (NodeId v = u + 1; v < static_cast<NodeId>(n); ++v) {
        if (g.has_edge(u, v) || banned.count(pack(Edge{u, v}))) continue;
        candidates.push_back(Edge{u, v});
      }
    }
    for (std::size_t idx : rng.sample_without_replacement(candidates.size(), k)) {
      out.push_back(candidates[idx]);
    }
    return out;
  }

  std::unordered_set<std::uint64_t> taken;
  while (out.size() < k) {
    const auto a = static_cast<NodeId>(rng.below(n));
    const auto b = static_cast<NodeId>(rng.below(n));
    if (a == b || g.has_edge(a, b)) continue;
    const Edge e = make_edge(a, b);
    const auto key = pack(e);
    if (banned.count(key) || !taken.insert(key).second) continue;
    out.push_back(e);
  }
  return out;
}

SplitResult split_edges(const Graph& g, std::uint64_t seed) {
  const std::size_t e = g.n_edges();
  if (e < 20) {
    throw std::invalid_argument("split_edges: graph has " + std::to_string(e) +
                                " edges, at least 20 required");
  }
  const std::size_t n_val = e * 5 / 100;
  const std::size_t n_test = e * 10 / 100;

  Rng rng(derive_seed(seed, "split"));
  const auto perm = rng.permutation(e);
  DataSplit s;
  s.seed = seed;
  for (std::size_t i = 0; i < e; ++i) {
    const Edge& edge = g.edges()[perm[i]];
    if (i < n_test) {
      s.test_pos.push_back(edge);
    } else if (i < n_test + n_val) {
      s.val_pos.push_back(edge);
    } else {
      s.train_pos.push_back(edge);
    }
  }
  std::sort(s.test_pos.begin(), s.test_pos.end());
  std::sort(s.val_pos.begin(), s.val_pos.end());
  std::sort(s.train_pos.begin(), s.train_pos.end());

  s.test_neg = sample_negatives(g, n_test, {}, derive_seed(seed, "test_neg"));
  s.val_neg = sample_negatives(g, n_val, s.test_neg, derive_seed(seed, "val_neg"));

  Graph train = with_edges(g, s.train_pos);
  return SplitResult{std::move(s), std::move(train)};
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt[static_cast<std::size_t>(i)] =
        1.0 / std::sqrt(1.0 + static_cast<double>(g.degree(static_cast<NodeId>(i))));
  }
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(g.n_edges() * 2 + static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = inv_sqrt[static_cast<std::size_t>(i)];
    t.emplace_back(i, i, di * di);
  }
  for (const auto& e : g.edges()) {
    const double w = inv_sqrt[static_cast<std::size_t>(e.u)] * inv_sqrt[static_cast<std::size_t>(e.v)];
    t.emplace_back(e.u, e.v, w);
    t.emplace_back(e.v, e.u, w);
  }
  NormalizedAdjacency out{SparseMatrix(n, n)};
  out.matrix.setFromTriplets(t.begin(), t.end());
  return out;
}

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency) {
  const auto n = adjacency.rows();
  if (adjacency.cols() != n) throw std::invalid_argument("normalize_adjacency: matrix not square");
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw std::invalid_argument("normalize_adjacency: nonzero diagonal");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (adjacency(i, j) != adjacency(j, i)) {
        throw std::invalid_argument("normalize_adjacency: matrix not symmetric");
      }
      if (adjacency(i, j) != 0.0) edges.push_back(Edge{static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  }
  return normalize_adjacency(Graph(static_cast<std::size_t>(n), std::move(edges), Matrix::Zero(n, 0)));
}

Graph inject_nodes(const Graph& g, std::size_t m, const Matrix& init_features) {
  if (static_cast<std::size_t>(init_features.rows()) != m ||
      static_cast<std::size_t>(init_features.cols()) != g.n_features()) {
    throw std::invalid_argument("inject_nodes: expected " + std::to_string(m) + "x" +
                                std::to_string(g.n_features()) + " features, got " +
                                std::to_string(init_features.rows()) + "x" +
                                std::to_string(init_features.cols()));
  }
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  Matrix x(n + static_cast<Eigen::Index>(m), g.features().cols());
  x.topRows(n) = g.features();
  x.bottomRows(static_cast<Eigen::Index>(m)) = init_features;
  return Graph(g.n_nodes() + m, g.edges(), std::move(x));
}

Graph with_edges(const Graph& g, std::vector<Edge> edges) {
  return Graph(g.n_nodes(), std::move(edges), g.features());
}

}  // namespace lbd
