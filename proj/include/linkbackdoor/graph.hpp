#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace lbd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using NodeId = std::int32_t;

/// Unordered node pair stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  auto operator<=>(const Edge&) const = default;
};

/// Canonicalizes (a, b); throws on a self pair.
Edge make_edge(NodeId a, NodeId b);

/// Undirected, unweighted, attributed graph. Immutable after construction.
///
/// Adjacency is kept as sorted neighbor lists; dense n x n matrices are only
/// produced on request.
class Graph {
 public:
  Graph() = default;

  /// Validates: node ids in range, no self loops, features in [0,1], one row per
  /// node. Duplicate edges are merged.
  Graph(std::size_t n_nodes, std::vector<Edge> edges, Matrix features);

  std::size_t n_nodes() const noexcept { return neighbors_.size(); }
  std::size_t n_features() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  std::size_t n_edges() const noexcept { return edges_.size(); }

  const Matrix& features() const noexcept { return features_; }
  /// Sorted canonical edge list.
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::span<const NodeId> neighbors(NodeId u) const { return neighbors_.at(static_cast<std::size_t>(u)); }
  std::size_t degree(NodeId u) const { return neighbors(u).size(); }
  bool has_edge(NodeId a, NodeId b) const;

  Matrix dense_adjacency() const;
  SparseMatrix adjacency() const;

 private:
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<Edge> edges_;
  Matrix features_;
};

/// Train/validation/test partition of the edge set, plus fixed negative pairs.
struct DataSplit {
  std::vector<Edge> train_pos;
  std::vector<Edge> val_pos;
  std::vector<Edge> val_neg;
  std::vector<Edge> test_pos;
  std::vector<Edge> test_neg;
  std::uint64_t seed = 0;
};

struct SplitResult {
  DataSplit split;
  Graph train_graph;  ///< same nodes and features, train_pos edges only
};

/// 85:5:10 split. Validation and test sizes are floor(0.05 E) and floor(0.10 E),
/// the remainder goes to training. Negatives are sampled from non-edges of the
/// full graph, disjoint across validation and test. Requires at least 20 edges.
SplitResult split_edges(const Graph& g, std::uint64_t seed);

/// k distinct unordered non-edges of g, none in `exclude`, no self pairs.
/// Throws std::invalid_argument when fewer than k candidates exist.
std::vector<Edge> sample_negatives(const Graph& g, std::size_t k,
                                   std::span<const Edge> exclude, std::uint64_t seed);

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
struct NormalizedAdjacency {
  SparseMatrix matrix;

  Matrix dense() const { return Matrix(matrix); }
};

NormalizedAdjacency normalize_adjacency(const Graph& g);
/// Same transform for an explicit symmetric 0/1 matrix with zero diagonal.
NormalizedAdjacency normalize_adjacency(const Matrix& adjacency);

/// Appends m isolated nodes carrying `init_features` (m x d, entries in [0,1]).
Graph inject_nodes(const Graph& g, std::size_t m, const Matrix& init_features);

/// Graph with the same nodes and features and a different edge set.
Graph with_edges(const Graph& g, std::vector<Edge> edges);

}  // namespace lbd
