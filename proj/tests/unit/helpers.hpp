#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "linkbackdoor/graph.hpp"
#include "linkbackdoor/rng.hpp"

namespace lbd::testing {

/// Connected random graph: a path through all nodes plus extra random edges,
/// binary features with roughly `density` ones.
inline Graph random_graph(std::size_t n, std::size_t extra_edges, std::size_t d, std::uint64_t seed,
                          double density = 0.3) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back(make_edge(static_cast<NodeId>(i), static_cast<NodeId>(i + 1)));
  for (std::size_t k = 0; k < extra_edges; ++k) {
    const auto a = static_cast<NodeId>(rng.below(n));
    const auto b = static_cast<NodeId>(rng.below(n));
    if (a != b) edges.push_back(make_edge(a, b));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.bernoulli(density) ? 1.0 : 0.0;
  return Graph(n, std::move(edges), std::move(x));
}

/// Central-difference derivative of f with respect to every entry of x.
inline Matrix finite_difference(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest entrywise mismatch, relative where the values are not tiny.
struct GradCheck {
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::size_t failures = 0;
  std::size_t checked = 0;
  double max_magnitude = 0.0;
};

inline GradCheck compare_gradients(const Matrix& analytic, const Matrix& numeric, double rel_tol = 1e-4,
                                   double abs_tol = 1e-7) {
  GradCheck c;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = numeric.data()[i];
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    ++c.checked;
    c.max_magnitude = std::max(c.max_magnitude, std::abs(a));
    c.worst_abs = std::max(c.worst_abs, diff);
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    if (scale > 1e-6) c.worst_rel = std::max(c.worst_rel, rel);
    if (diff > abs_tol && rel >= rel_tol) ++c.failures;
  }
  return c;
}

}  // namespace lbd::testing
