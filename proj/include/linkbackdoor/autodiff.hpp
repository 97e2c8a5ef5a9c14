#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "linkbackdoor/graph.hpp"

/// Reverse-mode differentiation over dense row-major matrices.
///
/// A Tape records every primitive whose operands require gradients; a single
/// reverse sweep over the record produces gradients for all leaves, including
/// model inputs such as trigger adjacency entries and injected features.
/// Tapes are single-threaded; use one tape per computation.
namespace lbd::ad {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid as long as the
/// owning tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Convenience accessor for 1x1 values.
  double scalar() const;
  bool requires_grad() const;
  int id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Accumulates upstream gradients during the reverse sweep.
class GradSink {
 public:
  bool wants(const Var& v) const;
  void add(const Var& v, Matrix g);

 private:
  friend class Tape;
  GradSink(const Tape& tape, std::vector<Matrix>& grads) : tape_(tape), grads_(grads) {}
  const Tape& tape_;
  std::vector<Matrix>& grads_;
};

/// Receives d loss / d output, the node's own output value, and the sink.
using BackwardFn = std::function<void(const Matrix& grad_out, const Matrix& out, GradSink& sink)>;

/// Result of a backward pass: d loss / d v for every v that requires grad.
class Gradients {
 public:
  /// Zero matrix of v's shape when v does not influence the loss.
  const Matrix& operator[](const Var& v) const;

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  /// Records a derived value. When no parent requires grad the backward
  /// closure is dropped and the result is a constant.
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  /// Reverse sweep from a 1x1 loss. Throws std::invalid_argument otherwise.
  Gradients backward(const Var& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Sparsity pattern with explicit (row, col) per stored entry, used when the
/// entry values themselves are differentiable.
struct EdgeStructure {
  Eigen::Index n_rows = 0;
  Eigen::Index n_cols = 0;
  std::vector<int> row;  ///< sorted ascending
  std::vector<int> col;
  std::vector<int> row_ptr;  ///< CSR offsets into row/col, size n_rows + 1

  std::size_t nnz() const noexcept { return row.size(); }
  /// Builds from arbitrary (row, col) pairs; entries are kept in the given
  /// order within each row after a stable sort by row. `order` receives the
  /// position each input entry moved to.
  static EdgeStructure from_entries(Eigen::Index n_rows, Eigen::Index n_cols,
                                    std::span<const std::pair<int, int>> entries,
                                    std::vector<int>* order = nullptr);
};

// ---- Primitives -----------------------------------------------------------
// Every primitive validates shapes and throws std::invalid_argument naming
// itself on mismatch.

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scalar_mul(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a + r with r a 1 x cols row vector broadcast over rows.
Var add_rowvec(const Var& a, const Var& r);
/// a .* c with c a rows x 1 column vector broadcast over columns.
Var mul_colvec(const Var& a, const Var& c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// Natural log; throws std::domain_error on non-positive entries.
Var log(const Var& a);
/// Elementwise a^p; entries must be positive unless p is a positive integer.
Var pow_scalar(const Var& a, double p);
Var reduce_mean(const Var& a);
Var reduce_sum(const Var& a);
/// Row sums (rows x 1).
Var sum_rows(const Var& a);
/// Column sums (1 x cols).
Var sum_cols(const Var& a);
Var slice(const Var& a, Eigen::Index row0, Eigen::Index col0, Eigen::Index n_rows, Eigen::Index n_cols);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var softmax_rows(const Var& a);
/// out[i] = a[index[i]] (rows); gradient scatters back.
Var gather_rows(const Var& a, std::span<const int> index);
/// out[index[i]] += a[i]; output has n_out rows.
Var segment_sum(const Var& a, std::span<const int> index, Eigen::Index n_out);
/// out[k] = <z[u_k], z[v_k]> as a K x 1 column.
Var pair_dot(const Var& z, std::span<const Edge> pairs);
/// s * h for a constant sparse s.
Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& h);
/// out[r] = sum over stored entries e of row r: w[e] * h[col[e]].
Var weighted_propagate(std::shared_ptr<const EdgeStructure> structure, const Var& weights, const Var& h);

/// mean((a - b)^2)
Var mse(const Var& a, const Var& b);
/// Weighted binary cross-entropy on probabilities clipped to [1e-12, 1-1e-12]:
/// mean(-pos_weight * y * log p - (1 - y) * log(1 - p)).
Var bce_with_weights(const Var& prob, const Matrix& target, double pos_weight = 1.0);
/// Same loss evaluated on logits (stable).
Var bce_with_logits(const Var& logits, const Matrix& target, double pos_weight = 1.0);
/// norm * bce_with_logits(z z^T, Y, pos_weight) with Y the dense form of the
/// symmetric 0/1 matrix `positives`. Fused so the n x n logits never enter the
/// tape.
Var inner_product_bce(const Var& z, std::shared_ptr<const SparseMatrix> positives, double pos_weight,
                      double norm);

}  // namespace lbd::ad
