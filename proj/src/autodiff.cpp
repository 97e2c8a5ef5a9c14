#include "linkbackdoor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lbd::ad {

namespace {

using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

void check_valid(const char* op, const Var& a) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": invalid operand");
}

void same_tape(const char* op, const Var& a, const Var& b) {
  check_valid(op, a);
  check_valid(op, b);
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

void same_shape(const char* op, const Var& a, const Var& b) {
  same_tape(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a.value(), b.value());
}

// log(1 + exp(x)) and sigmoid(x) sharing one exponential.
void softplus_sigmoid(const Matrix& x, Matrix& softplus, Matrix& sig) {
  const Array xa = x.array();
  const Array e = (-xa.abs()).exp();
  softplus = (xa.max(0.0) + e.log1p()).matrix();
  sig = (xa >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e)).matrix();
}

void check_target(const char* op, const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) shape_error(op, pred, target);
  if (pred.size() == 0) throw std::invalid_argument(std::string(op) + ": empty operand");
}

}  // namespace

// ---- Var / Tape ------------------------------------------------------------

const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("Var::value on an invalid handle");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("Var::scalar: value is " + shape(v));
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

bool GradSink::wants(const Var& v) const { return v.valid() && tape_.requires_grad(v.id()); }

void GradSink::add(const Var& v, Matrix g) {
  if (!wants(v)) return;
  auto& slot = grads_[static_cast<std::size_t>(v.id())];
  if (slot.size() == 0) {
    slot = std::move(g);
  } else {
    slot += g;
  }
}

const Matrix& Gradients::operator[](const Var& v) const {
  return grads_.at(static_cast<std::size_t>(v.id()));
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad, {}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  bool rg = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw std::invalid_argument("Tape::record: parent from another tape");
    rg = rg || p.requires_grad();
  }
  nodes_.push_back(Node{std::move(value), rg, rg ? std::move(backward) : BackwardFn{}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " + shape(lv));
  }
  Gradients out;
  out.grads_.resize(nodes_.size());
  GradSink sink(*this, out.grads_);
  if (nodes_[static_cast<std::size_t>(loss.id())].requires_grad) {
    out.grads_[static_cast<std::size_t>(loss.id())] = Matrix::Ones(1, 1);
  }
  for (int id = loss.id(); id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward || out.grads_[static_cast<std::size_t>(id)].size() == 0) continue;
    // Move out first: the closure may not add to its own slot, and freeing
    // intermediate gradients keeps peak memory down on n x n operands.
    Matrix g = std::move(out.grads_[static_cast<std::size_t>(id)]);
    node.backward(g, node.value, sink);
    out.grads_[static_cast<std::size_t>(id)] = std::move(g);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (out.grads_[i].size() == 0) {
      out.grads_[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
  }
  return out;
}

EdgeStructure EdgeStructure::from_entries(Eigen::Index n_rows, Eigen::Index n_cols,
                                          std::span<const std::pair<int, int>> entries,
                                          std::vector<int>* order) {
  std::vector<int> idx(entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return entries[static_cast<std::size_t>(a)].first < entries[static_cast<std::size_t>(b)].first;
  });
  EdgeStructure s;
  s.n_rows = n_rows;
  s.n_cols = n_cols;
  s.row.resize(entries.size());
  s.col.resize(entries.size());
  s.row_ptr.assign(static_cast<std::size_t>(n_rows) + 1, 0);
  if (order) order->assign(entries.size(), 0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& [r, c] = entries[static_cast<std::size_t>(idx[k])];
    if (r < 0 || r >= n_rows || c < 0 || c >= n_cols) {
      throw std::invalid_argument("EdgeStructure: entry (" + std::to_string(r) + "," + std::to_string(c) +
                                  ") out of range");
    }
    s.row[k] = r;
    s.col[k] = c;
    ++s.row_ptr[static_cast<std::size_t>(r) + 1];
    if (order) (*order)[static_cast<std::size_t>(idx[k])] = static_cast<int>(k);
  }
  for (std::size_t r = 0; r < static_cast<std::size_t>(n_rows); ++r) s.row_ptr[r + 1] += s.row_ptr[r];
  return s;
}

// ---- Linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  same_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&, GradSink& s) {
    if (s.wants(a)) s.add(a, g * b.value().transpose());
    if (s.wants(b)) s.add(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  same_tape("matmul_nt", a, b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  Matrix out = a.value() * b.value().transpose();
  return a.tape()->record(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&, GradSink& s) {
    if (s.wants(a)) s.add(a, g * b.value());
    if (s.wants(b)) s.add(b, g.transpose() * a.value());
  });
}

Var transpose(const Var& a) {
  check_valid("transpose", a);
  Matrix out = a.value().transpose();
  return a.tape()->record(std::move(out), {a},
                          [a](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  same_shape("add", a, b);
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g);
    s.add(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape("sub", a, b);
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g);
    if (s.wants(b)) s.add(b, -g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  same_shape("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&, GradSink& s) {
    if (s.wants(a)) s.add(a, g.cwiseProduct(b.value()));
    if (s.wants(b)) s.add(b, g.cwiseProduct(a.value()));
  });
}

Var scalar_mul(const Var& a, double k) {
  check_valid("scalar_mul", a);
  return a.tape()->record(a.value() * k, {a}, [a, k](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g * k); });
}

Var add_scalar(const Var& a, double k) {
  check_valid("add_scalar", a);
  Matrix out = (a.value().array() + k).matrix();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g); });
}

Var add_rowvec(const Var& a, const Var& r) {
  same_tape("add_rowvec", a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) shape_error("add_rowvec", a.value(), r.value());
  Matrix out = a.value().rowwise() + r.value().row(0);
  return a.tape()->record(std::move(out), {a, r}, [a, r](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g);
    if (s.wants(r)) s.add(r, g.colwise().sum());
  });
}

Var mul_colvec(const Var& a, const Var& c) {
  same_tape("mul_colvec", a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) shape_error("mul_colvec", a.value(), c.value());
  Matrix out = c.value().col(0).asDiagonal() * a.value();
  return a.tape()->record(std::move(out), {a, c}, [a, c](const Matrix& g, const Matrix&, GradSink& s) {
    if (s.wants(a)) s.add(a, c.value().col(0).asDiagonal() * g);
    if (s.wants(c)) s.add(c, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

// ---- Elementwise -----------------------------------------------------------

Var relu(const Var& a) {
  check_valid("relu", a);
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, (a.value().array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  check_valid("sigmoid", a);
  Matrix sp, sig;
  softplus_sigmoid(a.value(), sp, sig);
  return a.tape()->record(std::move(sig), {a}, [a](const Matrix& g, const Matrix& y, GradSink& s) {
    s.add(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var exp(const Var& a) {
  check_valid("exp", a);
  Matrix out = a.value().array().exp().matrix();
  return a.tape()->record(std::move(out), {a},
                          [a](const Matrix& g, const Matrix& y, GradSink& s) { s.add(a, g.cwiseProduct(y)); });
}

Var log(const Var& a) {
  check_valid("log", a);
  if ((a.value().array() <= 0.0).any()) throw std::domain_error("log: non-positive entry");
  Matrix out = a.value().array().log().matrix();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g.cwiseQuotient(a.value()));
  });
}

Var pow_scalar(const Var& a, double p) {
  check_valid("pow_scalar", a);
  const bool integral = p >= 0.0 && std::floor(p) == p;
  if (!integral && (a.value().array() <= 0.0).any()) {
    throw std::domain_error("pow_scalar: non-positive base with non-integral exponent");
  }
  Matrix out = a.value().array().pow(p).matrix();
  return a.tape()->record(std::move(out), {a}, [a, p](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, (g.array() * p * a.value().array().pow(p - 1.0)).matrix());
  });
}

// ---- Reductions / reshaping -------------------------------------------------

Var reduce_mean(const Var& a) {
  check_valid("reduce_mean", a);
  if (a.value().size() == 0) throw std::invalid_argument("reduce_mean: empty operand");
  const double n = static_cast<double>(a.value().size());
  return a.tape()->record(Matrix::Constant(1, 1, a.value().mean()), {a},
                          [a, n](const Matrix& g, const Matrix&, GradSink& s) {
                            s.add(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                          });
}

Var reduce_sum(const Var& a) {
  check_valid("reduce_sum", a);
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var sum_rows(const Var& a) {
  check_valid("sum_rows", a);
  Matrix out = a.value().rowwise().sum();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g.col(0).replicate(1, a.cols()));
  });
}

Var sum_cols(const Var& a) {
  check_valid("sum_cols", a);
  Matrix out = a.value().colwise().sum();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(a, g.row(0).replicate(a.rows(), 1));
  });
}

Var slice(const Var& a, Eigen::Index row0, Eigen::Index col0, Eigen::Index n_rows, Eigen::Index n_cols) {
  check_valid("slice", a);
  if (row0 < 0 || col0 < 0 || n_rows < 0 || n_cols < 0 || row0 + n_rows > a.rows() || col0 + n_cols > a.cols()) {
    throw std::invalid_argument("slice: block at (" + std::to_string(row0) + "," + std::to_string(col0) + ") of " +
                                std::to_string(n_rows) + "x" + std::to_string(n_cols) + " outside " + shape(a.value()));
  }
  Matrix out = a.value().block(row0, col0, n_rows, n_cols);
  return a.tape()->record(std::move(out), {a}, [a, row0, col0, n_rows, n_cols](const Matrix& g, const Matrix&, GradSink& s) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.block(row0, col0, n_rows, n_cols) = g;
    s.add(a, std::move(full));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    same_tape("concat_rows", parts[0], p);
    if (p.cols() != parts[0].cols()) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [keep](const Matrix& g, const Matrix&, GradSink& s) {
    Eigen::Index off = 0;
    for (const auto& p : keep) {
      if (s.wants(p)) s.add(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    same_tape("concat_cols", parts[0], p);
    if (p.rows() != parts[0].rows()) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [keep](const Matrix& g, const Matrix&, GradSink& s) {
    Eigen::Index off = 0;
    for (const auto& p : keep) {
      if (s.wants(p)) s.add(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var softmax_rows(const Var& a) {
  check_valid("softmax_rows", a);
  Matrix out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, const Matrix& y, GradSink& s) {
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    s.add(a, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  check_valid("gather_rows", a);
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(index[i]) + " outside " + shape(a.value()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->record(std::move(out), {a}, [a, idx = std::move(idx)](const Matrix& g, const Matrix&, GradSink& s) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    s.add(a, std::move(full));
  });
}

Var segment_sum(const Var& a, std::span<const int> index, Eigen::Index n_out) {
  check_valid("segment_sum", a);
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) {
    throw std::invalid_argument("segment_sum: " + std::to_string(index.size()) + " indices for " + shape(a.value()));
  }
  Matrix out = Matrix::Zero(n_out, a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= n_out) {
      throw std::invalid_argument("segment_sum: index " + std::to_string(index[i]) + " outside [0," +
                                  std::to_string(n_out) + ")");
    }
    out.row(index[i]) += a.value().row(static_cast<Eigen::Index>(i));
  }
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->record(std::move(out), {a}, [a, idx = std::move(idx)](const Matrix& g, const Matrix&, GradSink& s) {
    Matrix back(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) back.row(static_cast<Eigen::Index>(i)) = g.row(idx[i]);
    s.add(a, std::move(back));
  });
}

Var pair_dot(const Var& z, std::span<const Edge> pairs) {
  check_valid("pair_dot", z);
  const Matrix& zv = z.value();
  Matrix out(static_cast<Eigen::Index>(pairs.size()), 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [u, v] = pairs[k];
    if (u < 0 || v < 0 || u >= zv.rows() || v >= zv.rows()) {
      throw std::invalid_argument("pair_dot: pair (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") outside " + shape(zv));
    }
    out(static_cast<Eigen::Index>(k), 0) = zv.row(u).dot(zv.row(v));
  }
  std::vector<Edge> keep(pairs.begin(), pairs.end());
  return z.tape()->record(std::move(out), {z}, [z, keep = std::move(keep)](const Matrix& g, const Matrix&, GradSink& s) {
    const Matrix& zv = z.value();
    Matrix full = Matrix::Zero(zv.rows(), zv.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const double gk = g(static_cast<Eigen::Index>(k), 0);
      full.row(keep[k].u) += gk * zv.row(keep[k].v);
      full.row(keep[k].v) += gk * zv.row(keep[k].u);
    }
    s.add(z, std::move(full));
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> sp, const Var& h) {
  check_valid("spmm", h);
  if (!sp || sp->cols() != h.rows()) {
    throw std::invalid_argument("spmm: shape mismatch " + (sp ? std::to_string(sp->rows()) + "x" + std::to_string(sp->cols()) : std::string("null")) +
                                " vs " + shape(h.value()));
  }
  Matrix out = (*sp) * h.value();
  return h.tape()->record(std::move(out), {h}, [sp, h](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(h, Matrix(sp->transpose() * g));
  });
}

Var weighted_propagate(std::shared_ptr<const EdgeStructure> st, const Var& weights, const Var& h) {
  same_tape("weighted_propagate", weights, h);
  if (!st) throw std::invalid_argument("weighted_propagate: null structure");
  if (weights.cols() != 1 || static_cast<std::size_t>(weights.rows()) != st->nnz() || h.rows() != st->n_cols) {
    throw std::invalid_argument("weighted_propagate: structure " + std::to_string(st->n_rows) + "x" +
                                std::to_string(st->n_cols) + " with " + std::to_string(st->nnz()) +
                                " entries vs weights " + shape(weights.value()) + ", h " + shape(h.value()));
  }
  const Matrix& w = weights.value();
  const Matrix& hv = h.value();
  Matrix out = Matrix::Zero(st->n_rows, hv.cols());
  for (Eigen::Index r = 0; r < st->n_rows; ++r) {
    for (int e = st->row_ptr[static_cast<std::size_t>(r)]; e < st->row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
      out.row(r) += w(e, 0) * hv.row(st->col[static_cast<std::size_t>(e)]);
    }
  }
  return h.tape()->record(std::move(out), {weights, h}, [st, weights, h](const Matrix& g, const Matrix&, GradSink& s) {
    const Matrix& w = weights.value();
    const Matrix& hv = h.value();
    if (s.wants(weights)) {
      Matrix gw(static_cast<Eigen::Index>(st->nnz()), 1);
      for (std::size_t e = 0; e < st->nnz(); ++e) {
        gw(static_cast<Eigen::Index>(e), 0) = g.row(st->row[e]).dot(hv.row(st->col[e]));
      }
      s.add(weights, std::move(gw));
    }
    if (s.wants(h)) {
      Matrix gh = Matrix::Zero(hv.rows(), hv.cols());
      for (std::size_t e = 0; e < st->nnz(); ++e) {
        gh.row(st->col[e]) += w(static_cast<Eigen::Index>(e), 0) * g.row(st->row[e]);
      }
      s.add(h, std::move(gh));
    }
  });
}

// ---- Losses ------------------------------------------------------------------

constexpr double kEps = 1e-12;

Var mse(const Var& a, const Var& b) {
  same_shape("mse", a, b);
  if (a.value().size() == 0) throw std::invalid_argument("mse: empty operand");
  const double n = static_cast<double>(a.value().size());
  const double loss = (a.value() - b.value()).squaredNorm() / n;
  return a.tape()->record(Matrix::Constant(1, 1, loss), {a, b}, [a, b, n](const Matrix& g, const Matrix&, GradSink& s) {
    const Matrix d = (a.value() - b.value()) * (2.0 * g(0, 0) / n);
    if (s.wants(a)) s.add(a, d);
    if (s.wants(b)) s.add(b, -d);
  });
}

Var bce_with_weights(const Var& prob, const Matrix& target, double pos_weight) {
  check_valid("bce_with_weights", prob);
  check_target("bce_with_weights", prob.value(), target);
  const Array p = prob.value().array().max(kEps).min(1.0 - kEps);
  const Array y = target.array();
  const double n = static_cast<double>(p.size());
  const double loss = (-pos_weight * y * p.log() - (1.0 - y) * (1.0 - p).log()).sum() / n;
  auto tgt = std::make_shared<Matrix>(target);
  return prob.tape()->record(Matrix::Constant(1, 1, loss), {prob},
                             [prob, tgt, pos_weight, n](const Matrix& g, const Matrix&, GradSink& s) {
                               const Array raw = prob.value().array();
                               const Array p = raw.max(kEps).min(1.0 - kEps);
                               const Array y = tgt->array();
                               Array d = (-pos_weight * y / p + (1.0 - y) / (1.0 - p)) * (g(0, 0) / n);
                               // Clipped entries have zero derivative.
                               d = (raw > kEps && raw < 1.0 - kEps).select(d, 0.0);
                               s.add(prob, d.matrix());
                             });
}

Var bce_with_logits(const Var& logits, const Matrix& target, double pos_weight) {
  check_valid("bce_with_logits", logits);
  check_target("bce_with_logits", logits.value(), target);
  Matrix sp, sig;
  softplus_sigmoid(logits.value(), sp, sig);
  const Array y = target.array();
  const Array x = logits.value().array();
  const double n = static_cast<double>(x.size());
  // softplus(-x) = softplus(x) - x
  const double loss = (pos_weight * y * (sp.array() - x) + (1.0 - y) * sp.array()).sum() / n;
  auto grad = std::make_shared<Matrix>(((pos_weight * y * (sig.array() - 1.0) + (1.0 - y) * sig.array()) / n).matrix());
  return logits.tape()->record(Matrix::Constant(1, 1, loss), {logits}, [logits, grad](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(logits, *grad * g(0, 0));
  });
}

Var inner_product_bce(const Var& z, std::shared_ptr<const SparseMatrix> positives, double pos_weight, double norm) {
  check_valid("inner_product_bce", z);
  const Eigen::Index n = z.rows();
  if (!positives || positives->rows() != n || positives->cols() != n) {
    throw std::invalid_argument("inner_product_bce: positives must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  {
    const SparseMatrix t = positives->transpose();
    if ((t - *positives).norm() != 0.0) throw std::invalid_argument("inner_product_bce: positives not symmetric");
  }
  const Matrix& zv = z.value();
  // n x n scratch is reused across calls; fresh allocations of this size cost
  // more in page faults than the arithmetic.
  thread_local Matrix logits;
  thread_local Matrix expo;
  logits.resize(n, n);
  expo.resize(n, n);
  logits.noalias() = zv * zv.transpose();
  auto sp_of = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  // Every entry counts as a negative first; positives are corrected below.
  double loss = 0.0;
  for (Eigen::Index i = 0; i < positives->outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(*positives, i); it; ++it) {
      const double x = logits(i, it.col());
      loss += pos_weight * (sp_of(x) - x) - sp_of(x);
    }
  }
  expo.array() = (-logits.array().abs()).exp();
  loss += (logits.array().max(0.0) + (1.0 + expo.array()).log()).sum();
  const double scale = norm / static_cast<double>(n * n);
  loss *= scale;
  Matrix dz;
  if (z.requires_grad()) {
    logits.array() = 1.0 / (1.0 + (-logits.array()).exp());
    for (Eigen::Index i = 0; i < positives->outerSize(); ++i) {
      for (SparseMatrix::InnerIterator it(*positives, i); it; ++it) {
        double& gij = logits(i, it.col());
        gij = pos_weight * (gij - 1.0);
      }
    }
    // G is symmetric because the logits and the positive set are.
    dz.noalias() = logits * zv;
    dz *= 2.0 * scale;
  }
  auto grad = std::make_shared<const Matrix>(std::move(dz));
  return z.tape()->record(Matrix::Constant(1, 1, loss), {z}, [z, grad](const Matrix& g, const Matrix&, GradSink& s) {
    s.add(z, *grad * g(0, 0));
  });
}

}  // namespace lbd::ad
