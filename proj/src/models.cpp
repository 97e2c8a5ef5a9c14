#include "linkbackdoor/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace {

using ad::Var;

constexpr const char* kDiscKeys[] = {"D0", "D1", "D2"};

bool is_disc_key(const std::string& k) { return k == "D0" || k == "D1" || k == "D2"; }

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-r, r);
  return w;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

const Var& param(const BoundParams& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw std::invalid_argument("missing model parameter " + key);
  return it->second;
}

Var propagate(const EncoderInput& in, const Var& h) {
  if (in.propagation) return ad::spmm(in.propagation, h);
  if (in.structure && in.weights.valid()) return ad::weighted_propagate(in.structure, in.weights, h);
  throw std::invalid_argument("encode: input has no propagation");
}

Var row_normalize(const Var& x) {
  const Var inv = ad::pow_scalar(ad::add_scalar(ad::sum_rows(ad::hadamard(x, x)), 1e-12), -0.5);
  return ad::mul_colvec(x, inv);
}

Var disc_logits(const BoundParams& p, const Var& x) {
  Var h = ad::relu(ad::matmul(x, param(p, "D0")));
  h = ad::relu(ad::matmul(h, param(p, "D1")));
  return ad::matmul(h, param(p, "D2"));
}

Var reconstruction(const Var& z, const TrainingData& data, std::uint64_t seed) {
  if (data.dense) return ad::inner_product_bce(z, data.positives, data.pos_weight, data.norm);
  const auto n = static_cast<std::size_t>(z.rows());
  std::vector<Edge> pairs(data.positive_pairs);
  Rng rng(derive_seed(seed, "negatives"));
  for (std::size_t k = 0; k < data.positive_pairs.size(); ++k) {
    NodeId a = static_cast<NodeId>(rng.below(n));
    NodeId b = static_cast<NodeId>(rng.below(n - 1));
    if (b >= a) ++b;
    pairs.push_back(make_edge(a, b));
  }
  Matrix target = Matrix::Zero(static_cast<Eigen::Index>(pairs.size()), 1);
  target.topRows(static_cast<Eigen::Index>(data.positive_pairs.size())).setOnes();
  return ad::bce_with_logits(ad::pair_dot(z, pairs), target);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::GAE: return "GAE";
    case ModelKind::VGAE: return "VGAE";
    case ModelKind::GIC: return "GIC";
    case ModelKind::ARGA: return "ARGA";
    case ModelKind::ARVGA: return "ARVGA";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto k : {ModelKind::GAE, ModelKind::VGAE, ModelKind::GIC, ModelKind::ARGA, ModelKind::ARVGA}) {
    if (up == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

bool is_variational(ModelKind kind) { return kind == ModelKind::VGAE || kind == ModelKind::ARVGA; }
bool is_adversarial(ModelKind kind) { return kind == ModelKind::ARGA || kind == ModelKind::ARVGA; }

std::size_t embedding_dim(ModelKind kind, const ModelConfig& cfg) {
  return kind == ModelKind::GIC ? cfg.hidden : cfg.embedding;
}

const Matrix& ModelState::at(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) throw std::invalid_argument("model state has no parameter " + key);
  return it->second;
}

ModelState init_model(ModelKind kind, std::size_t n_features, const ModelConfig& cfg, std::uint64_t seed) {
  if (n_features == 0) throw std::invalid_argument("init_model: zero features");
  ModelState s;
  s.kind = kind;
  s.seed = seed;
  Rng rng(derive_seed(seed, "init"));
  const std::size_t emb = embedding_dim(kind, cfg);
  s.params["W0"] = glorot(n_features, cfg.hidden, rng);
  if (is_variational(kind)) {
    s.params["W1_mu"] = glorot(cfg.hidden, emb, rng);
    s.params["W1_logstd"] = glorot(cfg.hidden, emb, rng);
  } else {
    s.params["W1"] = glorot(cfg.hidden, emb, rng);
  }
  if (is_adversarial(kind)) {
    s.params["D0"] = glorot(emb, cfg.disc_hidden, rng);
    s.params["D1"] = glorot(cfg.disc_hidden, cfg.disc_hidden, rng);
    s.params["D2"] = glorot(cfg.disc_hidden, 1, rng);
  }
  if (kind == ModelKind::GIC) {
    if (cfg.gic_clusters == 0) throw std::invalid_argument("init_model: GIC needs at least one cluster");
    s.params["centers"] = normal_matrix(static_cast<Eigen::Index>(cfg.gic_clusters), static_cast<Eigen::Index>(emb),
                                        derive_seed(seed, "centers"));
  }
  return s;
}

std::size_t EncoderInput::n_nodes() const {
  std::size_t n = features ? static_cast<std::size_t>(features->rows()) : 0;
  if (extra_features.valid()) n += static_cast<std::size_t>(extra_features.rows());
  return n;
}

EncoderInput make_input(const Graph& g) {
  EncoderInput in;
  in.features = std::make_shared<const SparseMatrix>(g.features().sparseView());
  in.propagation = std::make_shared<const SparseMatrix>(normalize_adjacency(g).matrix);
  return in;
}

Var normalize_entries(std::shared_ptr<const ad::EdgeStructure> st, const Var& raw) {
  const Var deg = ad::segment_sum(raw, st->row, st->n_rows);
  const Var dinv = ad::pow_scalar(deg, -0.5);
  return ad::hadamard(ad::hadamard(raw, ad::gather_rows(dinv, st->row)), ad::gather_rows(dinv, st->col));
}

BoundParams bind_params(ad::Tape& tape, const ModelState& state, bool requires_grad) {
  BoundParams p;
  for (const auto& [k, v] : state.params) p.emplace(k, tape.leaf(v, requires_grad && k != "centers"));
  return p;
}

Encoding encode(ModelKind kind, const BoundParams& p, const EncoderInput& in, Mode mode, std::uint64_t seed,
                std::span<const int> corruption) {
  const Var& w0 = param(p, "W0");
  if (!in.features) throw std::invalid_argument("encode: input has no features");
  if (static_cast<Eigen::Index>(in.features->cols()) != w0.rows()) {
    throw std::invalid_argument("encode: " + std::to_string(in.features->cols()) + " features vs W0 with " +
                                std::to_string(w0.rows()) + " rows");
  }
  Var proj = ad::spmm(in.features, w0);
  if (in.extra_features.valid()) {
    const Var parts[] = {proj, ad::matmul(in.extra_features, w0)};
    proj = ad::concat_rows(parts);
  }
  if (!corruption.empty()) proj = ad::gather_rows(proj, corruption);
  const Var h = ad::relu(propagate(in, proj));
  Encoding out;
  if (is_variational(kind)) {
    out.mu = propagate(in, ad::matmul(h, param(p, "W1_mu")));
    out.logstd = propagate(in, ad::matmul(h, param(p, "W1_logstd")));
    if (mode == Mode::Train) {
      const Matrix eps = normal_matrix(out.mu.rows(), out.mu.cols(), derive_seed(seed, "eps"));
      out.z = ad::add(out.mu, ad::hadamard(w0.tape()->constant(eps), ad::exp(out.logstd)));
    } else {
      out.z = out.mu;
    }
  } else {
    out.z = propagate(in, ad::matmul(h, param(p, "W1")));
  }
  return out;
}

Matrix embed(const ModelState& state, const Graph& g) {
  ad::Tape tape;
  const BoundParams p = bind_params(tape, state, false);
  return encode(state.kind, p, make_input(g), Mode::Eval, 0).z.value();
}

std::vector<double> score_pairs(const Matrix& z, std::span<const Edge> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    if (u < 0 || v < 0 || u >= z.rows() || v >= z.rows()) {
      throw std::out_of_range("score_pairs: pair (" + std::to_string(u) + "," + std::to_string(v) + ") with " +
                              std::to_string(z.rows()) + " embeddings");
    }
    const double x = z.row(u).dot(z.row(v));
    out.push_back(x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)));
  }
  return out;
}

TrainingData make_training_data(const Graph& g, std::span<const Edge> extra_positives, const ModelConfig& cfg) {
  TrainingData d;
  d.input = make_input(g);
  const std::size_t n = g.n_nodes();
  for (const auto& e : extra_positives) {
    if (e.u < 0 || e.v < 0 || static_cast<std::size_t>(e.u) >= n || static_cast<std::size_t>(e.v) >= n) {
      throw std::invalid_argument("make_training_data: positive pair outside the graph");
    }
  }
  d.dense = n <= cfg.dense_loss_max_nodes;
  if (!d.dense) {
    d.positive_pairs = g.edges();
    d.positive_pairs.insert(d.positive_pairs.end(), extra_positives.begin(), extra_positives.end());
    return d;
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * (g.n_edges() + extra_positives.size()) + n);
  for (std::size_t i = 0; i < n; ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  auto add_pair = [&](const Edge& e) {
    trip.emplace_back(e.u, e.v, 1.0);
    trip.emplace_back(e.v, e.u, 1.0);
  };
  for (const auto& e : g.edges()) add_pair(e);
  for (const auto& e : extra_positives) add_pair(e);
  auto pos = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  pos->setFromTriplets(trip.begin(), trip.end(), [](double a, double) { return a; });
  pos->makeCompressed();
  const double total = static_cast<double>(n) * static_cast<double>(n);
  const double npos = static_cast<double>(pos->nonZeros());
  d.pos_weight = (total - npos) / npos;
  d.norm = total / (2.0 * (total - npos));
  d.positives = std::move(pos);
  return d;
}

SoftClusters soft_clusters(const Var& z, const Matrix& centers, double beta) {
  if (centers.cols() != z.cols()) {
    throw std::invalid_argument("soft_clusters: centers have " + std::to_string(centers.cols()) + " columns, z has " +
                                std::to_string(z.cols()));
  }
  Matrix cn = centers;
  for (Eigen::Index k = 0; k < cn.rows(); ++k) {
    const double norm = cn.row(k).norm();
    if (norm > 0) cn.row(k) /= norm;
  }
  SoftClusters out;
  const Var cos = ad::matmul_nt(row_normalize(z), z.tape()->constant(std::move(cn)));
  out.assignment = ad::softmax_rows(ad::scalar_mul(cos, beta));
  const Var mass = ad::pow_scalar(ad::add_scalar(ad::transpose(ad::sum_cols(out.assignment)), 1e-12), -1.0);
  out.centers = ad::mul_colvec(ad::matmul(ad::transpose(out.assignment), z), mass);
  out.summary = ad::sigmoid(ad::matmul(out.assignment, out.centers));
  return out;
}

LossTerms generator_loss(const ModelState& state, const BoundParams& p, const TrainingData& data,
                         const ModelConfig& cfg, std::uint64_t step_seed) {
  const ModelKind kind = state.kind;
  const Encoding enc = encode(kind, p, data.input, Mode::Train, step_seed);
  LossTerms t;
  t.z = enc.z;
  t.reconstruction = reconstruction(enc.z, data, step_seed);
  t.total = t.reconstruction;
  const double n = static_cast<double>(enc.z.rows());
  if (is_variational(kind)) {
    const Var two_ls = ad::scalar_mul(enc.logstd, 2.0);
    const Var inner = ad::add_scalar(ad::sub(ad::sub(two_ls, ad::hadamard(enc.mu, enc.mu)), ad::exp(two_ls)), 1.0);
    t.kl = ad::scalar_mul(ad::reduce_sum(inner), -0.5 / (n * n));
    t.total = ad::add(t.total, t.kl);
  }
  if (is_adversarial(kind)) {
    const Var logits = disc_logits(p, enc.z);
    t.adversarial = ad::scalar_mul(ad::bce_with_logits(logits, Matrix::Ones(logits.rows(), 1)), cfg.adv_weight);
    t.total = ad::add(t.total, t.adversarial);
  }
  if (kind == ModelKind::GIC) {
    const SoftClusters sc = soft_clusters(enc.z, state.at("centers"), cfg.gic_beta);
    t.centers = sc.centers;
    std::vector<std::size_t> perm = Rng(derive_seed(step_seed, "corrupt")).permutation(static_cast<std::size_t>(n));
    std::vector<int> idx(perm.begin(), perm.end());
    const Var zc = encode(kind, p, data.input, Mode::Train, step_seed, idx).z;
    const Var pos = ad::sum_rows(ad::hadamard(enc.z, sc.summary));
    const Var neg = ad::sum_rows(ad::hadamard(zc, sc.summary));
    const Var lp = ad::bce_with_logits(pos, Matrix::Ones(pos.rows(), 1));
    const Var ln = ad::bce_with_logits(neg, Matrix::Zero(neg.rows(), 1));
    t.cluster = ad::scalar_mul(ad::add(lp, ln), cfg.gic_weight);
    t.total = ad::add(t.total, t.cluster);
  }
  return t;
}

Var discriminator_loss(const BoundParams& p, const Matrix& fake, std::uint64_t step_seed) {
  ad::Tape& tape = *param(p, "D0").tape();
  const Var real = tape.constant(normal_matrix(fake.rows(), fake.cols(), derive_seed(step_seed, "prior")));
  const Var lr = disc_logits(p, real);
  const Var lf = disc_logits(p, tape.constant(fake));
  return ad::add(ad::bce_with_logits(lr, Matrix::Ones(lr.rows(), 1)),
                 ad::bce_with_logits(lf, Matrix::Zero(lf.rows(), 1)));
}

double validation_loss(const ModelState& state, const EncoderInput& in, std::span<const Edge> pos,
                       std::span<const Edge> neg) {
  if (pos.empty() && neg.empty()) throw std::invalid_argument("validation_loss: no pairs");
  ad::Tape tape;
  const BoundParams p = bind_params(tape, state, false);
  const Matrix z = encode(state.kind, p, in, Mode::Eval, 0).z.value();
  constexpr double eps = 1e-12;
  double loss = 0.0;
  for (double s : score_pairs(z, pos)) loss -= std::log(std::clamp(s, eps, 1.0 - eps));
  for (double s : score_pairs(z, neg)) loss -= std::log(std::clamp(1.0 - s, eps, 1.0 - eps));
  return loss / static_cast<double>(pos.size() + neg.size());
}

void Adam::step(ModelState& state, const BoundParams& p, const ad::Gradients& grads) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& key : keys_) {
    Matrix& w = state.params.at(key);
    const Matrix& g = grads[param(p, key)];
    Matrix& m = m_.try_emplace(key, Matrix::Zero(w.rows(), w.cols())).first->second;
    Matrix& v = v_.try_emplace(key, Matrix::Zero(w.rows(), w.cols())).first->second;
    m = b1 * m + (1.0 - b1) * g;
    v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

namespace {

std::vector<std::string> generator_keys(const ModelState& s) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : s.params) {
    if (!is_disc_key(k) && k != "centers") keys.push_back(k);
  }
  return keys;
}

}  // namespace

Trainer::Trainer(ModelState init, ModelConfig cfg)
    : state_(std::move(init)),
      cfg_(cfg),
      gen_(cfg.lr, generator_keys(state_)),
      disc_(cfg.disc_lr, is_adversarial(state_.kind) ? std::vector<std::string>(std::begin(kDiscKeys), std::end(kDiscKeys))
                                                      : std::vector<std::string>{}) {}

double Trainer::step(const TrainingData& data, std::size_t epoch) {
  const std::uint64_t seed = derive_seed(derive_seed(state_.seed, "epoch"), epoch);
  auto check = [epoch](double v, const char* what) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(what) + " loss is not finite at epoch " + std::to_string(epoch));
    }
  };
  if (is_adversarial(state_.kind)) {
    Matrix fake;
    {
      ad::Tape tape;
      const BoundParams p = bind_params(tape, state_, false);
      fake = encode(state_.kind, p, data.input, Mode::Train, seed).z.value();
    }
    ad::Tape tape;
    const BoundParams p = bind_params(tape, state_, true);
    const Var loss = discriminator_loss(p, fake, seed);
    check(loss.scalar(), "discriminator");
    disc_.step(state_, p, tape.backward(loss));
  }
  ad::Tape tape;
  const BoundParams p = bind_params(tape, state_, true);
  const LossTerms terms = generator_loss(state_, p, data, cfg_, seed);
  const double loss = terms.total.scalar();
  check(loss, "training");
  gen_.step(state_, p, tape.backward(terms.total));
  if (terms.centers.valid()) state_.params["centers"] = terms.centers.value();
  return loss;
}

TrainResult train(ModelKind kind, const Graph& train_graph, const DataSplit& split, const ModelConfig& cfg,
                  std::uint64_t seed) {
  Trainer trainer(init_model(kind, train_graph.n_features(), cfg, seed), cfg);
  const TrainingData data = make_training_data(train_graph, {}, cfg);
  TrainResult r;
  r.state = trainer.state();
  r.best_val_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    r.train_loss.push_back(trainer.step(data, epoch));
    r.epochs_run = epoch;
    const double val = validation_loss(trainer.state(), data.input, split.val_pos, split.val_neg);
    if (val < r.best_val_loss) {
      r.best_val_loss = val;
      r.best_epoch = epoch;
      r.state = trainer.state();
    } else if (epoch - r.best_epoch >= cfg.patience) {
      break;
    }
  }
  return r;
}

}  // namespace lbd
