#include "privleak/lm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "privleak/error.hpp"
#include "privleak/rng.hpp"

namespace privleak {

std::size_t ModelConfig::parameter_count() const {
  const std::size_t d = input_dim();
  const std::size_t h = hidden_dim;
  return vocab_size * embed_dim + hidden_blocks * (d * h + h + h * d + d) +
         d * vocab_size + vocab_size;
}

void ModelConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || context_window < 1 ||
      hidden_blocks < 1 || hidden_dim < 1) {
    throw Error(ErrorCode::kConfig, "model dimensions must all be >= 1");
  }
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw Error(ErrorCode::kConfig, "init_scale must be finite and >= 0");
  }
}

// ---------------------------------------------------------------------------

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters out;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) {
    out.tensors.push_back({t.name, t.layer, Matrix(t.value.rows, t.value.cols)});
  }
  return out;
}

double Parameters::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (double v : t.value.data) s += v * v;
  }
  return s;
}

bool Parameters::all_finite() const {
  for (const auto& t : tensors) {
    for (double v : t.value.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void Parameters::scale(double s) {
  for (auto& t : tensors) {
    for (double& v : t.value.data) v *= s;
  }
}

void Parameters::axpy(double alpha, const Parameters& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& dst = tensors[i].value.data;
    const auto& src = other.tensors[i].value.data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
  }
}

// ---------------------------------------------------------------------------

ModelState init_model(const ModelConfig& config) {
  config.validate();
  const std::size_t v = config.vocab_size;
  const std::size_t d = config.input_dim();
  const std::size_t h = config.hidden_dim;

  ModelState model;
  model.config = config;
  auto& ts = model.params.tensors;
  ts.push_back({"embedding", 0, Matrix(v, config.embed_dim)});
  for (std::size_t l = 0; l < config.hidden_blocks; ++l) {
    const std::string prefix = "block" + std::to_string(l) + ".";
    ts.push_back({prefix + "w_in", l + 1, Matrix(d, h)});
    ts.push_back({prefix + "b_in", l + 1, Matrix(1, h)});
    ts.push_back({prefix + "w_out", l + 1, Matrix(h, d)});
    ts.push_back({prefix + "b_out", l + 1, Matrix(1, d)});
  }
  const std::size_t last = config.hidden_blocks + 1;
  ts.push_back({"output.weight", last, Matrix(d, v)});
  ts.push_back({"output.bias", last, Matrix(1, v)});

  if (config.init_scale > 0.0) {
    Rng rng(config.init_seed);
    std::uniform_real_distribution<double> dist(-config.init_scale,
                                                config.init_scale);
    for (auto& t : ts) {
      for (double& x : t.value.data) x = dist(rng);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Dense kernels. Loops are ordered so the innermost runs over contiguous
// memory without reassociating any sum.

namespace {

// C = A * B  (A: n x k, B: k x m)
Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C += A^T * B  (A: n x k, B: n x m, C: k x m)
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ck = c.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ck[j] += aik * bi[j];
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  }
  return t;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += bias.data[j];
  }
}

void column_sum_acc(const Matrix& m, Matrix& out) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) out.data[j] += r[j];
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double LossStats::sequence_mean(std::size_t i) const {
  const auto& row = per_token_nll[i];
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

LossStats forward_loss(const ModelState& model, std::span<const TokenSeq> seqs,
                       ForwardCache* cache, std::span<const TokenSeq> targets) {
  const ModelConfig& cfg = model.config;
  const std::size_t v = cfg.vocab_size;
  const std::size_t e = cfg.embed_dim;
  const std::size_t c = cfg.context_window;
  const std::size_t d = cfg.input_dim();
  const bool override_targets = !targets.empty();
  if (override_targets && targets.size() != seqs.size()) {
    throw Error(ErrorCode::kBadToken, "target override count mismatch");
  }

  std::size_t positions = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    if (s.size() < 2) {
      throw Error(ErrorCode::kBadToken, "sequence shorter than 2 tokens");
    }
    for (TokenId t : s) {
      if (t >= v) throw Error(ErrorCode::kBadToken, "token id " + std::to_string(t) +
                                                        " >= vocab size");
    }
    if (override_targets) {
      if (targets[i].size() != s.size() - 1) {
        throw Error(ErrorCode::kBadToken, "target override length mismatch");
      }
      for (TokenId t : targets[i]) {
        if (t >= v) throw Error(ErrorCode::kBadToken, "target id out of range");
      }
    }
    positions += s.size() - 1;
  }

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.positions = positions;
  fc.context.assign(positions * c, Vocab::kBos);
  fc.targets.assign(positions, 0);
  fc.residual.clear();
  fc.hidden.clear();

  std::size_t p = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    for (std::size_t t = 1; t < s.size(); ++t, ++p) {
      for (std::size_t j = 0; j < c; ++j) {
        // slot j holds token t - c + j
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                   static_cast<std::ptrdiff_t>(c) +
                                   static_cast<std::ptrdiff_t>(j);
        fc.context[p * c + j] = src >= 0 ? s[static_cast<std::size_t>(src)] : Vocab::kBos;
      }
      fc.targets[p] = override_targets ? targets[i][t - 1] : s[t];
    }
  }

  const Matrix& emb = model.params.tensors[ModelState::kEmbedding].value;
  Matrix x(positions, d);
  for (std::size_t q = 0; q < positions; ++q) {
    double* xr = x.row(q);
    for (std::size_t j = 0; j < c; ++j) {
      const double* er = emb.row(fc.context[q * c + j]);
      std::copy(er, er + e, xr + j * e);
    }
  }
  fc.residual.push_back(x);

  for (std::size_t l = 0; l < cfg.hidden_blocks; ++l) {
    const auto& ts = model.params.tensors;
    Matrix a = matmul(fc.residual.back(), ts[model.block_w_in(l)].value);
    add_row_bias(a, ts[model.block_b_in(l)].value);
    for (double& z : a.data) z = std::tanh(z);
    Matrix next = matmul(a, ts[model.block_w_out(l)].value);
    add_row_bias(next, ts[model.block_b_out(l)].value);
    const Matrix& prev = fc.residual.back();
    for (std::size_t k = 0; k < next.data.size(); ++k) next.data[k] += prev.data[k];
    fc.hidden.push_back(std::move(a));
    fc.residual.push_back(std::move(next));
  }

  Matrix logits = matmul(fc.residual.back(),
                         model.params.tensors[model.output_weight()].value);
  add_row_bias(logits, model.params.tensors[model.output_bias()].value);

  fc.log_probs = Matrix(positions, v);
  fc.probs = Matrix(positions, v);
  for (std::size_t q = 0; q < positions; ++q) {
    const double* z = logits.row(q);
    const double m = *std::max_element(z, z + v);
    double* lp = fc.log_probs.row(q);
    double* pr = fc.probs.row(q);
    double sum = 0.0;
    for (std::size_t k = 0; k < v; ++k) {
      pr[k] = std::exp(z[k] - m);
      sum += pr[k];
    }
    const double lse = m + std::log(sum);
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < v; ++k) {
      lp[k] = z[k] - lse;
      pr[k] *= inv;
    }
  }

  LossStats stats;
  stats.per_token_nll.resize(seqs.size());
  stats.token_count = positions;
  double total = 0.0;
  p = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto& row = stats.per_token_nll[i];
    row.resize(seqs[i].size() - 1);
    for (auto& nll : row) {
      nll = -fc.log_probs(p, fc.targets[p]);
      total += nll;
      ++p;
    }
  }
  stats.mean_nll = positions ? total / static_cast<double>(positions) : 0.0;
  return stats;
}

Matrix nll_logit_grad(const ForwardCache& cache, double weight) {
  Matrix g(cache.positions, cache.probs.cols);
  for (std::size_t q = 0; q < cache.positions; ++q) {
    const double* pr = cache.probs.row(q);
    double* gr = g.row(q);
    for (std::size_t k = 0; k < g.cols; ++k) gr[k] = pr[k];
    gr[cache.targets[q]] -= 1.0;
    for (std::size_t k = 0; k < g.cols; ++k) gr[k] *= weight;
  }
  return g;
}

Gradients backward_from_logits(const ModelState& model, const ForwardCache& cache,
                               const Matrix& logit_grad) {
  const ModelConfig& cfg = model.config;
  const auto& ts = model.params.tensors;
  Gradients grads = model.params.zeros_like();
  auto& gs = grads.tensors;

  matmul_tn_acc(cache.residual.back(), logit_grad, gs[model.output_weight()].value);
  column_sum_acc(logit_grad, gs[model.output_bias()].value);
  Matrix dx = matmul(logit_grad, transpose(ts[model.output_weight()].value));

  for (std::size_t l = cfg.hidden_blocks; l-- > 0;) {
    const Matrix& h = cache.hidden[l];
    matmul_tn_acc(h, dx, gs[model.block_w_out(l)].value);
    column_sum_acc(dx, gs[model.block_b_out(l)].value);
    Matrix da = matmul(dx, transpose(ts[model.block_w_out(l)].value));
    for (std::size_t k = 0; k < da.data.size(); ++k) {
      da.data[k] *= 1.0 - h.data[k] * h.data[k];
    }
    matmul_tn_acc(cache.residual[l], da, gs[model.block_w_in(l)].value);
    column_sum_acc(da, gs[model.block_b_in(l)].value);
    Matrix through = matmul(da, transpose(ts[model.block_w_in(l)].value));
    for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] += through.data[k];
  }

  const std::size_t e = cfg.embed_dim;
  const std::size_t c = cfg.context_window;
  Matrix& demb = gs[ModelState::kEmbedding].value;
  for (std::size_t q = 0; q < cache.positions; ++q) {
    const double* dr = dx.row(q);
    for (std::size_t j = 0; j < c; ++j) {
      double* er = demb.row(cache.context[q * c + j]);
      for (std::size_t k = 0; k < e; ++k) er[k] += dr[j * e + k];
    }
  }
  return grads;
}

Gradients backward(const ModelState& model, const ForwardCache& cache) {
  const double w = 1.0 / static_cast<double>(cache.positions);
  return backward_from_logits(model, cache, nll_logit_grad(cache, w));
}

std::vector<Gradients> per_sample_gradients(const ModelState& model,
                                            std::span<const TokenSeq> seqs) {
  std::vector<Gradients> out;
  out.reserve(seqs.size());
  ForwardCache cache;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    forward_loss(model, seqs.subspan(i, 1), &cache);
    out.push_back(backward(model, cache));
  }
  return out;
}

namespace {
constexpr std::size_t kEvalChunk = 64;
}  // namespace

LossStats evaluate(const ModelState& model, std::span<const TokenSeq> seqs) {
  LossStats all;
  double total = 0.0;
  for (std::size_t begin = 0; begin < seqs.size(); begin += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, seqs.size() - begin);
    LossStats part = forward_loss(model, seqs.subspan(begin, n));
    for (auto& row : part.per_token_nll) {
      for (double v : row) total += v;
      all.token_count += row.size();
      all.per_token_nll.push_back(std::move(row));
    }
  }
  all.mean_nll = all.token_count ? total / static_cast<double>(all.token_count) : 0.0;
  return all;
}

double perplexity(const LossStats& stats) { return std::exp(stats.mean_nll); }

double perplexity(const ModelState& model, std::span<const TokenSeq> seqs) {
  if (seqs.empty()) throw Error(ErrorCode::kEmptyCorpus, "perplexity of empty set");
  return perplexity(evaluate(model, seqs));
}

// ---------------------------------------------------------------------------

Matrix kl_logit_grad(const ForwardCache& teacher, const ForwardCache& student,
                     double weight) {
  Matrix g(student.positions, student.probs.cols);
  for (std::size_t k = 0; k < g.data.size(); ++k) {
    g.data[k] = weight * (student.probs.data[k] - teacher.probs.data[k]);
  }
  return g;
}

double kl_sum(const ForwardCache& teacher, const ForwardCache& student) {
  double total = 0.0;
  for (std::size_t q = 0; q < student.positions; ++q) {
    const double* pt = teacher.probs.row(q);
    const double* lt = teacher.log_probs.row(q);
    const double* ls = student.log_probs.row(q);
    double row = 0.0;
    for (std::size_t k = 0; k < student.probs.cols; ++k) {
      if (pt[k] > 0.0) row += pt[k] * (lt[k] - ls[k]);
    }
    total += row;
  }
  return total;
}

KlResult kl_teacher_student(const ModelState& teacher, const ModelState& student,
                            std::span<const TokenSeq> seqs) {
  if (teacher.config.vocab_size != student.config.vocab_size) {
    throw Error(ErrorCode::kConfig, "teacher and student vocabularies differ");
  }
  ForwardCache tc, sc;
  forward_loss(teacher, seqs, &tc);
  forward_loss(student, seqs, &sc);
  const double w = 1.0 / static_cast<double>(sc.positions);
  KlResult r;
  r.kl = kl_sum(tc, sc) * w;
  r.grad = backward_from_logits(student, sc, kl_logit_grad(tc, sc, w));
  return r;
}

// ---------------------------------------------------------------------------

LayerMask mask_last_layers(std::span<const std::size_t> tensor_layers,
                           std::span<const std::size_t> tensor_sizes,
                           std::size_t k) {
  LayerMask mask;
  mask.trainable.assign(tensor_layers.size(), false);
  if (tensor_layers.empty()) return mask;
  const std::size_t layers =
      *std::max_element(tensor_layers.begin(), tensor_layers.end()) + 1;
  const std::size_t first = layers - std::min(k, layers);
  std::size_t trainable = 0, total = 0;
  for (std::size_t i = 0; i < tensor_layers.size(); ++i) {
    total += tensor_sizes[i];
    if (tensor_layers[i] >= first) {
      mask.trainable[i] = true;
      trainable += tensor_sizes[i];
    }
  }
  mask.ratio = total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0;
  return mask;
}

LayerMask layer_mask(const ModelState& model, std::size_t k) {
  std::vector<std::size_t> layers, sizes;
  for (const auto& t : model.params.tensors) {
    layers.push_back(t.layer);
    sizes.push_back(t.size());
  }
  return mask_last_layers(layers, sizes, k);
}

LayerMask full_mask(const ModelState& model) {
  return layer_mask(model, model.config.layer_count());
}

ModelState reinit_layers(const ModelState& model, const LayerMask& mask,
                         std::uint64_t seed) {
  ModelConfig cfg = model.config;
  cfg.init_seed = seed;
  const ModelState fresh = init_model(cfg);
  ModelState out = model;
  for (std::size_t i = 0; i < out.params.tensors.size(); ++i) {
    if (mask.trainable[i]) out.params.tensors[i].value = fresh.params.tensors[i].value;
  }
  return out;
}

}  // namespace privleak
