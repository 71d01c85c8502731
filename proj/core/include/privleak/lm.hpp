#pragma once

// Fixed-window neural language model with hand-written backpropagation.
//
// Each predicted position sees the `context_window` previous tokens (left
// padded with <bos>). Their embeddings are concatenated into a vector of size
// D = context_window * embed_dim and passed through L residual blocks
//
//   x <- x + W_out^T tanh(W_in^T x + b_in) + b_out
//
// followed by a linear projection to vocabulary logits. Parameter tensors are
// ordered front to back: embedding (layer 0), blocks (layers 1..L), output
// projection (layer L+1).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "privleak/corpus.hpp"

namespace privleak {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 8;
  std::size_t context_window = 4;
  std::size_t hidden_blocks = 2;
  std::size_t hidden_dim = 32;
  double init_scale = 0.1;
  std::uint64_t init_seed = 0;

  std::size_t input_dim() const { return context_window * embed_dim; }
  std::size_t layer_count() const { return hidden_blocks + 2; }
  /// Closed-form number of scalar parameters.
  std::size_t parameter_count() const;
  void validate() const;  // throws E_CONFIG

  bool operator==(const ModelConfig&) const = default;
};

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

struct Tensor {
  std::string name;
  std::size_t layer = 0;
  Matrix value;

  std::size_t size() const { return value.data.size(); }
};

/// Parameter tensors; also used for gradients and optimizer moments.
struct Parameters {
  std::vector<Tensor> tensors;

  std::size_t size() const;
  Parameters zeros_like() const;
  double squared_norm() const;
  bool all_finite() const;
  void scale(double s);
  /// this += alpha * other
  void axpy(double alpha, const Parameters& other);
};

struct ModelState {
  ModelConfig config;
  Parameters params;

  // Tensor indices.
  static constexpr std::size_t kEmbedding = 0;
  std::size_t block_w_in(std::size_t l) const { return 1 + 4 * l; }
  std::size_t block_b_in(std::size_t l) const { return 2 + 4 * l; }
  std::size_t block_w_out(std::size_t l) const { return 3 + 4 * l; }
  std::size_t block_b_out(std::size_t l) const { return 4 + 4 * l; }
  std::size_t output_weight() const { return 1 + 4 * config.hidden_blocks; }
  std::size_t output_bias() const { return 2 + 4 * config.hidden_blocks; }
};

using Gradients = Parameters;

/// Parameters drawn i.i.d. uniform in [-init_scale, init_scale].
ModelState init_model(const ModelConfig& config);

struct LossStats {
  std::vector<std::vector<double>> per_token_nll;  // one row per sequence
  double mean_nll = 0.0;                           // token-weighted
  std::size_t token_count = 0;

  /// Token-averaged NLL of a single sequence.
  double sequence_mean(std::size_t i) const;
};

/// Activations retained for backward().
struct ForwardCache {
  std::size_t positions = 0;
  std::vector<TokenId> context;   // positions x context_window
  std::vector<TokenId> targets;   // positions
  std::vector<Matrix> residual;   // L+1 matrices, positions x D
  std::vector<Matrix> hidden;     // L matrices, positions x H (post-tanh)
  Matrix log_probs;               // positions x V
  Matrix probs;                   // positions x V
};

/// Next-token cross-entropy over every position of every sequence.
/// `targets`, when given, replaces the next-token labels: targets[i] must hold
/// one label per predicted position of seqs[i]. Throws E_BAD_TOKEN.
LossStats forward_loss(const ModelState& model, std::span<const TokenSeq> seqs,
                       ForwardCache* cache = nullptr,
                       std::span<const TokenSeq> targets = {});

/// Gradient of a loss whose derivative w.r.t. the logits is `logit_grad`.
Gradients backward_from_logits(const ModelState& model, const ForwardCache& cache,
                               const Matrix& logit_grad);

/// d(weight * sum of NLL over positions)/d(logits) = weight * (p - onehot).
Matrix nll_logit_grad(const ForwardCache& cache, double weight);

/// Exact gradient of LossStats::mean_nll for the cached batch.
Gradients backward(const ModelState& model, const ForwardCache& cache);

/// Gradient of each sequence's own mean NLL, in input order.
std::vector<Gradients> per_sample_gradients(const ModelState& model,
                                            std::span<const TokenSeq> seqs);

/// exp(token-weighted mean NLL), evaluated in chunks.
double perplexity(const ModelState& model, std::span<const TokenSeq> seqs);
double perplexity(const LossStats& stats);

/// Per-sequence loss statistics without keeping activations.
LossStats evaluate(const ModelState& model, std::span<const TokenSeq> seqs);

struct KlResult {
  double kl = 0.0;  // token-averaged KL(teacher || student)
  Gradients grad;   // w.r.t. student parameters
};

/// d(weight * sum KL(p_T || p_S))/d(student logits) = weight * (p_S - p_T).
Matrix kl_logit_grad(const ForwardCache& teacher, const ForwardCache& student,
                     double weight);
double kl_sum(const ForwardCache& teacher, const ForwardCache& student);

KlResult kl_teacher_student(const ModelState& teacher, const ModelState& student,
                            std::span<const TokenSeq> seqs);

// ---------------------------------------------------------------------------
// Layer masks for partial retraining.

struct LayerMask {
  std::vector<bool> trainable;  // per tensor
  double ratio = 0.0;           // trainable / total parameters
};

/// Marks tensors in the last min(k, layer_count) layers trainable.
LayerMask mask_last_layers(std::span<const std::size_t> tensor_layers,
                           std::span<const std::size_t> tensor_sizes,
                           std::size_t k);
LayerMask layer_mask(const ModelState& model, std::size_t k);
LayerMask full_mask(const ModelState& model);

/// Redraws masked tensors exactly as init_model would with `seed`.
ModelState reinit_layers(const ModelState& model, const LayerMask& mask,
                         std::uint64_t seed);

}  // namespace privleak
