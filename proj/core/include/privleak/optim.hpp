#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "privleak/lm.hpp"
#include "privleak/rng.hpp"

namespace privleak {

enum class OptimizerKind { kAdamW, kSgd };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

/// Per-sample clipping to L2 norm `clip_norm`, then Gaussian noise with
/// per-coordinate std noise_scale * clip_norm / batch_size on the mean.
struct DpSgdConfig {
  double noise_scale = 5e-4;
  double clip_norm = 1.0;
  std::uint64_t noise_seed = 0;

  void validate() const;
};

struct AdamState {
  Parameters m;
  Parameters v;
  std::uint64_t step = 0;
};

/// Trainable-tensor filter; empty means every tensor is trainable.
using TensorMask = std::vector<bool>;

AdamState make_adam_state(const ModelState& model);

/// Bias-corrected adaptive-moment update with decoupled weight decay.
void adamw_step(ModelState& model, const Gradients& grads, AdamState& state,
                const TrainConfig& config, const TensorMask& mask = {});

/// theta <- theta - lr * grad
void sgd_step(ModelState& model, const Gradients& grads, double learning_rate,
              const TensorMask& mask = {});

/// Sum in input order divided by the count.
Gradients average_gradients(std::span<const Gradients> grads);

/// Scales `grad` in place so its global L2 norm is at most `clip_norm`.
void clip_gradient(Gradients& grad, double clip_norm);

/// Clip, average, add noise from `noise_rng`, then one SGD step.
void dpsgd_step(ModelState& model, std::span<const Gradients> per_sample_grads,
                const DpSgdConfig& dp, const TrainConfig& config, Rng& noise_rng,
                const TensorMask& mask = {});

/// Plain optimizer wrapper holding AdamW moments between steps.
class Optimizer {
 public:
  Optimizer(const ModelState& model, const TrainConfig& config,
            TensorMask mask = {});

  void step(ModelState& model, const Gradients& grads);

  const TrainConfig& config() const { return config_; }
  const TensorMask& mask() const { return mask_; }

 private:
  TrainConfig config_;
  TensorMask mask_;
  AdamState adam_;
};

/// Throws E_NUMERIC when any gradient entry is NaN or infinite.
void require_finite(const Gradients& grads, std::string_view what);

/// Epoch visiting order: indices sorted by a pseudo-random priority of
/// (shuffle_seed, epoch, key). Two datasets whose samples carry the same keys
/// visit their common samples in the same relative order.
std::vector<std::size_t> keyed_order(std::span<const std::uint64_t> keys,
                                     std::uint64_t shuffle_seed, std::size_t epoch);

/// `epochs` shuffled minibatch passes over `data`. With `dp`, each step is a
/// DP-SGD step on per-sample gradients; otherwise the configured optimizer
/// runs on the token-weighted batch gradient. `sample_keys` (one per sample,
/// default: the index) fix the visiting order through keyed_order.
ModelState train(const ModelState& model, std::span<const TokenSeq> data,
                 const TrainConfig& config,
                 const std::optional<DpSgdConfig>& dp = std::nullopt,
                 std::span<const std::uint64_t> sample_keys = {});

}  // namespace privleak
