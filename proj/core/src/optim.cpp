#include "privleak/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "privleak/error.hpp"
#include "privleak/rng.hpp"

namespace privleak {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error(ErrorCode::kConfig, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || batch_size < 1 || !(epsilon > 0.0) ||
      !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(weight_decay >= 0.0)) {
    throw Error(ErrorCode::kConfig, "invalid training hyperparameters");
  }
}

void DpSgdConfig::validate() const {
  if (!(noise_scale >= 0.0) || !(clip_norm > 0.0)) {
    throw Error(ErrorCode::kConfig, "DP-SGD needs noise_scale >= 0 and clip_norm > 0");
  }
}

namespace {

bool trainable(const TensorMask& mask, std::size_t i) {
  return mask.empty() || mask[i];
}

}  // namespace

AdamState make_adam_state(const ModelState& model) {
  return {model.params.zeros_like(), model.params.zeros_like(), 0};
}

void adamw_step(ModelState& model, const Gradients& grads, AdamState& state,
                const TrainConfig& config, const TensorMask& mask) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;

  for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
    if (!trainable(mask, i)) continue;
    auto& theta = model.params.tensors[i].value.data;
    auto& m = state.m.tensors[i].value.data;
    auto& v = state.v.tensors[i].value.data;
    const auto& g = grads.tensors[i].value.data;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= lr * config.weight_decay * theta[j];
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void sgd_step(ModelState& model, const Gradients& grads, double learning_rate,
              const TensorMask& mask) {
  for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
    if (!trainable(mask, i)) continue;
    auto& theta = model.params.tensors[i].value.data;
    const auto& g = grads.tensors[i].value.data;
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= learning_rate * g[j];
  }
}

Gradients average_gradients(std::span<const Gradients> grads) {
  Gradients sum = grads.front().zeros_like();
  for (const auto& g : grads) sum.axpy(1.0, g);
  sum.scale(1.0 / static_cast<double>(grads.size()));
  return sum;
}

void clip_gradient(Gradients& grad, double clip_norm) {
  const double norm = std::sqrt(grad.squared_norm());
  if (norm > clip_norm) grad.scale(clip_norm / norm);
}

void dpsgd_step(ModelState& model, std::span<const Gradients> per_sample_grads,
                const DpSgdConfig& dp, const TrainConfig& config, Rng& noise_rng,
                const TensorMask& mask) {
  if (per_sample_grads.empty()) {
    throw Error(ErrorCode::kConfig, "DP-SGD step on an empty batch");
  }
  std::vector<Gradients> clipped(per_sample_grads.begin(), per_sample_grads.end());
  for (auto& g : clipped) clip_gradient(g, dp.clip_norm);
  Gradients mean = average_gradients(clipped);

  if (dp.noise_scale > 0.0) {
    const double std_dev = dp.noise_scale * dp.clip_norm /
                           static_cast<double>(per_sample_grads.size());
    std::normal_distribution<double> noise(0.0, std_dev);
    // Noise is drawn for every coordinate, masked or not, so the stream
    // position does not depend on the mask.
    for (auto& t : mean.tensors) {
      for (double& x : t.value.data) x += noise(noise_rng);
    }
  }
  require_finite(mean, "DP-SGD gradient");
  sgd_step(model, mean, config.learning_rate, mask);
}

Optimizer::Optimizer(const ModelState& model, const TrainConfig& config,
                     TensorMask mask)
    : config_(config), mask_(std::move(mask)) {
  if (config_.optimizer == OptimizerKind::kAdamW) adam_ = make_adam_state(model);
}

void Optimizer::step(ModelState& model, const Gradients& grads) {
  require_finite(grads, "gradient");
  if (config_.optimizer == OptimizerKind::kAdamW) {
    adamw_step(model, grads, adam_, config_, mask_);
  } else {
    sgd_step(model, grads, config_.learning_rate, mask_);
  }
}

void require_finite(const Gradients& grads, std::string_view what) {
  if (!grads.all_finite()) {
    throw Error(ErrorCode::kNumeric, std::string(what) + " is not finite");
  }
}

std::vector<std::size_t> keyed_order(std::span<const std::uint64_t> keys,
                                     std::uint64_t shuffle_seed, std::size_t epoch) {
  const std::uint64_t epoch_seed = splitmix64(shuffle_seed ^ splitmix64(epoch));
  std::vector<std::pair<std::uint64_t, std::size_t>> prio(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    prio[i] = {splitmix64(epoch_seed ^ keys[i]), i};
  }
  std::sort(prio.begin(), prio.end());
  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) order[i] = prio[i].second;
  return order;
}

ModelState train(const ModelState& model, std::span<const TokenSeq> data,
                 const TrainConfig& config, const std::optional<DpSgdConfig>& dp,
                 std::span<const std::uint64_t> sample_keys) {
  config.validate();
  if (data.empty()) throw Error(ErrorCode::kEmptyCorpus, "training set is empty");
  if (dp) dp->validate();
  if (!sample_keys.empty() && sample_keys.size() != data.size()) {
    throw Error(ErrorCode::kConfig, "one sample key per training sequence required");
  }

  ModelState current = model;
  if (config.epochs == 0) return current;

  std::vector<std::uint64_t> keys(sample_keys.begin(), sample_keys.end());
  if (keys.empty()) {
    keys.resize(data.size());
    std::iota(keys.begin(), keys.end(), std::uint64_t{0});
  }
  Rng noise_rng(dp ? dp->noise_seed : 0);
  Optimizer opt(current, config);

  std::vector<TokenSeq> batch;
  ForwardCache cache;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = keyed_order(keys, config.shuffle_seed, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(data[order[k]]);

      if (dp) {
        auto grads = per_sample_gradients(current, batch);
        dpsgd_step(current, grads, *dp, config, noise_rng);
      } else {
        LossStats stats = forward_loss(current, batch, &cache);
        if (!std::isfinite(stats.mean_nll)) {
          throw Error(ErrorCode::kNumeric, "training loss is not finite");
        }
        opt.step(current, backward(current, cache));
      }
    }
  }
  return current;
}

}  // namespace privleak
