#include "privleak/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "privleak/error.hpp"

namespace privleak {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kRl: return "rl";
    case Method::kEuk: return "euk";
    case Method::kCfk: return "cfk";
    case Method::kGa: return "ga";
    case Method::kNegGradPlus: return "neggrad_plus";
    case Method::kScrub: return "scrub";
    case Method::kLangevin: return "langevin";
  }
  return "ga";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::kConfig, "unknown unlearning method '" + std::string(name) + "'");
}

MethodFamily method_family(Method m) {
  switch (m) {
    case Method::kRl:
    case Method::kGa: return MethodFamily::kForgetOnly;
    case Method::kLangevin: return MethodFamily::kKeepOnly;
    case Method::kNegGradPlus:
    case Method::kScrub: return MethodFamily::kBothSets;
    case Method::kEuk:
    case Method::kCfk: return MethodFamily::kLastLayers;
  }
  return MethodFamily::kForgetOnly;
}

std::size_t epoch_cap(Method m) {
  return method_family(m) == MethodFamily::kBothSets ? 5 : 10;
}

void UnlearnConfig::validate() const {
  optim.validate();
  dp.validate();
  if (method == Method::kNegGradPlus && !(neggrad_beta >= 0.0 && neggrad_beta <= 1.0)) {
    throw Error(ErrorCode::kConfig, "neggrad_beta must lie in [0, 1]");
  }
  if (!(scrub_alpha >= 0.0) || !(scrub_beta >= 0.0) || !(scrub_gamma >= 0.0)) {
    throw Error(ErrorCode::kConfig, "SCRUB weights must be >= 0");
  }
  if (k < 1) throw Error(ErrorCode::kConfig, "k must be >= 1");
  if (!(max_units >= 1.0)) throw Error(ErrorCode::kConfig, "max_units must be >= 1");
}

// ---------------------------------------------------------------------------

ComplexityLedger::ComplexityLedger(std::size_t unit_size, double max_units)
    : unit_size_(unit_size), max_units_(max_units) {
  if (unit_size_ == 0) throw Error(ErrorCode::kConfig, "unit size must be >= 1");
}

double ComplexityLedger::units_for(std::size_t unit_size, std::size_t samples,
                                   double param_fraction) {
  return static_cast<double>(samples) * param_fraction /
         static_cast<double>(unit_size);
}

bool ComplexityLedger::can_charge(std::size_t samples, double param_fraction) const {
  return charged_ + units_for(unit_size_, samples, param_fraction) <=
         max_units_ + kTolerance;
}

void ComplexityLedger::charge(std::size_t epoch, std::size_t samples,
                              double param_fraction) {
  if (!can_charge(samples, param_fraction)) {
    throw Error(ErrorCode::kBudget,
                "charging " + std::to_string(samples) + " samples at fraction " +
                    std::to_string(param_fraction) + " exceeds " +
                    std::to_string(max_units_) + " units");
  }
  charged_ += units_for(unit_size_, samples, param_fraction);
  events_.push_back({epoch, samples, param_fraction});
}

std::size_t select_checkpoint(std::span<const double> epoch_perplexities,
                              double baseline_perplexity) {
  for (std::size_t e = 0; e < epoch_perplexities.size(); ++e) {
    if (epoch_perplexities[e] > baseline_perplexity + 1.0) return e + 1;
  }
  return epoch_perplexities.size();
}

std::vector<TokenId> draw_random_labels(Rng& rng, std::size_t vocab_size,
                                        std::size_t count) {
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab_size - 1));
  std::vector<TokenId> out(count);
  for (auto& t : out) t = pick(rng);
  return out;
}

std::size_t last_layer_samples(std::size_t unit_size, double ratio) {
  if (!(ratio > 0.0)) throw Error(ErrorCode::kConfig, "trainable ratio must be > 0");
  const double n = std::floor(static_cast<double>(unit_size) / ratio);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

// ---------------------------------------------------------------------------

namespace {

struct Charge {
  std::size_t samples;
  double fraction;
};

using EpochFn = std::function<void(ModelState&, std::size_t epoch)>;

// Shared epoch loop: budget accounting, divergence handling, per-epoch
// checkpoints and the perplexity stop rule.
UnlearnOutcome run_epochs(const ModelState& learned, ModelState working,
                          const UnlearnData& data, const UnlearnConfig& config,
                          std::size_t cap, const std::vector<Charge>& charges,
                          const EpochFn& epoch_fn) {
  UnlearnOutcome out;
  out.ledger = ComplexityLedger(data.forget.size(), config.max_units);
  out.checkpoints.push_back(learned);
  const std::size_t epochs = config.epochs_override.value_or(cap);
  const bool evaluate_epochs = !data.train_eval.empty();
  const bool stop_rule = evaluate_epochs && !config.epochs_override;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    ComplexityLedger trial = out.ledger;
    bool affordable = true;
    for (const auto& c : charges) {
      if (!trial.can_charge(c.samples, c.fraction)) {
        affordable = false;
        break;
      }
      trial.charge(epoch, c.samples, c.fraction);
    }
    if (!affordable) {
      out.note = "budget exhausted before epoch " + std::to_string(epoch);
      break;
    }
    out.ledger = std::move(trial);

    try {
      epoch_fn(working, epoch);
      if (!working.params.all_finite()) {
        throw Error(ErrorCode::kNumeric, "parameters are not finite");
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      out.diverged = true;
      out.note = "diverged in epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }

    if (evaluate_epochs) {
      const double ppl = perplexity(working, data.train_eval);
      if (!std::isfinite(ppl)) {
        out.diverged = true;
        out.note = "perplexity not finite after epoch " + std::to_string(epoch);
        break;
      }
      out.train_perplexities.push_back(ppl);
    }
    out.checkpoints.push_back(working);
    if (stop_rule && out.train_perplexities.back() > data.baseline_perplexity + 1.0) {
      break;
    }
  }

  const std::size_t completed = out.checkpoints.size() - 1;
  out.selected_epoch = stop_rule
                           ? select_checkpoint(out.train_perplexities,
                                               data.baseline_perplexity)
                           : completed;
  out.selected = out.checkpoints[out.selected_epoch];
  return out;
}

void require_nonempty(std::span<const TokenSeq> set, const char* what) {
  if (set.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, std::string(what) + " set is empty");
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Uniform subsample of min(n, total) indices without replacement.
std::vector<std::size_t> subsample(std::size_t total, std::size_t n, Rng& rng) {
  n = std::min(n, total);
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

std::vector<std::vector<TokenSeq>> make_batches(std::span<const TokenSeq> set,
                                                const std::vector<std::size_t>& order,
                                                std::size_t batch_size) {
  std::vector<std::vector<TokenSeq>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    std::vector<TokenSeq> b;
    for (std::size_t k = begin; k < end; ++k) b.push_back(set[order[k]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

// Streams every method derives from its seed. Methods that consume the keep
// set all draw subsamples from "keep", so their trajectories line up with
// finetune_keep under a shared seed.
Rng keep_stream(const UnlearnConfig& c) { return make_rng(c.seed, "keep"); }
Rng forget_stream(const UnlearnConfig& c) { return make_rng(c.seed, "forget"); }

Gradients nll_gradient(const ModelState& model, std::span<const TokenSeq> batch,
                       ForwardCache& cache,
                       std::span<const TokenSeq> targets = {}) {
  LossStats stats = forward_loss(model, batch, &cache, targets);
  if (!std::isfinite(stats.mean_nll)) {
    throw Error(ErrorCode::kNumeric, "loss is not finite");
  }
  return backward(model, cache);
}

UnlearnOutcome last_layers(const ModelState& learned, const UnlearnData& data,
                           const UnlearnConfig& config, bool reinitialize) {
  require_nonempty(data.forget, "forget");
  require_nonempty(data.keep, "keep");
  const LayerMask mask = layer_mask(learned, config.k);
  const std::size_t per_epoch =
      std::min(last_layer_samples(data.forget.size(), mask.ratio), data.keep.size());

  ModelState start = reinitialize
                         ? reinit_layers(learned, mask, derive_seed(config.seed, "reinit"))
                         : learned;
  Optimizer opt(start, config.optim, mask.trainable);
  Rng keep_rng = keep_stream(config);
  ForwardCache cache;

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto idx = subsample(data.keep.size(), per_epoch, keep_rng);
    for (const auto& batch : make_batches(data.keep, idx, config.optim.batch_size)) {
      opt.step(model, nll_gradient(model, batch, cache));
    }
  };
  auto out = run_epochs(learned, std::move(start), data, config,
                        epoch_cap(config.method), {{per_epoch, mask.ratio}}, epoch_fn);
  out.samples_per_epoch = per_epoch;
  out.param_fraction = mask.ratio;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

UnlearnOutcome unlearn_random_labels(const ModelState& learned, const UnlearnData& data,
                                     const UnlearnConfig& config) {
  require_nonempty(data.forget, "forget");
  Optimizer opt(learned, config.optim);
  Rng order_rng = forget_stream(config);
  Rng label_rng = make_rng(config.seed, "labels");
  const std::size_t vocab = learned.config.vocab_size;
  ForwardCache cache;

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto order = shuffled_indices(data.forget.size(), order_rng);
    for (const auto& batch : make_batches(data.forget, order, config.optim.batch_size)) {
      // Fresh labels on every step.
      std::vector<TokenSeq> targets;
      targets.reserve(batch.size());
      for (const auto& seq : batch) {
        auto labels = draw_random_labels(label_rng, vocab, seq.size() - 1);
        targets.emplace_back(labels.begin(), labels.end());
      }
      opt.step(model, nll_gradient(model, batch, cache, targets));
    }
  };
  auto out = run_epochs(learned, learned, data, config, epoch_cap(Method::kRl),
                        {{data.forget.size(), 1.0}}, epoch_fn);
  out.samples_per_epoch = data.forget.size();
  return out;
}

UnlearnOutcome unlearn_gradient_ascent(const ModelState& learned,
                                       const UnlearnData& data,
                                       const UnlearnConfig& config) {
  require_nonempty(data.forget, "forget");
  Optimizer opt(learned, config.optim);
  Rng order_rng = forget_stream(config);
  ForwardCache cache;

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto order = shuffled_indices(data.forget.size(), order_rng);
    for (const auto& batch : make_batches(data.forget, order, config.optim.batch_size)) {
      Gradients g = nll_gradient(model, batch, cache);
      g.scale(-1.0);
      opt.step(model, g);
    }
  };
  auto out = run_epochs(learned, learned, data, config, epoch_cap(Method::kGa),
                        {{data.forget.size(), 1.0}}, epoch_fn);
  out.samples_per_epoch = data.forget.size();
  return out;
}

UnlearnOutcome unlearn_euk(const ModelState& learned, const UnlearnData& data,
                           const UnlearnConfig& config) {
  return last_layers(learned, data, config, true);
}

UnlearnOutcome unlearn_cfk(const ModelState& learned, const UnlearnData& data,
                           const UnlearnConfig& config) {
  return last_layers(learned, data, config, false);
}

UnlearnOutcome unlearn_neggrad_plus(const ModelState& learned, const UnlearnData& data,
                                    const UnlearnConfig& config) {
  require_nonempty(data.forget, "forget");
  require_nonempty(data.keep, "keep");
  const std::size_t unit = data.forget.size();
  const std::size_t keep_n = std::min(unit, data.keep.size());
  const double beta = config.neggrad_beta;

  Optimizer opt(learned, config.optim);
  Rng keep_rng = keep_stream(config);
  Rng forget_rng = forget_stream(config);
  ForwardCache cache;

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto keep_batches = make_batches(data.keep, subsample(data.keep.size(), keep_n, keep_rng),
                                     config.optim.batch_size);
    auto forget_batches = make_batches(
        data.forget, shuffled_indices(unit, forget_rng), config.optim.batch_size);
    const std::size_t steps = std::max(keep_batches.size(), forget_batches.size());
    for (std::size_t s = 0; s < steps; ++s) {
      Gradients g = model.params.zeros_like();
      if (s < keep_batches.size()) {
        g = nll_gradient(model, keep_batches[s], cache);
        g.scale(beta);
      }
      if (s < forget_batches.size()) {
        g.axpy(-(1.0 - beta), nll_gradient(model, forget_batches[s], cache));
      }
      opt.step(model, g);
    }
  };
  auto out = run_epochs(learned, learned, data, config, epoch_cap(Method::kNegGradPlus),
                        {{keep_n, 1.0}, {unit, 1.0}}, epoch_fn);
  out.samples_per_epoch = keep_n + unit;
  return out;
}

UnlearnOutcome unlearn_scrub(const ModelState& learned, const UnlearnData& data,
                             const UnlearnConfig& config) {
  require_nonempty(data.forget, "forget");
  require_nonempty(data.keep, "keep");
  const std::size_t unit = data.forget.size();
  const std::size_t keep_n = std::min(unit, data.keep.size());
  const ModelState& teacher = learned;

  Optimizer opt(learned, config.optim);
  Rng keep_rng = keep_stream(config);
  Rng forget_rng = forget_stream(config);
  ForwardCache tc, sc;

  // alpha * KL(T||S) + beta * NLL on a keep batch, token averaged.
  auto keep_grad = [&](const ModelState& student, std::span<const TokenSeq> batch) {
    forward_loss(teacher, batch, &tc);
    LossStats stats = forward_loss(student, batch, &sc);
    if (!std::isfinite(stats.mean_nll)) {
      throw Error(ErrorCode::kNumeric, "loss is not finite");
    }
    const double w = 1.0 / static_cast<double>(sc.positions);
    Matrix nll = nll_logit_grad(sc, 1.0);
    Matrix dz(sc.positions, sc.probs.cols);
    for (std::size_t i = 0; i < dz.data.size(); ++i) {
      const double kl = sc.probs.data[i] - tc.probs.data[i];
      dz.data[i] = (config.scrub_alpha * kl + config.scrub_beta * nll.data[i]) * w;
    }
    return backward_from_logits(student, sc, dz);
  };
  auto forget_grad = [&](const ModelState& student, std::span<const TokenSeq> batch) {
    forward_loss(teacher, batch, &tc);
    forward_loss(student, batch, &sc);
    const double w = 1.0 / static_cast<double>(sc.positions);
    return backward_from_logits(student, sc, kl_logit_grad(tc, sc, w));
  };

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto keep_batches = make_batches(data.keep, subsample(data.keep.size(), keep_n, keep_rng),
                                     config.optim.batch_size);
    auto forget_batches = make_batches(
        data.forget, shuffled_indices(unit, forget_rng), config.optim.batch_size);
    const std::size_t steps = std::max(keep_batches.size(), forget_batches.size());
    for (std::size_t s = 0; s < steps; ++s) {
      Gradients g = model.params.zeros_like();
      if (s < keep_batches.size()) g = keep_grad(model, keep_batches[s]);
      if (s < forget_batches.size()) {
        g.axpy(-config.scrub_gamma, forget_grad(model, forget_batches[s]));
      }
      opt.step(model, g);
    }
  };
  auto out = run_epochs(learned, learned, data, config, epoch_cap(Method::kScrub),
                        {{keep_n, 1.0}, {unit, 1.0}}, epoch_fn);
  out.samples_per_epoch = keep_n + unit;
  return out;
}

UnlearnOutcome unlearn_langevin(const ModelState& learned, const UnlearnData& data,
                                const UnlearnConfig& config) {
  require_nonempty(data.forget, "forget");
  require_nonempty(data.keep, "keep");
  const std::size_t keep_n = std::min(data.forget.size(), data.keep.size());
  Rng keep_rng = keep_stream(config);
  Rng noise_rng = make_rng(config.seed ^ config.dp.noise_seed, "noise");

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto idx = subsample(data.keep.size(), keep_n, keep_rng);
    for (const auto& batch : make_batches(data.keep, idx, config.optim.batch_size)) {
      auto grads = per_sample_gradients(model, batch);
      dpsgd_step(model, grads, config.dp, config.optim, noise_rng);
    }
  };
  auto out = run_epochs(learned, learned, data, config, epoch_cap(Method::kLangevin),
                        {{keep_n, 1.0}}, epoch_fn);
  out.samples_per_epoch = keep_n;
  return out;
}

UnlearnOutcome finetune_keep(const ModelState& learned, const UnlearnData& data,
                             const UnlearnConfig& config, std::size_t epochs,
                             bool per_sample_average) {
  require_nonempty(data.forget, "forget");
  require_nonempty(data.keep, "keep");
  const std::size_t keep_n = std::min(data.forget.size(), data.keep.size());
  UnlearnConfig cfg = config;
  cfg.epochs_override = epochs;

  Optimizer opt(learned, cfg.optim);
  Rng keep_rng = keep_stream(cfg);
  ForwardCache cache;

  auto epoch_fn = [&](ModelState& model, std::size_t) {
    auto idx = subsample(data.keep.size(), keep_n, keep_rng);
    for (const auto& batch : make_batches(data.keep, idx, cfg.optim.batch_size)) {
      if (per_sample_average) {
        auto grads = per_sample_gradients(model, batch);
        opt.step(model, average_gradients(grads));
      } else {
        opt.step(model, nll_gradient(model, batch, cache));
      }
    }
  };
  auto out = run_epochs(learned, learned, data, cfg, epochs, {{keep_n, 1.0}}, epoch_fn);
  out.samples_per_epoch = keep_n;
  return out;
}

UnlearnOutcome unlearn(const ModelState& learned, const UnlearnData& data,
                       const UnlearnConfig& config) {
  config.validate();
  switch (config.method) {
    case Method::kRl: return unlearn_random_labels(learned, data, config);
    case Method::kEuk: return unlearn_euk(learned, data, config);
    case Method::kCfk: return unlearn_cfk(learned, data, config);
    case Method::kGa: return unlearn_gradient_ascent(learned, data, config);
    case Method::kNegGradPlus: return unlearn_neggrad_plus(learned, data, config);
    case Method::kScrub: return unlearn_scrub(learned, data, config);
    case Method::kLangevin: return unlearn_langevin(learned, data, config);
  }
  throw Error(ErrorCode::kConfig, "unhandled method");
}

}  // namespace privleak
