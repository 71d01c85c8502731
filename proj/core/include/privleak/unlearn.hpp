#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privleak/lm.hpp"
#include "privleak/optim.hpp"

namespace privleak {

enum class Method { kRl, kEuk, kCfk, kGa, kNegGradPlus, kScrub, kLangevin };

inline constexpr Method kAllMethods[] = {Method::kRl,    Method::kEuk,
                                         Method::kCfk,   Method::kGa,
                                         Method::kNegGradPlus, Method::kScrub,
                                         Method::kLangevin};

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

/// Which data a method consumes; fixes its epoch cap.
enum class MethodFamily { kForgetOnly, kKeepOnly, kBothSets, kLastLayers };
MethodFamily method_family(Method m);

/// Epoch cap per family under a 10-unit budget: 10, 10, 5, 10.
std::size_t epoch_cap(Method m);

struct UnlearnConfig {
  Method method = Method::kGa;
  /// learning_rate, batch_size, optimizer and AdamW moments; epochs unused.
  TrainConfig optim{};
  double neggrad_beta = 0.999;
  double scrub_alpha = 0.999;
  double scrub_beta = 1.0;
  double scrub_gamma = 0.01;
  std::size_t k = 3;
  DpSgdConfig dp{};
  double max_units = 10.0;
  /// Forces exactly this many epochs (bounded by the budget) and selects
  /// the last one. Used by the unlearn-epoch ablation.
  std::optional<std::size_t> epochs_override;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LedgerEvent {
  std::size_t epoch = 0;
  std::size_t samples = 0;
  double param_fraction = 1.0;
};

/// Gradient budget in Complexity Units: one unit is one epoch of full-model
/// gradients over unit_size (= |D_forget|) samples.
class ComplexityLedger {
 public:
  ComplexityLedger() = default;
  ComplexityLedger(std::size_t unit_size, double max_units);

  static double units_for(std::size_t unit_size, std::size_t samples,
                          double param_fraction);

  bool can_charge(std::size_t samples, double param_fraction) const;
  /// Throws E_BUDGET, leaving the ledger unchanged, past max_units.
  void charge(std::size_t epoch, std::size_t samples, double param_fraction);

  std::size_t unit_size() const { return unit_size_; }
  double max_units() const { return max_units_; }
  double charged() const { return charged_; }
  const std::vector<LedgerEvent>& events() const { return events_; }

  /// Slack for accumulated rounding in `charged`.
  static constexpr double kTolerance = 1e-9;

 private:
  std::size_t unit_size_ = 1;
  double max_units_ = 10.0;
  double charged_ = 0.0;
  std::vector<LedgerEvent> events_;
};

/// Inputs of one unlearning run. `train_eval` is D_train used by the
/// perplexity stop rule; leave it empty to run every epoch.
struct UnlearnData {
  std::span<const TokenSeq> forget;
  std::span<const TokenSeq> keep;
  std::span<const TokenSeq> train_eval;
  double baseline_perplexity = std::numeric_limits<double>::quiet_NaN();
};

struct UnlearnOutcome {
  std::vector<ModelState> checkpoints;       // [0] = input model, [e] = after epoch e
  std::vector<double> train_perplexities;    // [e-1] for epoch e; empty if not evaluated
  std::size_t selected_epoch = 0;
  ModelState selected;
  ComplexityLedger ledger;
  bool diverged = false;
  std::string note;
  std::size_t samples_per_epoch = 0;
  double param_fraction = 1.0;
};

/// First epoch (1-based) whose perplexity exceeds baseline + 1, otherwise
/// the last epoch; 0 for an empty sequence.
std::size_t select_checkpoint(std::span<const double> epoch_perplexities,
                              double baseline_perplexity);

UnlearnOutcome unlearn_random_labels(const ModelState& learned, const UnlearnData& data,
                                     const UnlearnConfig& config);
UnlearnOutcome unlearn_gradient_ascent(const ModelState& learned,
                                       const UnlearnData& data,
                                       const UnlearnConfig& config);
UnlearnOutcome unlearn_euk(const ModelState& learned, const UnlearnData& data,
                           const UnlearnConfig& config);
UnlearnOutcome unlearn_cfk(const ModelState& learned, const UnlearnData& data,
                           const UnlearnConfig& config);
UnlearnOutcome unlearn_neggrad_plus(const ModelState& learned, const UnlearnData& data,
                                    const UnlearnConfig& config);
UnlearnOutcome unlearn_scrub(const ModelState& learned, const UnlearnData& data,
                             const UnlearnConfig& config);
UnlearnOutcome unlearn_langevin(const ModelState& learned, const UnlearnData& data,
                                const UnlearnConfig& config);

/// Dispatches on config.method.
UnlearnOutcome unlearn(const ModelState& learned, const UnlearnData& data,
                       const UnlearnConfig& config);

/// Plain fine-tuning on a fresh |D_forget|-sized keep subsample per epoch,
/// drawing subsamples from the same stream the keep-consuming methods use.
/// With `per_sample_average` each step uses the mean of per-sequence
/// gradients (the DP-SGD averaging) instead of the token-weighted batch
/// gradient.
UnlearnOutcome finetune_keep(const ModelState& learned, const UnlearnData& data,
                             const UnlearnConfig& config, std::size_t epochs,
                             bool per_sample_average = false);

/// `count` labels uniform over [0, vocab_size).
std::vector<TokenId> draw_random_labels(Rng& rng, std::size_t vocab_size,
                                        std::size_t count);

/// Samples per epoch for EUk/CFk: max(1, floor(unit_size / ratio)).
std::size_t last_layer_samples(std::size_t unit_size, double ratio);

}  // namespace privleak
