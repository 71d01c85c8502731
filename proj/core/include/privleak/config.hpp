#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privleak/attack.hpp"
#include "privleak/corpus.hpp"
#include "privleak/lm.hpp"
#include "privleak/optim.hpp"
#include "privleak/unlearn.hpp"

namespace privleak {

struct PatternSpec {
  std::string name = "phone_us";
  /// Empty for built-in patterns.
  std::string regex;
  std::size_t group = 1;

  PiiPattern compile() const;
};

struct TokenizerConfig {
  TokenizerMode mode = TokenizerMode::kChar;
  std::size_t vocab_size = 256;
  std::size_t max_len = 64;
};

/// Declarative experiment description. Every field has a default; the
/// unlearning and training defaults are the reference hyperparameters
/// (AdamW at 1e-5, batch 32, 5 epochs, beta 0.999, SCRUB 0.999/1/0.01,
/// k = 3, sigma 5e-4, clip 1, K = 20, seed 42).
struct RunConfig {
  std::filesystem::path corpus;
  PatternSpec pattern;
  TokenizerConfig tokenizer;
  ModelConfig model;  // vocab_size and init_seed are filled in by the pipeline
  TrainConfig train;  // shuffle_seed is filled in by the pipeline
  DpSgdConfig dp;     // used for the noisy (Langevin) training pair
  TrainConfig noisy_train;  // DP-SGD training of the noisy pair (plain SGD steps)
  double test_frac = 0.5;
  double forget_frac = 0.01;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<Attack> attacks{std::begin(kAllAttacks), std::end(kAllAttacks)};
  AttackConfig attack;
  UnlearnConfig unlearn;                       // shared defaults
  std::map<Method, UnlearnConfig> per_method;  // fully resolved per method
  std::uint64_t master_seed = 42;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;
  bool write_epoch_checkpoints = false;
  bool write_scores = true;

  /// Resolved settings for one method.
  UnlearnConfig method_config(Method m) const;
};

/// Parses JSON text. Relative corpus paths resolve against `base_dir`.
/// Throws E_CONFIG on unknown keys or wrong types.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical resolved snapshot; `include_execution` adds output_dir and
/// workers, which do not affect results.
std::string run_config_to_json(const RunConfig& config, bool include_execution = true);

/// SHA-256 of the result-relevant snapshot.
std::string run_config_hash(const RunConfig& config);

}  // namespace privleak
