#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privleak/config.hpp"
#include "privleak/eval.hpp"
#include "privleak/partition.hpp"
#include "privleak/unlearn.hpp"

namespace privleak {

enum class Stage { kIngest, kPartition, kTrain, kUnlearn, kAttack, kReport };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

/// Pseudo-methods evaluated alongside the unlearning methods.
inline constexpr std::string_view kNoUnlearn = "no_unlearn";
inline constexpr std::string_view kNoUnlearnNoisy = "no_unlearn_noisy";

struct StageError {
  std::string stage;
  std::string task;
  std::string code;  // E_* identifier, or "E_UNKNOWN"
  std::string message;
};

struct BaseModelInfo {
  std::string name;  // e.g. "learn/canary", "retrain/minority", "noisy_retrain/random"
  std::string hash;
  std::string training_set;
  std::size_t training_samples = 0;
  double test_perplexity = 0.0;
  bool from_cache = false;
};

struct MethodRun {
  std::string method;
  Scenario scenario = Scenario::kRandom;
  bool ok = false;
  std::string error;
  double baseline_perplexity = 0.0;
  std::size_t selected_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> train_perplexities;
  ComplexityLedger ledger;
  std::size_t samples_per_epoch = 0;
  double param_fraction = 1.0;
  bool diverged = false;
  std::string note;
  std::string checkpoint_hash;
  double test_perplexity = 0.0;
};

struct AucEntry {
  std::string model;  // method, pseudo-method or "retrain"
  Scenario scenario = Scenario::kRandom;
  Attack attack = Attack::kLoss;
  AucResult result;
  std::vector<std::string> excluded;
};

/// Everything a run produced. The report files are rendered from this.
struct RunResult {
  RunConfig config;
  std::string config_hash;
  std::string corpus_hash;
  std::size_t corpus_size = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t vocab_size = 0;
  std::size_t parameter_count = 0;
  ScenarioSet scenarios;
  std::vector<BaseModelInfo> base_models;
  std::vector<MethodRun> methods;
  std::vector<AucEntry> aucs;
  std::vector<PrivLeakRecord> records;
  MinorityAwareSummary summary;
  std::vector<StageError> errors;
  Stage completed = Stage::kIngest;
  bool report_emitted = false;

  // Not part of the deterministic report.
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::map<std::string, std::string> files;  // role -> path
};

/// Encoded corpora shared by the stages after partitioning.
struct PreparedData {
  Corpus corpus;  // full, PII-annotated
  Vocab vocab{TokenizerMode::kChar, {"<bos>", "<eos>", "<unk>"}};
  Corpus pool;    // D_train candidates
  Corpus test;    // held-out non-members
  ScenarioSet scenarios;
  std::vector<TokenSeq> pool_seqs;
  std::vector<TokenSeq> canary_train_seqs;
  std::vector<TokenSeq> test_seqs;
  std::array<Corpus, 3> forget;  // indexed by Scenario
  std::array<std::vector<TokenSeq>, 3> forget_seqs;
  std::array<std::vector<TokenSeq>, 3> keep_seqs;
  // Shuffle keys; a canary keeps the key of the sample it replaced so the
  // learned, canary and retrain models visit shared samples in one order.
  std::vector<std::uint64_t> pool_keys;
  std::vector<std::uint64_t> canary_train_keys;
  std::array<std::vector<std::uint64_t>, 3> keep_keys;

  const std::vector<TokenSeq>& train_seqs(Scenario s) const {
    return s == Scenario::kCanary ? canary_train_seqs : pool_seqs;
  }
  const std::vector<std::uint64_t>& train_keys(Scenario s) const {
    return s == Scenario::kCanary ? canary_train_keys : pool_keys;
  }
};

/// Loads and annotates the corpus and builds the vocabulary.
PreparedData ingest_corpus(const RunConfig& config);
/// Train/test split, scenarios, encodings and shuffle keys.
void partition_data(const RunConfig& config, PreparedData& data);
PreparedData prepare_data(const RunConfig& config);

/// Shuffle key of a sample id (canary suffix ignored).
std::uint64_t sample_key(std::string_view id);

/// Base-model architecture with vocab size and init seed filled in.
ModelConfig base_model_config(const RunConfig& config, std::size_t vocab_size);
/// Training schedule of the plain or noisy (DP-SGD) base models.
TrainConfig base_train_config(const RunConfig& config, bool noisy);
/// DP-SGD settings of the noisy base models.
DpSgdConfig base_dp_config(const RunConfig& config);

/// Trained base models keyed by a digest of (training data, model config,
/// train config, seeds). Entries are kept in memory and, when a directory is
/// given, as checkpoint files.
class ModelCache {
 public:
  explicit ModelCache(std::filesystem::path dir = {});

  /// Returns the cached model for `key` or trains and stores it.
  /// `hit` reports whether training was skipped.
  ModelState get_or_train(const std::string& key,
                          const std::function<ModelState()>& train_fn,
                          bool* hit = nullptr);

  std::size_t size() const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const ModelState>> models_;
};

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Exceptions are
/// rethrown after all tasks finish (the lowest index wins).
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

/// Executes the experiment graph up to and including `until`, writing the
/// artifacts of every completed stage under config.output_dir. Stage errors
/// of independent method runs are recorded, not thrown; a fatal error in a
/// shared stage throws StageFailure.
RunResult run(const RunConfig& config, Stage until = Stage::kReport,
              ModelCache* cache = nullptr);

class StageFailure : public std::runtime_error {
 public:
  StageFailure(Stage stage, const std::string& what)
      : std::runtime_error(std::string(stage_name(stage)) + ": " + what),
        stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

enum class SweepAxis { kUnlearnEpochs, kForgetFrac, kNoiseScale, kMaxUnits };

std::string_view sweep_axis_name(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view name);

/// Config with `axis` set to `value` for every selected method.
RunConfig apply_sweep_value(const RunConfig& config, SweepAxis axis, double value);

/// One run per value under <output_dir>/sweep_<axis>/<index>_<value>, sharing
/// trained base models, plus curve_<attack>.tsv files in the sweep directory.
std::vector<RunResult> sweep(const RunConfig& config, SweepAxis axis,
                             const std::vector<double>& values);

}  // namespace privleak
