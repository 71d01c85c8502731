#include "privleak/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "json.hpp"
#include "privleak/checkpoint.hpp"
#include "privleak/error.hpp"
#include "privleak/report.hpp"
#include "privleak/rng.hpp"

namespace privleak {

namespace fs = std::filesystem;

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kPartition: return "partition";
    case Stage::kTrain: return "train";
    case Stage::kUnlearn: return "unlearn";
    case Stage::kAttack: return "attack";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kIngest, Stage::kPartition, Stage::kTrain, Stage::kUnlearn,
                  Stage::kAttack, Stage::kReport}) {
    if (stage_name(s) == name) return s;
  }
  throw Error(ErrorCode::kConfig, "unknown stage '" + std::string(name) + "'");
}

std::string_view sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kUnlearnEpochs: return "unlearn_epochs";
    case SweepAxis::kForgetFrac: return "forget_frac";
    case SweepAxis::kNoiseScale: return "noise_scale";
    case SweepAxis::kMaxUnits: return "max_units";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  for (SweepAxis a : {SweepAxis::kUnlearnEpochs, SweepAxis::kForgetFrac,
                      SweepAxis::kNoiseScale, SweepAxis::kMaxUnits}) {
    if (sweep_axis_name(a) == name) return a;
  }
  throw Error(ErrorCode::kConfig, "unknown sweep axis '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

ModelCache::ModelCache(fs::path dir) : dir_(std::move(dir)) {}

ModelState ModelCache::get_or_train(const std::string& key,
                                    const std::function<ModelState()>& train_fn,
                                    bool* hit) {
  const fs::path file = dir_.empty() ? fs::path{} : dir_ / (key + ".ckpt");
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = models_.find(key);
    if (it != models_.end()) {
      if (hit) *hit = true;
      return *it->second;
    }
  }
  if (!file.empty() && fs::exists(file)) {
    auto model = std::make_shared<const ModelState>(load_checkpoint(file));
    std::lock_guard<std::mutex> lock(mu_);
    models_.emplace(key, model);
    if (hit) *hit = true;
    return *model;
  }
  auto model = std::make_shared<const ModelState>(train_fn());
  if (!file.empty()) save_checkpoint(*model, file);
  std::lock_guard<std::mutex> lock(mu_);
  models_.emplace(key, model);
  if (hit) *hit = false;
  return *model;
}

std::size_t ModelCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return models_.size();
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

StageError make_error(Stage stage, std::string task, const std::exception& e) {
  std::string code = "E_UNKNOWN";
  if (const auto* pe = dynamic_cast<const Error*>(&e)) {
    code = std::string(error_code_name(pe->code()));
  }
  return {std::string(stage_name(stage)), std::move(task), code, e.what()};
}

std::string corpus_digest(const Corpus& corpus) {
  std::string buf;
  for (const auto& s : corpus) {
    buf += s.id;
    buf.push_back('\0');
    buf += s.text;
    buf.push_back('\n');
  }
  return sha256_hex(buf);
}

std::string seqs_digest(std::span<const TokenSeq> seqs) {
  std::string buf;
  for (const auto& seq : seqs) {
    const auto n = static_cast<std::uint32_t>(seq.size());
    buf.append(reinterpret_cast<const char*>(&n), sizeof n);
    buf.append(reinterpret_cast<const char*>(seq.data()), seq.size() * sizeof(TokenId));
  }
  return sha256_hex(buf);
}

std::vector<std::uint64_t> sample_keys(const Corpus& corpus) {
  std::vector<std::uint64_t> keys;
  keys.reserve(corpus.size());
  for (const auto& s : corpus) keys.push_back(sample_key(s.id));
  return keys;
}

std::string train_key(std::span<const TokenSeq> data,
                      std::span<const std::uint64_t> keys, const ModelConfig& m,
                      const TrainConfig& t, const std::optional<DpSgdConfig>& dp) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model %zu %zu %zu %zu %zu %.17g %llu|train %.17g %zu %zu %d %.17g "
                "%.17g %.17g %.17g %llu|",
                m.vocab_size, m.embed_dim, m.context_window, m.hidden_blocks,
                m.hidden_dim, m.init_scale, static_cast<unsigned long long>(m.init_seed),
                t.learning_rate, t.batch_size, t.epochs, static_cast<int>(t.optimizer),
                t.weight_decay, t.beta1, t.beta2, t.epsilon,
                static_cast<unsigned long long>(t.shuffle_seed));
  std::string key = buf;
  if (dp) {
    std::snprintf(buf, sizeof buf, "dp %.17g %.17g %llu", dp->noise_scale, dp->clip_norm,
                  static_cast<unsigned long long>(dp->noise_seed));
    key += buf;
  }
  key += "|keys";
  for (auto k : keys) key += " " + std::to_string(k);
  return sha256_hex(seqs_digest(data) + "|" + key);
}

bool has_method(const RunConfig& c, Method m) {
  return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end();
}

std::size_t scenario_index(Scenario s) { return static_cast<std::size_t>(s); }

// Base models per scenario; the noisy pair only when Langevin is selected.
struct BaseModels {
  ModelState learn[3];
  ModelState retrain[3];
  std::optional<ModelState> noisy_learn[3];
  std::optional<ModelState> noisy_retrain[3];
  double baseline[3] = {0, 0, 0};
  double noisy_baseline[3] = {0, 0, 0};
};

struct AttackTarget {
  std::string model;
  Scenario scenario;
  const ModelState* state;
};

class Runner {
 public:
  Runner(const RunConfig& config, ModelCache& cache) : cfg_(config), cache_(cache) {
    out_ = cfg_.output_dir;
    r_.config = cfg_;
    r_.config_hash = run_config_hash(cfg_);
  }

  RunResult execute(Stage until) {
    stage(Stage::kIngest, [&] { ingest(); });
    if (until == Stage::kIngest) return finish();
    stage(Stage::kPartition, [&] { partition(); });
    if (until == Stage::kPartition) return finish();
    stage(Stage::kTrain, [&] { train_base(); });
    if (until == Stage::kTrain) return finish();
    stage(Stage::kUnlearn, [&] { unlearn_all(); });
    if (until == Stage::kUnlearn) return finish();
    stage(Stage::kAttack, [&] { attack_all(); });
    if (until == Stage::kAttack) return finish();
    stage(Stage::kReport, [&] {
      evaluate_records();
      emit_report();
    });
    return finish();
  }

 private:
  template <typename Fn>
  void stage(Stage s, Fn&& fn) {
    const auto start = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      r_.errors.push_back(make_error(s, "", e));
      timing(s, start);
      write_manifest();
      throw StageFailure(s, e.what());
    }
    timing(s, start);
    r_.completed = s;
  }

  void timing(Stage s, Clock::time_point start) {
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    r_.stage_seconds.emplace_back(std::string(stage_name(s)), secs);
  }

  void write(const std::string& role, const fs::path& rel, std::string_view bytes) {
    write_text_file(out_ / rel, bytes);
    r_.files[role] = (out_ / rel).generic_string();
  }

  void write_model(const std::string& role, const fs::path& rel, const ModelState& m) {
    save_checkpoint(m, out_ / rel);
    r_.files[role] = (out_ / rel).generic_string();
  }

  void write_manifest() {
    try {
      write("manifest", "manifest.json", manifest_json(r_));
    } catch (const std::exception&) {
      // The manifest is best effort when the output directory is unusable.
    }
  }

  RunResult finish() {
    write_manifest();
    return std::move(r_);
  }

  // -- stages ---------------------------------------------------------------

  void ingest() {
    data_ = ingest_corpus(cfg_);
    r_.corpus_hash = corpus_digest(data_.corpus);
    r_.corpus_size = data_.corpus.size();
    r_.vocab_size = data_.vocab.size();

    const PiiHistogram hist = build_histogram(data_.corpus);
    write("histogram", "ingest/histogram.json", histogram_to_json(hist));
    std::string spans;
    for (const auto& s : data_.corpus) {
      if (!s.pii) continue;
      json j = {{"id", s.id},
                {"value", s.pii->full_value},
                {"group", s.pii->group_value},
                {"begin", s.pii->span.begin},
                {"end", s.pii->span.end}};
      spans += j.dump() + "\n";
    }
    write("pii_spans", "ingest/pii_spans.jsonl", spans);
    write("vocab", "ingest/vocab.json", json(data_.vocab.tokens()).dump() + "\n");
  }

  void partition() {
    partition_data(cfg_, data_);
    r_.train_size = data_.pool.size();
    r_.test_size = data_.test.size();
    r_.scenarios = data_.scenarios;

    std::vector<std::string> train_ids, test_ids;
    for (const auto& s : data_.pool) train_ids.push_back(s.id);
    for (const auto& s : data_.test) test_ids.push_back(s.id);
    write("split", "partition/split.json",
          json({{"train", train_ids}, {"test", test_ids}}).dump() + "\n");
    write("scenarios", "partition/scenarios.json", scenarios_to_json(r_.scenarios));
  }

  void train_base() {
    model_cfg_ = base_model_config(cfg_, data_.vocab.size());
    r_.parameter_count = model_cfg_.parameter_count();
    const TrainConfig plain = base_train_config(cfg_, false);
    const TrainConfig noisy = base_train_config(cfg_, true);
    const DpSgdConfig dp = base_dp_config(cfg_);

    struct Job {
      std::string set;
      const std::vector<TokenSeq>* data;
      const std::vector<std::uint64_t>* keys;
      bool noisy;
      ModelState model;
      bool hit = false;
    };
    // Unique training sets: Random and Minority share the pool; Random and
    // Canary share the Random keep set.
    std::vector<Job> jobs;
    const bool with_noisy = has_method(cfg_, Method::kLangevin);
    for (bool n : {false, true}) {
      if (n && !with_noisy) continue;
      jobs.push_back({"pool", &data_.pool_seqs, &data_.pool_keys, n, {}});
      jobs.push_back(
          {"canary_train", &data_.canary_train_seqs, &data_.canary_train_keys, n, {}});
      jobs.push_back({"keep_random", &data_.keep_seqs[0], &data_.keep_keys[0], n, {}});
      jobs.push_back({"keep_minority", &data_.keep_seqs[2], &data_.keep_keys[2], n, {}});
    }
    const ModelState init = init_model(model_cfg_);
    parallel_for(jobs.size(), cfg_.workers, [&](std::size_t i) {
      Job& job = jobs[i];
      const TrainConfig& tc = job.noisy ? noisy : plain;
      const std::optional<DpSgdConfig> dpc =
          job.noisy ? std::optional<DpSgdConfig>(dp) : std::nullopt;
      const std::string key = train_key(*job.data, *job.keys, model_cfg_, tc, dpc);
      job.model = cache_.get_or_train(
          key, [&] { return train(init, *job.data, tc, dpc, *job.keys); }, &job.hit);
    });

    auto find = [&](const std::string& set, bool n) -> const Job& {
      for (const auto& j : jobs) {
        if (j.set == set && j.noisy == n) return j;
      }
      throw Error(ErrorCode::kConfig, "missing training job " + set);
    };
    for (bool n : {false, true}) {
      if (n && !with_noisy) continue;
      const std::string prefix = n ? "noisy_" : "";
      for (Scenario s : kAllScenarios) {
        const auto i = scenario_index(s);
        const std::string learn_set = s == Scenario::kCanary ? "canary_train" : "pool";
        const std::string keep_set =
            s == Scenario::kMinority ? "keep_minority" : "keep_random";
        const Job& lj = find(learn_set, n);
        const Job& rj = find(keep_set, n);
        if (n) {
          base_.noisy_learn[i] = lj.model;
          base_.noisy_retrain[i] = rj.model;
        } else {
          base_.learn[i] = lj.model;
          base_.retrain[i] = rj.model;
        }
        const std::string sname(scenario_name(s));
        add_base(prefix + "learn/" + sname, learn_set, lj);
        add_base(prefix + "retrain/" + sname, keep_set, rj);
      }
    }

    // Stop-rule baselines: each pipeline's own No-Unlearn model on D_train.
    for (Scenario s : kAllScenarios) {
      const auto i = scenario_index(s);
      base_.baseline[i] = perplexity(base_.learn[i], data_.train_seqs(s));
      if (base_.noisy_learn[i]) {
        base_.noisy_baseline[i] = perplexity(*base_.noisy_learn[i], data_.train_seqs(s));
      }
    }
  }

  template <typename Job>
  void add_base(const std::string& name, const std::string& set, const Job& job) {
    BaseModelInfo info;
    info.name = name;
    info.hash = model_hash(job.model);
    info.training_set = set;
    info.training_samples = job.data->size();
    info.test_perplexity = perplexity(job.model, data_.test_seqs);
    info.from_cache = job.hit;
    r_.base_models.push_back(info);
    std::string file = name;
    std::replace(file.begin(), file.end(), '/', '_');
    write_model("checkpoint:" + name, fs::path("checkpoints") / "base" / (file + ".ckpt"),
                job.model);
  }

  void unlearn_all() {
    struct Task {
      Scenario scenario;
      Method method;
    };
    std::vector<Task> tasks;
    for (Scenario s : kAllScenarios) {
      for (Method m : cfg_.methods) tasks.push_back({s, m});
    }
    std::vector<MethodRun> runs(tasks.size());
    std::vector<std::optional<ModelState>> selected(tasks.size());
    std::vector<std::vector<ModelState>> epochs(tasks.size());

    parallel_for(tasks.size(), cfg_.workers, [&](std::size_t t) {
      const Task& task = tasks[t];
      const auto i = scenario_index(task.scenario);
      const bool noisy = task.method == Method::kLangevin;
      MethodRun& run = runs[t];
      run.method = std::string(method_name(task.method));
      run.scenario = task.scenario;

      const ModelState& learned = noisy ? *base_.noisy_learn[i] : base_.learn[i];
      UnlearnData d;
      d.forget = data_.forget_seqs[i];
      d.keep = data_.keep_seqs[i];
      d.train_eval = data_.train_seqs(task.scenario);
      d.baseline_perplexity = noisy ? base_.noisy_baseline[i] : base_.baseline[i];
      run.baseline_perplexity = d.baseline_perplexity;

      UnlearnConfig uc = cfg_.method_config(task.method);
      uc.seed = derive_seed(cfg_.master_seed, "unlearn/" +
                                                  std::string(scenario_name(task.scenario)) +
                                                  "/" + run.method);
      try {
        UnlearnOutcome out = unlearn(learned, d, uc);
        run.ok = true;
        run.selected_epoch = out.selected_epoch;
        run.epochs_run = out.checkpoints.size() - 1;
        run.train_perplexities = out.train_perplexities;
        run.ledger = out.ledger;
        run.samples_per_epoch = out.samples_per_epoch;
        run.param_fraction = out.param_fraction;
        run.diverged = out.diverged;
        run.note = out.note;
        run.checkpoint_hash = model_hash(out.selected);
        run.test_perplexity = perplexity(out.selected, data_.test_seqs);
        selected[t] = std::move(out.selected);
        if (cfg_.write_epoch_checkpoints) epochs[t] = std::move(out.checkpoints);
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
    });

    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const std::string sname(scenario_name(tasks[t].scenario));
      if (!runs[t].ok) {
        StageError err;
        err.stage = std::string(stage_name(Stage::kUnlearn));
        err.task = sname + "/" + runs[t].method;
        err.code = runs[t].error.substr(0, runs[t].error.find(':'));
        err.message = runs[t].error;
        r_.errors.push_back(err);
        continue;
      }
      const fs::path dir = fs::path("checkpoints") / "unlearn" / sname;
      write_model("checkpoint:unlearn/" + sname + "/" + runs[t].method,
                  dir / (runs[t].method + ".ckpt"), *selected[t]);
      for (std::size_t e = 0; e < epochs[t].size(); ++e) {
        write_model("checkpoint:unlearn/" + sname + "/" + runs[t].method + "/epoch" +
                        std::to_string(e),
                    dir / runs[t].method / ("epoch_" + std::to_string(e) + ".ckpt"),
                    epochs[t][e]);
      }
      unlearned_[runs[t].method][scenario_index(tasks[t].scenario)] =
          std::move(*selected[t]);
    }
    r_.methods = std::move(runs);
  }

  void attack_all() {
    std::vector<AttackTarget> targets;
    const bool with_noisy = has_method(cfg_, Method::kLangevin);
    for (Scenario s : kAllScenarios) {
      const auto i = scenario_index(s);
      targets.push_back({"retrain", s, &base_.retrain[i]});
      targets.push_back({std::string(kNoUnlearn), s, &base_.learn[i]});
      if (with_noisy) {
        targets.push_back({"retrain_noisy", s, &*base_.noisy_retrain[i]});
        targets.push_back({std::string(kNoUnlearnNoisy), s, &*base_.noisy_learn[i]});
      }
      for (Method m : cfg_.methods) {
        const std::string name(method_name(m));
        auto it = unlearned_.find(name);
        if (it != unlearned_.end() && it->second[i]) {
          targets.push_back({name, s, &*it->second[i]});
        }
      }
    }

    const std::size_t n_attacks = cfg_.attacks.size();
    std::vector<std::vector<AucEntry>> entries(targets.size());
    std::vector<std::vector<AttackScore>> scores(targets.size());
    std::vector<std::optional<StageError>> failures(targets.size());
    std::vector<double> test_ppl(targets.size(), 0.0);
    parallel_for(targets.size(), cfg_.workers, [&](std::size_t t) {
      const AttackTarget& target = targets[t];
      const auto i = scenario_index(target.scenario);
      try {
        const LossStats forget_stats = evaluate(*target.state, data_.forget_seqs[i]);
        const LossStats test_stats = test_stats_for(*target.state);
        test_ppl[t] = perplexity(test_stats);
        for (std::size_t a = 0; a < n_attacks; ++a) {
          PopulationScores pop = score_population(forget_stats, data_.forget[i], test_stats,
                                                  data_.test, cfg_.attacks[a], cfg_.attack);
          AucEntry entry;
          entry.model = target.model;
          entry.scenario = target.scenario;
          entry.attack = cfg_.attacks[a];
          entry.result = auc(pop.scores);
          entry.excluded = pop.excluded;
          entries[t].push_back(std::move(entry));
          scores[t].insert(scores[t].end(), pop.scores.begin(), pop.scores.end());
        }
      } catch (const std::exception& e) {
        failures[t] = make_error(Stage::kAttack,
                                 std::string(scenario_name(target.scenario)) + "/" +
                                     target.model,
                                 e);
      }
    });

    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (failures[t]) {
        r_.errors.push_back(*failures[t]);
        continue;
      }
      for (auto& e : entries[t]) r_.aucs.push_back(std::move(e));
      if (cfg_.write_scores) {
        const std::string sname(scenario_name(targets[t].scenario));
        write("scores:" + sname + "/" + targets[t].model,
              fs::path("scores") / sname / (targets[t].model + ".csv"),
              scores_to_csv(scores[t]));
      }
      const auto i = scenario_index(targets[t].scenario);
      test_ppl_[targets[t].model][i] = test_ppl[t];
    }
  }

  // Test-set statistics are shared by every scenario that uses the same model.
  LossStats test_stats_for(const ModelState& model) {
    const std::string key = model_hash(model);
    {
      std::lock_guard<std::mutex> lock(stats_mu_);
      auto it = test_stats_.find(key);
      if (it != test_stats_.end()) return it->second;
    }
    LossStats stats = evaluate(model, data_.test_seqs);
    std::lock_guard<std::mutex> lock(stats_mu_);
    return test_stats_.emplace(key, std::move(stats)).first->second;
  }

  const AucEntry* find_auc(const std::string& model, Scenario s, Attack a) const {
    for (const auto& e : r_.aucs) {
      if (e.model == model && e.scenario == s && e.attack == a) return &e;
    }
    return nullptr;
  }

  void evaluate_records() {
    std::vector<std::string> models{std::string(kNoUnlearn)};
    if (has_method(cfg_, Method::kLangevin)) models.emplace_back(kNoUnlearnNoisy);
    for (Method m : cfg_.methods) models.emplace_back(method_name(m));

    std::vector<PrivLeakRecord> complete;
    for (const auto& model : models) {
      const bool noisy = model == kNoUnlearnNoisy || model == method_name(Method::kLangevin);
      const std::string retrain = noisy ? "retrain_noisy" : "retrain";
      for (Attack a : cfg_.attacks) {
        std::vector<PrivLeakRecord> group;
        for (Scenario s : kAllScenarios) {
          const AucEntry* u = find_auc(model, s, a);
          const AucEntry* rt = find_auc(retrain, s, a);
          if (!u || !rt) continue;
          PrivLeakRecord rec;
          rec.method = model;
          rec.attack = a;
          rec.scenario = s;
          rec.auc_unlearn = u->result.auc;
          rec.auc_retrain = rt->result.auc;
          try {
            rec.pl = privleak(rec.auc_unlearn, rec.auc_retrain);
          } catch (const std::exception& e) {
            r_.errors.push_back(make_error(Stage::kReport,
                                           std::string(scenario_name(s)) + "/" + model +
                                               "/" + std::string(attack_name(a)),
                                           e));
            continue;
          }
          rec.perplexity = test_ppl_[model][scenario_index(s)];
          group.push_back(rec);
        }
        r_.records.insert(r_.records.end(), group.begin(), group.end());
        // Only (method, attack) groups with every scenario enter the summary.
        if (group.size() == std::size(kAllScenarios)) {
          complete.insert(complete.end(), group.begin(), group.end());
        }
      }
    }
    r_.summary = aggregate(complete);
  }

  void emit_report() {
    r_.completed = Stage::kReport;
    write("report", "report.json", report_json(r_));
    write("table", "table.csv", table_csv(r_.summary, cfg_.attacks));
    write("records", "records.csv", records_csv(r_.records));
    r_.report_emitted = true;
  }

  const RunConfig& cfg_;
  ModelCache& cache_;
  fs::path out_;
  RunResult r_;
  PreparedData data_;
  ModelConfig model_cfg_;
  BaseModels base_;
  std::map<std::string, std::array<std::optional<ModelState>, 3>> unlearned_;
  std::map<std::string, std::array<double, 3>> test_ppl_;
  std::mutex stats_mu_;
  std::map<std::string, LossStats> test_stats_;
};

}  // namespace

std::uint64_t sample_key(std::string_view id) {
  if (id.size() > kCanarySuffix.size() && id.ends_with(kCanarySuffix)) {
    id.remove_suffix(kCanarySuffix.size());
  }
  return fnv1a64(id);
}

PreparedData ingest_corpus(const RunConfig& config) {
  if (config.corpus.empty()) throw Error(ErrorCode::kConfig, "no corpus path configured");
  PreparedData d;
  d.corpus = annotate_pii(load_corpus(config.corpus), config.pattern.compile());
  if (d.corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus has no samples");
  d.vocab = build_vocab(d.corpus, config.tokenizer.mode, config.tokenizer.vocab_size);
  return d;
}

void partition_data(const RunConfig& config, PreparedData& d) {
  const auto split =
      split_train_test(d.corpus, config.test_frac, derive_seed(config.master_seed, "split"));
  d.pool = split.train;
  d.test = split.test;
  d.scenarios = build_scenarios(d.pool, config.forget_frac, config.master_seed,
                                config.pattern.compile());

  const auto max_len = config.tokenizer.max_len;
  d.pool_seqs = encode_corpus(d.vocab, d.pool, max_len);
  d.canary_train_seqs = encode_corpus(d.vocab, d.scenarios.canary_train, max_len);
  d.test_seqs = encode_corpus(d.vocab, d.test, max_len);
  d.pool_keys = sample_keys(d.pool);
  d.canary_train_keys = sample_keys(d.scenarios.canary_train);
  for (Scenario s : kAllScenarios) {
    const auto i = scenario_index(s);
    d.forget[i] = d.scenarios.forget_corpus(d.pool, s);
    d.forget_seqs[i] = encode_corpus(d.vocab, d.forget[i], max_len);
    const Corpus keep = d.scenarios.keep_corpus(d.pool, s);
    d.keep_seqs[i] = encode_corpus(d.vocab, keep, max_len);
    d.keep_keys[i] = sample_keys(keep);
  }
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData d = ingest_corpus(config);
  partition_data(config, d);
  return d;
}

ModelConfig base_model_config(const RunConfig& config, std::size_t vocab_size) {
  ModelConfig m = config.model;
  m.vocab_size = vocab_size;
  m.init_seed = derive_seed(config.master_seed, "init");
  m.validate();
  return m;
}

TrainConfig base_train_config(const RunConfig& config, bool noisy) {
  TrainConfig t = noisy ? config.noisy_train : config.train;
  t.shuffle_seed =
      derive_seed(config.master_seed, noisy ? "noisy_train/shuffle" : "train/shuffle");
  return t;
}

DpSgdConfig base_dp_config(const RunConfig& config) {
  DpSgdConfig dp = config.dp;
  dp.noise_seed = derive_seed(config.master_seed, "noisy_train/noise");
  return dp;
}

RunResult run(const RunConfig& config, Stage until, ModelCache* cache) {
  ModelCache local;
  Runner runner(config, cache ? *cache : local);
  return runner.execute(until);
}

RunConfig apply_sweep_value(const RunConfig& config, SweepAxis axis, double value) {
  RunConfig c = config;
  auto for_methods = [&](auto&& fn) {
    fn(c.unlearn);
    for (Method m : kAllMethods) {
      auto it = c.per_method.find(m);
      if (it == c.per_method.end()) it = c.per_method.emplace(m, c.method_config(m)).first;
      fn(it->second);
    }
  };
  switch (axis) {
    case SweepAxis::kUnlearnEpochs: {
      if (!(value >= 0.0) || value != std::floor(value)) {
        throw Error(ErrorCode::kConfig, "unlearn_epochs values must be whole numbers");
      }
      const auto e = static_cast<std::size_t>(value);
      for_methods([&](UnlearnConfig& u) { u.epochs_override = e; });
      break;
    }
    case SweepAxis::kForgetFrac:
      c.forget_frac = value;
      break;
    case SweepAxis::kNoiseScale:
      c.dp.noise_scale = value;
      for_methods([&](UnlearnConfig& u) { u.dp.noise_scale = value; });
      break;
    case SweepAxis::kMaxUnits:
      for_methods([&](UnlearnConfig& u) { u.max_units = value; });
      break;
  }
  c.dp.validate();
  for (Method m : kAllMethods) c.method_config(m).validate();
  return c;
}

std::vector<RunResult> sweep(const RunConfig& config, SweepAxis axis,
                             const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::kConfig, "sweep needs at least one value");
  const fs::path dir = config.output_dir / ("sweep_" + std::string(sweep_axis_name(axis)));
  ModelCache cache;
  std::vector<RunResult> results;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig c = apply_sweep_value(config, axis, values[i]);
    char label[64];
    std::snprintf(label, sizeof label, "%02zu_%g", i, values[i]);
    c.output_dir = dir / label;
    results.push_back(run(c, Stage::kReport, &cache));
  }
  for (Attack a : config.attacks) {
    write_text_file(dir / ("curve_" + std::string(attack_name(a)) + ".tsv"),
                    curve_tsv(axis, values, results, a));
  }
  return results;
}

}  // namespace privleak
