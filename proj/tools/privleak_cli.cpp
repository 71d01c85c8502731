// privleak command line: corpus synthesis, staged pipeline runs and sweeps.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "privleak/config.hpp"
#include "privleak/error.hpp"
#include "privleak/pipeline.hpp"
#include "privleak/synth.hpp"

namespace {

using namespace privleak;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> methods;
  std::vector<std::string> attacks;
  std::optional<std::size_t> workers;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run config (JSON)")->required();
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--methods", f.methods, "Comma-separated unlearning methods")
      ->delimiter(',');
  cmd->add_option("--attacks", f.attacks, "Comma-separated attacks")->delimiter(',');
  cmd->add_option("--workers", f.workers, "Worker threads");
}

RunConfig resolve(const RunFlags& f) {
  RunConfig cfg = load_run_config(f.config);
  if (f.seed) cfg.master_seed = *f.seed;
  if (const char* env = std::getenv("PRIVLEAK_OUT_DIR"); env && *env) cfg.output_dir = env;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : f.methods) cfg.methods.push_back(parse_method(m));
  }
  if (!f.attacks.empty()) {
    cfg.attacks.clear();
    for (const auto& a : f.attacks) cfg.attacks.push_back(parse_attack(a));
  }
  if (f.workers) {
    if (*f.workers < 1) throw Error(ErrorCode::kConfig, "--workers must be >= 1");
    cfg.workers = *f.workers;
  }
  return cfg;
}

void print_summary(const RunResult& r) {
  std::printf("stage %s complete, output in %s\n",
              std::string(stage_name(r.completed)).c_str(),
              r.config.output_dir.string().c_str());
  for (const auto& row : r.summary.rows) {
    std::printf("  %-16s %-6s worst_pl %+.3f (%s)  ppl %.2f%s\n", row.method.c_str(),
                std::string(attack_name(row.attack)).c_str(), row.worst_pl,
                std::string(scenario_name(row.worst_scenario)).c_str(),
                row.worst_perplexity, row.underestimated ? "  underestimated" : "");
  }
  for (const auto& e : r.errors) {
    std::fprintf(stderr, "warning: %s %s: %s\n", e.stage.c_str(), e.task.c_str(),
                 e.message.c_str());
  }
}

int fail(std::string_view stage, const std::string& what) {
  std::fprintf(stderr, "privleak: %s failed: %s\n", std::string(stage).c_str(),
               what.c_str());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minority-aware evaluation of language-model unlearning"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_kind = "phone";
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Zipf PII corpus");
  synth_cmd->add_option("--n", synth.n_samples, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--zipf", synth.zipf_exponent, "Zipf exponent")
      ->capture_default_str();
  synth_cmd->add_option("--kind", synth_kind, "phone, email or year")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--pii-fraction", synth.pii_fraction,
                        "Fraction of samples carrying PII")
      ->capture_default_str();
  synth_cmd->add_option("--out,-o", synth_out, "Output JSONL file")->required();

  RunFlags flags;
  struct StageCmd {
    const char* name;
    const char* help;
    Stage until;
  };
  const StageCmd stage_cmds[] = {
      {"ingest", "Annotate PII, write histogram and vocabulary", Stage::kIngest},
      {"partition", "Build the Random/Canary/Minority forget sets", Stage::kPartition},
      {"train", "Train learned and retrain base models", Stage::kTrain},
      {"unlearn", "Run the selected unlearning methods", Stage::kUnlearn},
      {"attack", "Score every model with the selected attacks", Stage::kAttack},
      {"report", "Evaluate and write the report files", Stage::kReport},
      {"run", "Full pipeline (same as report)", Stage::kReport},
  };
  std::vector<std::pair<CLI::App*, Stage>> staged;
  for (const auto& sc : stage_cmds) {
    auto* cmd = app.add_subcommand(sc.name, sc.help);
    add_run_flags(cmd, flags);
    staged.emplace_back(cmd, sc.until);
  }

  std::string axis;
  std::vector<double> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "One run per axis value plus curve files");
  add_run_flags(sweep_cmd, flags);
  sweep_cmd
      ->add_option("--axis", axis, "unlearn_epochs, forget_frac, noise_scale or max_units")
      ->required();
  sweep_cmd->add_option("--values", values, "Comma-separated axis values")
      ->delimiter(',')
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (synth_cmd->parsed()) {
    try {
      synth.kind = parse_pii_kind(synth_kind);
      save_corpus(synth_corpus(synth), synth_out);
      std::printf("wrote %zu samples to %s\n", synth.n_samples, synth_out.c_str());
      return 0;
    } catch (const std::exception& e) {
      return fail("synth", e.what());
    }
  }

  RunConfig cfg;
  try {
    cfg = resolve(flags);
  } catch (const std::exception& e) {
    return fail("config", e.what());
  }

  try {
    if (sweep_cmd->parsed()) {
      const auto results = sweep(cfg, parse_sweep_axis(axis), values);
      for (const auto& r : results) print_summary(r);
      bool all = true;
      for (const auto& r : results) all = all && r.report_emitted;
      return all ? 0 : 1;
    }
    for (const auto& [cmd, until] : staged) {
      if (!cmd->parsed()) continue;
      const RunResult r = run(cfg, until);
      print_summary(r);
      if (until == Stage::kReport && !r.report_emitted) return 1;
      return 0;
    }
  } catch (const StageFailure& e) {
    return fail(stage_name(e.stage()), e.what());
  } catch (const std::exception& e) {
    return fail("run", e.what());
  }
  return 1;
}
