#include "privleak/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "privleak/checkpoint.hpp"
#include "privleak/error.hpp"

namespace privleak {

using json = nlohmann::ordered_json;

PiiPattern PatternSpec::compile() const {
  if (regex.empty()) return PiiPattern::builtin(name);
  return PiiPattern(name, regex, group);
}

UnlearnConfig RunConfig::method_config(Method m) const {
  auto it = per_method.find(m);
  UnlearnConfig c = it == per_method.end() ? unlearn : it->second;
  c.method = m;
  return c;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) bad(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) bad("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

// Accepts numbers and the strings "inf"/"infinity".
void read_extended(const json& obj, const char* key, double& out,
                   const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (s == "inf" || s == "infinity") {
      out = std::numeric_limits<double>::infinity();
      return;
    }
    bad(where + "." + key + " must be a number or \"inf\"");
  }
  read(obj, key, out, where);
}

json extended(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

const std::set<std::string> kUnlearnKeys = {
    "learning_rate", "batch_size",  "optimizer",   "weight_decay", "beta1",
    "beta2",         "epsilon",     "neggrad_beta", "scrub_alpha", "scrub_beta",
    "scrub_gamma",   "k",           "noise_scale", "clip_norm",   "max_units",
    "epochs"};

void apply_unlearn(const json& obj, UnlearnConfig& c, const std::string& where) {
  check_keys(obj, kUnlearnKeys, where);
  read(obj, "learning_rate", c.optim.learning_rate, where);
  read(obj, "batch_size", c.optim.batch_size, where);
  if (obj.contains("optimizer")) {
    std::string name;
    read(obj, "optimizer", name, where);
    c.optim.optimizer = parse_optimizer(name);
  }
  read(obj, "weight_decay", c.optim.weight_decay, where);
  read(obj, "beta1", c.optim.beta1, where);
  read(obj, "beta2", c.optim.beta2, where);
  read(obj, "epsilon", c.optim.epsilon, where);
  read(obj, "neggrad_beta", c.neggrad_beta, where);
  read(obj, "scrub_alpha", c.scrub_alpha, where);
  read(obj, "scrub_beta", c.scrub_beta, where);
  read(obj, "scrub_gamma", c.scrub_gamma, where);
  read(obj, "k", c.k, where);
  read(obj, "noise_scale", c.dp.noise_scale, where);
  read_extended(obj, "clip_norm", c.dp.clip_norm, where);
  read(obj, "max_units", c.max_units, where);
  if (obj.contains("epochs")) {
    if (obj.at("epochs").is_null()) {
      c.epochs_override.reset();
    } else {
      std::size_t e = 0;
      read(obj, "epochs", e, where);
      c.epochs_override = e;
    }
  }
}

void apply_train(const json& t, TrainConfig& c, const std::string& where) {
  check_keys(t, {"learning_rate", "batch_size", "epochs", "optimizer", "weight_decay",
                 "beta1", "beta2", "epsilon"},
             where);
  read(t, "learning_rate", c.learning_rate, where);
  read(t, "batch_size", c.batch_size, where);
  read(t, "epochs", c.epochs, where);
  if (t.contains("optimizer")) {
    std::string name;
    read(t, "optimizer", name, where);
    c.optimizer = parse_optimizer(name);
  }
  read(t, "weight_decay", c.weight_decay, where);
  read(t, "beta1", c.beta1, where);
  read(t, "beta2", c.beta2, where);
  read(t, "epsilon", c.epsilon, where);
}

json train_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"optimizer", std::string(optimizer_name(c.optimizer))},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

json unlearn_json(const UnlearnConfig& c) {
  json j;
  j["learning_rate"] = c.optim.learning_rate;
  j["batch_size"] = c.optim.batch_size;
  j["optimizer"] = std::string(optimizer_name(c.optim.optimizer));
  j["weight_decay"] = c.optim.weight_decay;
  j["beta1"] = c.optim.beta1;
  j["beta2"] = c.optim.beta2;
  j["epsilon"] = c.optim.epsilon;
  j["neggrad_beta"] = c.neggrad_beta;
  j["scrub_alpha"] = c.scrub_alpha;
  j["scrub_beta"] = c.scrub_beta;
  j["scrub_gamma"] = c.scrub_gamma;
  j["k"] = c.k;
  j["noise_scale"] = c.dp.noise_scale;
  j["clip_norm"] = extended(c.dp.clip_norm);
  j["max_units"] = c.max_units;
  j["epochs"] = c.epochs_override ? json(*c.epochs_override) : json(nullptr);
  return j;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root,
             {"corpus", "pii_pattern", "tokenizer", "model", "train", "noisy_train", "dp",
              "test_frac", "forget_frac", "methods", "attacks", "min_k_percent",
              "unlearn", "unlearn_overrides", "master_seed", "output_dir", "workers",
              "write_epoch_checkpoints", "write_scores"},
             "config");

  RunConfig cfg;
  std::string corpus;
  read(root, "corpus", corpus, "config");
  if (!corpus.empty()) {
    std::filesystem::path p(corpus);
    cfg.corpus = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }

  if (root.contains("pii_pattern")) {
    const json& p = root.at("pii_pattern");
    if (p.is_string()) {
      cfg.pattern.name = p.get<std::string>();
    } else {
      check_keys(p, {"name", "regex", "group"}, "pii_pattern");
      read(p, "name", cfg.pattern.name, "pii_pattern");
      read(p, "regex", cfg.pattern.regex, "pii_pattern");
      read(p, "group", cfg.pattern.group, "pii_pattern");
    }
  }

  if (root.contains("tokenizer")) {
    const json& t = root.at("tokenizer");
    check_keys(t, {"mode", "vocab_size", "max_len"}, "tokenizer");
    if (t.contains("mode")) {
      std::string mode;
      read(t, "mode", mode, "tokenizer");
      cfg.tokenizer.mode = parse_tokenizer_mode(mode);
    }
    read(t, "vocab_size", cfg.tokenizer.vocab_size, "tokenizer");
    read(t, "max_len", cfg.tokenizer.max_len, "tokenizer");
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, {"embed_dim", "context_window", "hidden_blocks", "hidden_dim",
                   "init_scale"},
               "model");
    read(m, "embed_dim", cfg.model.embed_dim, "model");
    read(m, "context_window", cfg.model.context_window, "model");
    read(m, "hidden_blocks", cfg.model.hidden_blocks, "model");
    read(m, "hidden_dim", cfg.model.hidden_dim, "model");
    read(m, "init_scale", cfg.model.init_scale, "model");
  }

  if (root.contains("train")) apply_train(root.at("train"), cfg.train, "train");
  cfg.noisy_train = cfg.train;
  if (root.contains("noisy_train")) {
    apply_train(root.at("noisy_train"), cfg.noisy_train, "noisy_train");
  }

  if (root.contains("dp")) {
    const json& d = root.at("dp");
    check_keys(d, {"noise_scale", "clip_norm"}, "dp");
    read(d, "noise_scale", cfg.dp.noise_scale, "dp");
    read_extended(d, "clip_norm", cfg.dp.clip_norm, "dp");
  }

  read(root, "test_frac", cfg.test_frac, "config");
  read(root, "forget_frac", cfg.forget_frac, "config");

  if (root.contains("methods")) {
    std::vector<std::string> names;
    read(root, "methods", names, "config");
    cfg.methods.clear();
    for (const auto& n : names) cfg.methods.push_back(parse_method(n));
  }
  if (root.contains("attacks")) {
    std::vector<std::string> names;
    read(root, "attacks", names, "config");
    cfg.attacks.clear();
    for (const auto& n : names) cfg.attacks.push_back(parse_attack(n));
  }
  read(root, "min_k_percent", cfg.attack.min_k_percent, "config");

  if (root.contains("unlearn")) apply_unlearn(root.at("unlearn"), cfg.unlearn, "unlearn");
  for (Method m : kAllMethods) cfg.per_method[m] = cfg.method_config(m);
  if (root.contains("unlearn_overrides")) {
    const json& o = root.at("unlearn_overrides");
    if (!o.is_object()) bad("unlearn_overrides must be an object");
    for (const auto& [name, block] : o.items()) {
      const Method m = parse_method(name);
      apply_unlearn(block, cfg.per_method[m], "unlearn_overrides." + name);
    }
  }

  read(root, "master_seed", cfg.master_seed, "config");
  std::string out_dir;
  read(root, "output_dir", out_dir, "config");
  if (!out_dir.empty()) {
    std::filesystem::path p(out_dir);
    cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  read(root, "workers", cfg.workers, "config");
  read(root, "write_epoch_checkpoints", cfg.write_epoch_checkpoints, "config");
  read(root, "write_scores", cfg.write_scores, "config");

  // Validate what can be checked without the corpus.
  cfg.pattern.compile();
  cfg.train.validate();
  cfg.noisy_train.validate();
  cfg.dp.validate();
  cfg.attack.validate();
  for (Method m : kAllMethods) cfg.method_config(m).validate();
  if (cfg.tokenizer.max_len < 2) bad("tokenizer.max_len must be >= 2");
  if (cfg.workers < 1) bad("workers must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c, bool include_execution) {
  json j;
  j["corpus"] = c.corpus.generic_string();
  if (c.pattern.regex.empty()) {
    j["pii_pattern"] = c.pattern.name;
  } else {
    j["pii_pattern"] = {{"name", c.pattern.name},
                        {"regex", c.pattern.regex},
                        {"group", c.pattern.group}};
  }
  j["tokenizer"] = {{"mode", std::string(tokenizer_mode_name(c.tokenizer.mode))},
                    {"vocab_size", c.tokenizer.vocab_size},
                    {"max_len", c.tokenizer.max_len}};
  j["model"] = {{"embed_dim", c.model.embed_dim},
                {"context_window", c.model.context_window},
                {"hidden_blocks", c.model.hidden_blocks},
                {"hidden_dim", c.model.hidden_dim},
                {"init_scale", c.model.init_scale}};
  j["train"] = train_json(c.train);
  j["noisy_train"] = train_json(c.noisy_train);
  j["dp"] = {{"noise_scale", c.dp.noise_scale}, {"clip_norm", extended(c.dp.clip_norm)}};
  j["test_frac"] = c.test_frac;
  j["forget_frac"] = c.forget_frac;
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(method_name(m)));
  j["methods"] = methods;
  json attacks = json::array();
  for (Attack a : c.attacks) attacks.push_back(std::string(attack_name(a)));
  j["attacks"] = attacks;
  j["min_k_percent"] = c.attack.min_k_percent;
  j["unlearn"] = unlearn_json(c.unlearn);
  json overrides = json::object();
  for (Method m : kAllMethods) {
    overrides[std::string(method_name(m))] = unlearn_json(c.method_config(m));
  }
  j["unlearn_overrides"] = overrides;
  j["master_seed"] = c.master_seed;
  j["write_epoch_checkpoints"] = c.write_epoch_checkpoints;
  j["write_scores"] = c.write_scores;
  if (include_execution) {
    j["output_dir"] = c.output_dir.generic_string();
    j["workers"] = c.workers;
  }
  return j.dump(2) + "\n";
}

std::string run_config_hash(const RunConfig& config) {
  return sha256_hex(run_config_to_json(config, false));
}

}  // namespace privleak
