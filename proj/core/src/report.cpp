#include "privleak/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "privleak/error.hpp"

namespace privleak {

using json = nlohmann::ordered_json;

namespace {

// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_json(const std::optional<double>& v) {
  return v ? finite_or_null(*v) : json(nullptr);
}

json ledger_json(const ComplexityLedger& ledger) {
  json events = json::array();
  for (const auto& e : ledger.events()) {
    events.push_back({{"epoch", e.epoch},
                      {"samples", e.samples},
                      {"param_fraction", e.param_fraction}});
  }
  return {{"unit_size", ledger.unit_size()},
          {"max_units", ledger.max_units()},
          {"charged", ledger.charged()},
          {"events", events}};
}

json partition_json(const Partition& p) {
  return {{"forget", p.forget}, {"forget_size", p.forget.size()},
          {"keep_size", p.keep.size()}};
}

json method_json(const MethodRun& m) {
  json j;
  j["method"] = m.method;
  j["scenario"] = std::string(scenario_name(m.scenario));
  j["ok"] = m.ok;
  j["error"] = m.error;
  j["baseline_perplexity"] = finite_or_null(m.baseline_perplexity);
  j["selected_epoch"] = m.selected_epoch;
  j["epochs_run"] = m.epochs_run;
  json ppl = json::array();
  for (double p : m.train_perplexities) ppl.push_back(finite_or_null(p));
  j["train_perplexities"] = ppl;
  j["samples_per_epoch"] = m.samples_per_epoch;
  j["param_fraction"] = m.param_fraction;
  j["ledger"] = ledger_json(m.ledger);
  j["diverged"] = m.diverged;
  j["note"] = m.note;
  j["checkpoint_hash"] = m.checkpoint_hash;
  j["test_perplexity"] = finite_or_null(m.test_perplexity);
  return j;
}

json record_json(const PrivLeakRecord& r) {
  return {{"method", r.method},
          {"attack", std::string(attack_name(r.attack))},
          {"scenario", std::string(scenario_name(r.scenario))},
          {"auc_unlearn", r.auc_unlearn},
          {"auc_retrain", r.auc_retrain},
          {"pl", r.pl},
          {"perplexity", finite_or_null(r.perplexity)}};
}

json row_json(const MinorityAwareRow& r) {
  return {{"method", r.method},
          {"attack", std::string(attack_name(r.attack))},
          {"pl_random", r.pl_random},
          {"pl_canary", r.pl_canary},
          {"pl_minority", r.pl_minority},
          {"worst_pl", r.worst_pl},
          {"worst_scenario", std::string(scenario_name(r.worst_scenario))},
          {"excess_ratio_canary", optional_json(r.excess_ratio_canary)},
          {"excess_ratio_minority", optional_json(r.excess_ratio_minority)},
          {"worst_perplexity", finite_or_null(r.worst_perplexity)},
          {"underestimated", r.underestimated}};
}

json errors_json(const std::vector<StageError>& errors) {
  json out = json::array();
  for (const auto& e : errors) {
    out.push_back({{"stage", e.stage},
                   {"task", e.task},
                   {"code", e.code},
                   {"message", e.message}});
  }
  return out;
}

json base_models_json(const std::vector<BaseModelInfo>& models) {
  json out = json::array();
  for (const auto& m : models) {
    out.push_back({{"name", m.name},
                   {"hash", m.hash},
                   {"training_set", m.training_set},
                   {"training_samples", m.training_samples},
                   {"test_perplexity", finite_or_null(m.test_perplexity)}});
  }
  return out;
}

}  // namespace

std::string report_json(const RunResult& r) {
  json j;
  j["schema"] = std::string(kReportSchema);
  j["config_hash"] = r.config_hash;
  j["config"] = json::parse(run_config_to_json(r.config, false));
  j["completed_stage"] = std::string(stage_name(r.completed));
  j["corpus"] = {{"sha256", r.corpus_hash},
                 {"samples", r.corpus_size},
                 {"train", r.train_size},
                 {"test", r.test_size}};
  j["vocab_size"] = r.vocab_size;
  j["parameter_count"] = r.parameter_count;
  j["scenarios"] = {{"least_frequent_group", r.scenarios.least_frequent_group},
                    {"random", partition_json(r.scenarios.random)},
                    {"canary", {{"forget", r.scenarios.canary_forget},
                                {"forget_size", r.scenarios.canary_forget.size()},
                                {"keep_size", r.scenarios.random.keep.size()}}},
                    {"minority", partition_json(r.scenarios.minority)}};
  j["base_models"] = base_models_json(r.base_models);

  json methods = json::array();
  for (const auto& m : r.methods) methods.push_back(method_json(m));
  j["methods"] = methods;

  json aucs = json::array();
  for (const auto& a : r.aucs) {
    aucs.push_back({{"model", a.model},
                    {"scenario", std::string(scenario_name(a.scenario))},
                    {"attack", std::string(attack_name(a.attack))},
                    {"auc", a.result.auc},
                    {"n_members", a.result.n_members},
                    {"n_nonmembers", a.result.n_nonmembers},
                    {"excluded", a.excluded}});
  }
  j["aucs"] = aucs;

  json records = json::array();
  for (const auto& rec : r.records) records.push_back(record_json(rec));
  j["records"] = records;

  json rows = json::array();
  for (const auto& row : r.summary.rows) rows.push_back(row_json(row));
  j["summary"] = rows;
  j["errors"] = errors_json(r.errors);
  return j.dump(2) + "\n";
}

namespace {

[[noreturn]] void invalid(const std::string& what) {
  throw Error(ErrorCode::kParse, "invalid report: " + what);
}

void require(const json& obj, const std::string& key, json::value_t type,
             const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) invalid(where + "." + key + " missing");
  const json& v = obj.at(key);
  const bool ok = type == json::value_t::number_float
                      ? (v.is_number() || v.is_null())
                  : type == json::value_t::number_unsigned ? v.is_number_unsigned()
                                                           : v.type() == type;
  if (!ok) invalid(where + "." + key + " has the wrong type");
}

void require_array_of(const json& obj, const std::string& key,
                      const std::vector<std::pair<std::string, json::value_t>>& fields,
                      const std::string& where) {
  require(obj, key, json::value_t::array, where);
  std::size_t i = 0;
  for (const auto& item : obj.at(key)) {
    const std::string at = where + "." + key + "[" + std::to_string(i++) + "]";
    if (!item.is_object()) invalid(at + " is not an object");
    for (const auto& [name, type] : fields) require(item, name, type, at);
  }
}

}  // namespace

void validate_report_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid(std::string("not JSON: ") + e.what());
  }
  using T = json::value_t;
  require(j, "schema", T::string, "report");
  if (j.at("schema") != std::string(kReportSchema)) invalid("unknown schema");
  require(j, "config_hash", T::string, "report");
  if (j.at("config_hash").get<std::string>().size() != 64) invalid("bad config_hash");
  require(j, "config", T::object, "report");
  require(j, "completed_stage", T::string, "report");
  parse_stage(j.at("completed_stage").get<std::string>());
  require(j, "corpus", T::object, "report");
  for (const char* k : {"samples", "train", "test"}) {
    require(j.at("corpus"), k, T::number_unsigned, "report.corpus");
  }
  require(j, "vocab_size", T::number_unsigned, "report");
  require(j, "parameter_count", T::number_unsigned, "report");
  require(j, "scenarios", T::object, "report");
  for (const char* s : {"random", "canary", "minority"}) {
    require(j.at("scenarios"), s, T::object, "report.scenarios");
  }
  require_array_of(j, "base_models",
                   {{"name", T::string}, {"hash", T::string},
                    {"training_samples", T::number_unsigned}},
                   "report");
  require_array_of(j, "methods",
                   {{"method", T::string},
                    {"scenario", T::string},
                    {"ok", T::boolean},
                    {"selected_epoch", T::number_unsigned},
                    {"epochs_run", T::number_unsigned},
                    {"train_perplexities", T::array},
                    {"ledger", T::object},
                    {"checkpoint_hash", T::string}},
                   "report");
  for (const auto& m : j.at("methods")) {
    for (const char* k : {"unit_size", "max_units", "charged", "events"}) {
      if (!m.at("ledger").contains(k)) invalid(std::string("ledger.") + k + " missing");
    }
    parse_scenario(m.at("scenario").get<std::string>());
  }
  require_array_of(j, "aucs",
                   {{"model", T::string},
                    {"scenario", T::string},
                    {"attack", T::string},
                    {"auc", T::number_float},
                    {"n_members", T::number_unsigned},
                    {"n_nonmembers", T::number_unsigned}},
                   "report");
  require_array_of(j, "records",
                   {{"method", T::string},
                    {"attack", T::string},
                    {"scenario", T::string},
                    {"auc_unlearn", T::number_float},
                    {"auc_retrain", T::number_float},
                    {"pl", T::number_float},
                    {"perplexity", T::number_float}},
                   "report");
  for (const auto& rec : j.at("records")) {
    parse_attack(rec.at("attack").get<std::string>());
    parse_scenario(rec.at("scenario").get<std::string>());
  }
  require_array_of(j, "summary",
                   {{"method", T::string},
                    {"attack", T::string},
                    {"pl_random", T::number_float},
                    {"pl_canary", T::number_float},
                    {"pl_minority", T::number_float},
                    {"worst_pl", T::number_float},
                    {"worst_scenario", T::string},
                    {"worst_perplexity", T::number_float},
                    {"underestimated", T::boolean}},
                   "report");
  for (const auto& row : j.at("summary")) {
    if (!row.contains("excess_ratio_canary") || !row.contains("excess_ratio_minority")) {
      invalid("summary row lacks excess ratios");
    }
  }
  require_array_of(j, "errors",
                   {{"stage", T::string}, {"code", T::string}, {"message", T::string}},
                   "report");
}

namespace {

std::string pl_cell(double pl, const std::optional<double>& excess) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", pl);
  std::string cell = buf;
  if (excess) {
    std::snprintf(buf, sizeof buf, " (%+.0f%%)", *excess * 100.0);
    cell += buf;
  }
  return cell;
}

}  // namespace

std::string table_csv(const MinorityAwareSummary& summary,
                      std::span<const Attack> attacks) {
  std::string out = "method";
  for (Attack a : attacks) {
    for (Scenario s : kAllScenarios) {
      out += "," + std::string(attack_name(a)) + "/" + std::string(scenario_name(s));
    }
    out += "," + std::string(attack_name(a)) + "/worst_pl";
  }
  out += ",worst_perplexity\n";

  std::vector<std::string> methods;
  for (const auto& row : summary.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
  }
  for (const auto& method : methods) {
    std::string line = method;
    double worst_ppl = std::numeric_limits<double>::quiet_NaN();
    for (Attack a : attacks) {
      const MinorityAwareRow* row = nullptr;
      for (const auto& r : summary.rows) {
        if (r.method == method && r.attack == a) row = &r;
      }
      if (!row) {
        line += ",,,,";
        continue;
      }
      worst_ppl = row->worst_perplexity;
      line += "," + pl_cell(row->pl_random, std::nullopt);
      line += "," + pl_cell(row->pl_canary, row->excess_ratio_canary);
      line += "," + pl_cell(row->pl_minority, row->excess_ratio_minority);
      line += "," + pl_cell(row->worst_pl, std::nullopt);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", worst_ppl);
    out += line + "," + buf + "\n";
  }
  return out;
}

std::string records_csv(std::span<const PrivLeakRecord> records) {
  std::string out = "method,attack,scenario,auc_unlearn,auc_retrain,pl,perplexity\n";
  for (const auto& r : records) {
    out += r.method + "," + std::string(attack_name(r.attack)) + "," +
           std::string(scenario_name(r.scenario)) + "," + num(r.auc_unlearn) + "," +
           num(r.auc_retrain) + "," + num(r.pl) + "," + num(r.perplexity) + "\n";
  }
  return out;
}

std::string manifest_json(const RunResult& r) {
  json j;
  j["schema"] = "privleak.manifest/1";
  j["config"] = json::parse(run_config_to_json(r.config, true));
  j["config_hash"] = r.config_hash;
  j["corpus_sha256"] = r.corpus_hash;
  j["completed_stage"] = std::string(stage_name(r.completed));
  j["report_emitted"] = r.report_emitted;
  json timings = json::object();
  for (const auto& [stage, secs] : r.stage_seconds) timings[stage] = secs;
  j["stage_seconds"] = timings;
  json files = json::object();
  for (const auto& [role, path] : r.files) files[role] = path;
  j["files"] = files;
  json models = json::array();
  for (const auto& m : r.base_models) {
    models.push_back({{"name", m.name}, {"hash", m.hash}, {"from_cache", m.from_cache}});
  }
  j["base_models"] = models;
  json ledgers = json::array();
  for (const auto& m : r.methods) {
    ledgers.push_back({{"method", m.method},
                       {"scenario", std::string(scenario_name(m.scenario))},
                       {"ok", m.ok},
                       {"charged", m.ledger.charged()},
                       {"max_units", m.ledger.max_units()},
                       {"selected_epoch", m.selected_epoch},
                       {"checkpoint_hash", m.checkpoint_hash}});
  }
  j["ledgers"] = ledgers;
  j["errors"] = errors_json(r.errors);
  return j.dump(2) + "\n";
}

std::string curve_tsv(SweepAxis axis, std::span<const double> values,
                      std::span<const RunResult> runs, Attack attack) {
  std::vector<std::string> methods;
  for (const auto& run : runs) {
    for (const auto& row : run.summary.rows) {
      if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
        methods.push_back(row.method);
      }
    }
  }
  std::string out(sweep_axis_name(axis));
  for (const auto& m : methods) out += "\t" + m + ":worst_pl\t" + m + ":worst_perplexity";
  out += "\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += num(values[i]);
    for (const auto& m : methods) {
      const MinorityAwareRow* row = nullptr;
      if (i < runs.size()) {
        for (const auto& r : runs[i].summary.rows) {
          if (r.method == m && r.attack == attack) row = &r;
        }
      }
      if (row) {
        out += "\t" + num(row->worst_pl) + "\t" + num(row->worst_perplexity);
      } else {
        out += "\tnan\tnan";
      }
    }
    out += "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace privleak
