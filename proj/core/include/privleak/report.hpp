#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "privleak/pipeline.hpp"

namespace privleak {

inline constexpr std::string_view kReportSchema = "privleak.report/1";

/// Deterministic JSON report: config snapshot and hash, corpus and scenario
/// facts, base models, per-method ledgers, AUCs, PL records and the
/// minority-aware summary. Contains no timings or paths.
std::string report_json(const RunResult& result);

/// Checks the structure of a report produced by report_json. Throws E_PARSE
/// naming the first offending field.
void validate_report_json(std::string_view text);

/// Method rows by (attack x scenario) columns. Canary and Minority cells carry
/// the excess ratio, e.g. "0.283 (+49%)", followed by worst_pl and
/// worst_perplexity per attack.
std::string table_csv(const MinorityAwareSummary& summary,
                      std::span<const Attack> attacks);

/// One line per PrivLeakRecord, full precision.
std::string records_csv(std::span<const PrivLeakRecord> records);

/// Run metadata: resolved config (with execution fields), stage timings,
/// file paths, model hashes, ledgers and errors.
std::string manifest_json(const RunResult& result);

/// Tab-separated curve for one attack: one row per axis value with
/// worst_pl and worst_perplexity columns per method.
std::string curve_tsv(SweepAxis axis, std::span<const double> values,
                      std::span<const RunResult> runs, Attack attack);

/// Writes bytes to `path`, creating parent directories. Throws E_IO.
void write_text_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace privleak
