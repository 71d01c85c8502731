#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "privleak/corpus.hpp"

namespace privleak {

enum class PiiKind { kPhone, kEmail, kYear };

PiiKind parse_pii_kind(std::string_view name);
std::string_view pii_kind_name(PiiKind kind);
/// Built-in pattern that extracts the groups a synthetic corpus plants.
std::string_view pii_kind_pattern(PiiKind kind);

struct SynthOptions {
  std::size_t n_samples = 2000;
  double zipf_exponent = 1.5;
  PiiKind kind = PiiKind::kPhone;
  std::uint64_t seed = 42;
  double pii_fraction = 0.9;
};

/// Planned count per group, most frequent first. Counts follow a truncated
/// Zipf law in group rank, are non-increasing, and the last group always has
/// count exactly 1.
std::vector<std::size_t> zipf_group_counts(std::size_t total, std::size_t max_groups,
                                           double exponent);

/// Short template e-mails, one PII value each (for the PII-bearing fraction),
/// with group values drawn by zipf_group_counts. Deterministic in the options.
Corpus synth_corpus(const SynthOptions& options);

}  // namespace privleak
