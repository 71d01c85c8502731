#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "privleak/corpus.hpp"

namespace privleak {

/// Split of one training corpus into data to remove and data to retain.
struct Partition {
  std::vector<std::string> forget;
  std::vector<std::string> keep;

  bool operator==(const Partition&) const = default;
};

enum class Scenario { kRandom, kCanary, kMinority };

inline constexpr Scenario kAllScenarios[] = {Scenario::kRandom, Scenario::kCanary,
                                             Scenario::kMinority};

std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

/// The three forget-set constructions over a shared training pool.
///
/// Random and Canary share `random.keep`; the Canary training corpus is the
/// Random training corpus with every forget sample replaced, in place, by its
/// canary. Minority has its own keep set.
struct ScenarioSet {
  Partition random;
  Corpus canary_train;
  std::vector<std::string> canary_forget;
  Partition minority;
  std::string least_frequent_group;

  /// Training corpus of a scenario (Random and Minority share the pool).
  Corpus train_corpus(const Corpus& pool, Scenario s) const;
  Corpus forget_corpus(const Corpus& pool, Scenario s) const;
  Corpus keep_corpus(const Corpus& pool, Scenario s) const;
};

inline constexpr std::string_view kCanarySuffix = "#canary";

/// Uniform choice of round(forget_frac * |corpus|) PII-bearing samples.
Partition split_random(const Corpus& corpus, double forget_frac,
                       std::uint64_t seed);

/// Replaces the group substring of each sample's PII with `least_frequent`.
std::vector<Sample> make_canaries(const std::vector<Sample>& forget_samples,
                                  const std::string& least_frequent,
                                  const PiiPattern& pattern);

/// n samples from the rarest groups first; the boundary frequency level is
/// sub-sampled uniformly under `seed`.
Partition select_minority(const Corpus& corpus, const PiiHistogram& hist,
                          std::size_t n, std::uint64_t seed);

ScenarioSet build_scenarios(const Corpus& corpus, double forget_frac,
                            std::uint64_t seed, const PiiPattern& pattern);

/// Held-out non-member split taken before scenarios are built.
struct TrainTestSplit {
  Corpus train;
  Corpus test;
};

TrainTestSplit split_train_test(const Corpus& corpus, double test_frac,
                                std::uint64_t seed);

std::string scenarios_to_json(const ScenarioSet& set);
/// Rebuilds a ScenarioSet from its JSON form; `pool` supplies the texts of
/// non-canary samples.
ScenarioSet scenarios_from_json(const std::string& text, const Corpus& pool,
                                const PiiPattern& pattern);

}  // namespace privleak
