#include "privleak/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "json.hpp"
#include "privleak/error.hpp"
#include "privleak/rng.hpp"

namespace privleak {

using json = nlohmann::json;

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kRandom: return "random";
    case Scenario::kCanary: return "canary";
    case Scenario::kMinority: return "minority";
  }
  return "random";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "random") return Scenario::kRandom;
  if (name == "canary") return Scenario::kCanary;
  if (name == "minority") return Scenario::kMinority;
  throw Error(ErrorCode::kConfig, "unknown scenario '" + std::string(name) + "'");
}

namespace {

// First `n` entries of a seeded Fisher-Yates shuffle of `items`.
template <typename T>
std::vector<T> choose_without_replacement(std::vector<T> items, std::size_t n,
                                          Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(n);
  return items;
}

// Forget ids in corpus order plus the complement as keep.
Partition partition_from_selection(const Corpus& corpus,
                                   const std::unordered_set<std::string>& chosen) {
  Partition p;
  for (const auto& s : corpus) {
    (chosen.count(s.id) ? p.forget : p.keep).push_back(s.id);
  }
  return p;
}

}  // namespace

Partition split_random(const Corpus& corpus, double forget_frac,
                       std::uint64_t seed) {
  if (!(forget_frac > 0.0)) {
    throw Error(ErrorCode::kTooFewPii, "forget_frac must be positive");
  }
  const auto n_forget = static_cast<std::size_t>(
      std::llround(forget_frac * static_cast<double>(corpus.size())));
  std::vector<std::string> candidates;
  for (const auto& s : corpus) {
    if (s.pii) candidates.push_back(s.id);
  }
  if (n_forget == 0 || n_forget > candidates.size()) {
    throw Error(ErrorCode::kTooFewPii,
                "requested " + std::to_string(n_forget) + " forget samples, " +
                    std::to_string(candidates.size()) + " carry PII");
  }
  Rng rng(seed);
  auto picked = choose_without_replacement(std::move(candidates), n_forget, rng);
  return partition_from_selection(
      corpus, std::unordered_set<std::string>(picked.begin(), picked.end()));
}

std::vector<Sample> make_canaries(const std::vector<Sample>& forget_samples,
                                  const std::string& least_frequent,
                                  const PiiPattern& pattern) {
  std::vector<Sample> out;
  out.reserve(forget_samples.size());
  for (const auto& src : forget_samples) {
    if (!src.pii) {
      throw Error(ErrorCode::kNoPii, "sample '" + src.id + "' has no PII span");
    }
    const PiiSpan& pii = *src.pii;
    Sample canary;
    canary.id = src.id + std::string(kCanarySuffix);
    canary.text = src.text.substr(0, pii.group_span.begin) + least_frequent +
                  src.text.substr(pii.group_span.end);

    PiiSpan moved = pii;
    const std::size_t new_group_end = pii.group_span.begin + least_frequent.size();
    const std::ptrdiff_t delta = static_cast<std::ptrdiff_t>(new_group_end) -
                                 static_cast<std::ptrdiff_t>(pii.group_span.end);
    moved.group_span.end = new_group_end;
    moved.span.end = static_cast<std::size_t>(
        static_cast<std::ptrdiff_t>(pii.span.end) + delta);
    moved.full_value =
        canary.text.substr(moved.span.begin, moved.span.end - moved.span.begin);
    moved.group_value = least_frequent;

    // Prefer the pattern's own reading when it lands on the substituted span.
    auto refound = pattern.find(canary.text);
    if (refound && refound->group_span == moved.group_span &&
        refound->group_value == least_frequent) {
      canary.pii = std::move(refound);
    } else {
      canary.pii = std::move(moved);
    }
    out.push_back(std::move(canary));
  }
  return out;
}

Partition select_minority(const Corpus& corpus, const PiiHistogram& hist,
                          std::size_t n, std::uint64_t seed) {
  std::vector<std::string> pii_ids;
  for (const auto& s : corpus) {
    if (s.pii) pii_ids.push_back(s.id);
  }
  if (n == 0 || n > pii_ids.size()) {
    throw Error(ErrorCode::kTooFewPii,
                "requested " + std::to_string(n) + " minority samples, " +
                    std::to_string(pii_ids.size()) + " carry PII");
  }

  // Frequency level -> sample ids at that level, in corpus order.
  std::map<std::size_t, std::vector<std::string>> levels;
  for (const auto& s : corpus) {
    if (!s.pii) continue;
    auto it = hist.counts.find(s.pii->group_value);
    const std::size_t count = it == hist.counts.end() ? 0 : it->second;
    levels[count].push_back(s.id);
  }

  Rng rng(seed);
  std::unordered_set<std::string> chosen;
  for (auto& [count, ids] : levels) {
    const std::size_t remaining = n - chosen.size();
    if (remaining == 0) break;
    if (ids.size() <= remaining) {
      chosen.insert(ids.begin(), ids.end());
    } else {
      auto picked = choose_without_replacement(ids, remaining, rng);
      chosen.insert(picked.begin(), picked.end());
    }
  }
  return partition_from_selection(corpus, chosen);
}

ScenarioSet build_scenarios(const Corpus& corpus, double forget_frac,
                            std::uint64_t seed, const PiiPattern& pattern) {
  ScenarioSet set;
  const PiiHistogram hist = build_histogram(corpus);
  set.least_frequent_group = least_frequent(hist);
  set.random = split_random(corpus, forget_frac, derive_seed(seed, "partition/random"));

  std::vector<Sample> forget_samples;
  for (const auto& id : set.random.forget) forget_samples.push_back(corpus.at(id));
  auto canaries = make_canaries(forget_samples, set.least_frequent_group, pattern);

  std::unordered_set<std::string> forget_ids(set.random.forget.begin(),
                                             set.random.forget.end());
  std::vector<Sample> canary_train;
  canary_train.reserve(corpus.size());
  std::size_t next_canary = 0;
  for (const auto& s : corpus) {
    if (forget_ids.count(s.id)) {
      set.canary_forget.push_back(canaries[next_canary].id);
      canary_train.push_back(canaries[next_canary++]);
    } else {
      canary_train.push_back(s);
    }
  }
  set.canary_train = Corpus(std::move(canary_train));

  set.minority = select_minority(corpus, hist, set.random.forget.size(),
                                 derive_seed(seed, "partition/minority"));
  return set;
}

Corpus ScenarioSet::train_corpus(const Corpus& pool, Scenario s) const {
  return s == Scenario::kCanary ? canary_train : pool;
}

Corpus ScenarioSet::forget_corpus(const Corpus& pool, Scenario s) const {
  switch (s) {
    case Scenario::kRandom: return pool.subset(random.forget);
    case Scenario::kCanary: return canary_train.subset(canary_forget);
    case Scenario::kMinority: return pool.subset(minority.forget);
  }
  return {};
}

Corpus ScenarioSet::keep_corpus(const Corpus& pool, Scenario s) const {
  return pool.subset(s == Scenario::kMinority ? minority.keep : random.keep);
}

TrainTestSplit split_train_test(const Corpus& corpus, double test_frac,
                                std::uint64_t seed) {
  if (!(test_frac > 0.0) || !(test_frac < 1.0)) {
    throw Error(ErrorCode::kConfig, "test_frac must lie in (0, 1)");
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_frac * static_cast<double>(corpus.size())));
  if (n_test == 0 || n_test >= corpus.size()) {
    throw Error(ErrorCode::kConfig, "test split leaves an empty side");
  }
  std::vector<std::string> ids;
  for (const auto& s : corpus) ids.push_back(s.id);
  Rng rng(seed);
  auto picked = choose_without_replacement(std::move(ids), n_test, rng);
  std::unordered_set<std::string> test_ids(picked.begin(), picked.end());

  std::vector<Sample> train, test;
  for (const auto& s : corpus) (test_ids.count(s.id) ? test : train).push_back(s);
  return {Corpus(std::move(train)), Corpus(std::move(test))};
}

std::string scenarios_to_json(const ScenarioSet& set) {
  json canaries = json::array();
  for (const auto& id : set.canary_forget) {
    const Sample& c = set.canary_train.at(id);
    canaries.push_back({{"id", c.id}, {"text", c.text}});
  }
  json j = {
      {"least_frequent_group", set.least_frequent_group},
      {"random", {{"forget", set.random.forget}, {"keep", set.random.keep}}},
      {"canaries", canaries},
      {"minority", {{"forget", set.minority.forget}, {"keep", set.minority.keep}}},
  };
  return j.dump(2) + "\n";
}

ScenarioSet scenarios_from_json(const std::string& text, const Corpus& pool,
                                const PiiPattern& pattern) {
  ScenarioSet set;
  json j;
  try {
    j = json::parse(text);
    set.least_frequent_group = j.at("least_frequent_group").get<std::string>();
    set.random.forget = j.at("random").at("forget").get<std::vector<std::string>>();
    set.random.keep = j.at("random").at("keep").get<std::vector<std::string>>();
    set.minority.forget = j.at("minority").at("forget").get<std::vector<std::string>>();
    set.minority.keep = j.at("minority").at("keep").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("scenario file: ") + e.what());
  }

  std::map<std::string, std::string> canary_text;
  for (const auto& c : j.at("canaries")) {
    canary_text[c.at("id").get<std::string>()] = c.at("text").get<std::string>();
  }
  std::unordered_set<std::string> forget_ids(set.random.forget.begin(),
                                             set.random.forget.end());
  std::vector<Sample> train;
  for (const auto& s : pool) {
    if (!forget_ids.count(s.id)) {
      train.push_back(s);
      continue;
    }
    const std::string id = s.id + std::string(kCanarySuffix);
    auto it = canary_text.find(id);
    if (it == canary_text.end()) {
      throw Error(ErrorCode::kParse, "scenario file lacks canary '" + id + "'");
    }
    set.canary_forget.push_back(id);
    train.push_back({id, it->second, pattern.find(it->second)});
  }
  set.canary_train = Corpus(std::move(train));
  return set;
}

}  // namespace privleak
