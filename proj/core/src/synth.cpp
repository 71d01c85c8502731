#include "privleak/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "privleak/error.hpp"
#include "privleak/rng.hpp"

namespace privleak {

PiiKind parse_pii_kind(std::string_view name) {
  if (name == "phone" || name == "phone_us") return PiiKind::kPhone;
  if (name == "email" || name == "email_domain") return PiiKind::kEmail;
  if (name == "year") return PiiKind::kYear;
  throw Error(ErrorCode::kConfig, "unknown PII kind '" + std::string(name) + "'");
}

std::string_view pii_kind_name(PiiKind kind) {
  switch (kind) {
    case PiiKind::kPhone: return "phone";
    case PiiKind::kEmail: return "email";
    case PiiKind::kYear: return "year";
  }
  return "phone";
}

std::string_view pii_kind_pattern(PiiKind kind) {
  switch (kind) {
    case PiiKind::kPhone: return "phone_us";
    case PiiKind::kEmail: return "email_domain";
    case PiiKind::kYear: return "year";
  }
  return "phone_us";
}

namespace {

// Ordered most to least common in the generated corpora.
constexpr std::array<std::string_view, 40> kAreaCodes = {
    "713", "281", "832", "214", "972", "512", "210", "409", "936", "903",
    "254", "361", "432", "806", "915", "940", "956", "979", "325", "830",
    "469", "737", "346", "430", "682", "726", "945", "817", "918", "405",
    "504", "225", "318", "337", "985", "601", "662", "769", "228", "484"};

constexpr std::array<std::string_view, 24> kDomains = {
    "enron.com",   "aol.com",     "hotmail.com", "yahoo.com",  "msn.com",
    "gmail.com",   "ect.com",     "dynegy.com",  "reliant.com", "elpaso.com",
    "calpine.com", "mirant.com",  "duke.com",    "aep.com",    "txu.com",
    "ferc.gov",    "pge.com",     "sce.com",     "caiso.com",  "ercot.com",
    "utexas.edu",  "rice.edu",    "uh.edu",      "velocity.net"};

constexpr std::array<std::string_view, 24> kNames = {
    "Alice", "Bob",   "Carol", "Dan",   "Erin",  "Frank", "Grace", "Heidi",
    "Ivan",  "Judy",  "Ken",   "Laura", "Mike",  "Nina",  "Oscar", "Pam",
    "Quinn", "Rita",  "Sam",   "Tina",  "Uma",   "Vic",   "Walt",  "Xena"};

constexpr std::array<std::string_view, 16> kTopics = {
    "budget", "contract", "pipeline", "trade",  "audit", "meeting",
    "report", "invoice",  "deal",     "gas",    "power", "schedule",
    "risk",   "credit",   "memo",     "review"};

constexpr std::array<std::string_view, 4> kGreetings = {"Hi", "Hello", "Dear", "Hey"};
constexpr std::array<std::string_view, 4> kSignoffs = {"Thanks", "Best", "Regards",
                                                       "Cheers"};

template <typename T, std::size_t N>
std::string_view pick(const std::array<T, N>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, N - 1);
  return items[d(rng)];
}

std::string digits(Rng& rng, int n) {
  std::uniform_int_distribution<int> d(0, 9);
  std::string s;
  for (int i = 0; i < n; ++i) s += static_cast<char>('0' + d(rng));
  return s;
}

std::vector<std::string> group_pool(PiiKind kind) {
  std::vector<std::string> out;
  switch (kind) {
    case PiiKind::kPhone:
      for (auto c : kAreaCodes) out.emplace_back(c);
      break;
    case PiiKind::kEmail:
      for (auto d : kDomains) out.emplace_back(d);
      break;
    case PiiKind::kYear:
      // Recent years are common, early ones rare.
      for (int y = 2015; y >= 1976; --y) out.push_back(std::to_string(y));
      break;
  }
  return out;
}

std::string render(PiiKind kind, const std::string& group, Rng& rng) {
  const std::string name(pick(kNames, rng));
  const std::string topic(pick(kTopics, rng));
  switch (kind) {
    case PiiKind::kPhone:
      return std::string(pick(kGreetings, rng)) + " " + name + ", call me at " +
             group + "-" + digits(rng, 3) + "-" + digits(rng, 4) + " about the " +
             topic + ". " + std::string(pick(kSignoffs, rng));
    case PiiKind::kEmail: {
      std::string user = std::string(pick(kNames, rng));
      std::transform(user.begin(), user.end(), user.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return std::string(pick(kGreetings, rng)) + " " + name + ", mail " + user +
             digits(rng, 2) + "@" + group + " re the " + topic + ". " +
             std::string(pick(kSignoffs, rng));
    }
    case PiiKind::kYear:
      return "In " + group + " the court heard the " + topic + " case of " + name +
             " " + std::string(1, static_cast<char>('A' + std::uniform_int_distribution<int>(0, 25)(rng))) + ".";
  }
  return {};
}

std::string render_plain(Rng& rng) {
  return std::string(pick(kGreetings, rng)) + " " + std::string(pick(kNames, rng)) +
         ", see the " + std::string(pick(kTopics, rng)) + " notes. " +
         std::string(pick(kSignoffs, rng));
}

}  // namespace

std::vector<std::size_t> zipf_group_counts(std::size_t total, std::size_t max_groups,
                                           double exponent) {
  if (total < 2 || max_groups < 2) {
    throw Error(ErrorCode::kConfig, "Zipf layout needs >= 2 samples and groups");
  }
  for (std::size_t g = std::min(max_groups, total); g >= 2; --g) {
    double norm = 0.0;
    for (std::size_t i = 1; i <= g; ++i) norm += std::pow(static_cast<double>(i), -exponent);
    std::vector<std::size_t> counts(g);
    for (std::size_t i = 0; i + 1 < g; ++i) {
      const double share = static_cast<double>(total) *
                           std::pow(static_cast<double>(i + 1), -exponent) / norm;
      counts[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share)));
    }
    counts[g - 1] = 1;
    const std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (sum > total) continue;
    counts[0] += total - sum;
    return counts;
  }
  return {total - 1, 1};
}

Corpus synth_corpus(const SynthOptions& options) {
  if (options.n_samples < 10) {
    throw Error(ErrorCode::kConfig, "synthetic corpus needs at least 10 samples");
  }
  if (!(options.pii_fraction > 0.0 && options.pii_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "pii_fraction must lie in (0, 1]");
  }
  Rng rng = make_rng(options.seed, "synth");
  const auto n_pii = std::max<std::size_t>(
      2, static_cast<std::size_t>(
             std::llround(options.pii_fraction * static_cast<double>(options.n_samples))));
  const auto pool = group_pool(options.kind);
  const auto counts = zipf_group_counts(n_pii, pool.size(), options.zipf_exponent);

  // -1 marks a sample without PII.
  std::vector<int> slots;
  slots.reserve(options.n_samples);
  for (std::size_t g = 0; g < counts.size(); ++g) {
    slots.insert(slots.end(), counts[g], static_cast<int>(g));
  }
  slots.resize(options.n_samples, -1);
  std::shuffle(slots.begin(), slots.end(), rng);

  std::vector<Sample> samples;
  samples.reserve(options.n_samples);
  char id[32];
  for (std::size_t i = 0; i < slots.size(); ++i) {
    std::snprintf(id, sizeof(id), "s%05zu", i);
    std::string text = slots[i] >= 0
                           ? render(options.kind, pool[static_cast<std::size_t>(slots[i])], rng)
                           : render_plain(rng);
    samples.push_back({id, std::move(text), {}});
  }
  return Corpus(std::move(samples));
}

}  // namespace privleak
