#include "privleak/attack.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "privleak/error.hpp"

namespace privleak {

std::string_view attack_name(Attack a) {
  switch (a) {
    case Attack::kLoss: return "loss";
    case Attack::kZlib: return "zlib";
    case Attack::kMinK: return "min_k";
  }
  return "loss";
}

Attack parse_attack(std::string_view name) {
  for (Attack a : kAllAttacks) {
    if (attack_name(a) == name) return a;
  }
  throw Error(ErrorCode::kConfig, "unknown attack '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(min_k_percent > 0.0 && min_k_percent <= 100.0)) {
    throw Error(ErrorCode::kConfig, "min_k_percent must lie in (0, 100]");
  }
}

double score_loss_mia(const LossStats& stats, std::size_t sequence) {
  return -stats.sequence_mean(sequence);
}

std::size_t compressed_len(std::string_view text) {
  uLongf size = compressBound(static_cast<uLong>(text.size()));
  std::vector<Bytef> buf(size);
  const int rc = compress2(buf.data(), &size,
                           reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uLong>(text.size()), Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw Error(ErrorCode::kIo, "zlib compress2 failed");
  return static_cast<std::size_t>(size);
}

double score_zlib_mia(const LossStats& stats, std::string_view text,
                      std::size_t sequence) {
  return -stats.sequence_mean(sequence) / static_cast<double>(compressed_len(text));
}

double score_min_k(std::span<const double> per_token_nll, const AttackConfig& config) {
  const std::size_t t = per_token_nll.size();
  if (t == 0) throw Error(ErrorCode::kConfig, "Min-K% needs at least one token");
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(config.min_k_percent / 100.0 *
                                             static_cast<double>(t))));
  std::vector<double> sorted(per_token_nll.begin(), per_token_nll.end());
  // Highest NLL first; these are the lowest-likelihood tokens.
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m),
                    sorted.end(), std::greater<>());
  if (m == t) {
    // Full selection reduces to the plain mean, summed in sequence order.
    double s = 0.0;
    for (double v : per_token_nll) s += v;
    return -(s / static_cast<double>(t));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += sorted[i];
  return -(s / static_cast<double>(m));
}

double score_min_k(const LossStats& stats, const AttackConfig& config,
                   std::size_t sequence) {
  return score_min_k(stats.per_token_nll[sequence], config);
}

namespace {

void score_side(const LossStats& stats, const Corpus& corpus, bool member,
                Attack attack, const AttackConfig& config, PopulationScores& out) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& row = stats.per_token_nll[i];
    const bool finite =
        std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); });
    if (!finite) {
      out.excluded.push_back(corpus[i].id);
      continue;
    }
    double score = 0.0;
    switch (attack) {
      case Attack::kLoss: score = score_loss_mia(stats, i); break;
      case Attack::kZlib: score = score_zlib_mia(stats, corpus[i].text, i); break;
      case Attack::kMinK: score = score_min_k(stats, config, i); break;
    }
    out.scores.push_back({corpus[i].id, attack, score, member});
  }
}

}  // namespace

PopulationScores score_population(const ModelState& model, const Corpus& forget,
                                  std::span<const TokenSeq> forget_seqs,
                                  const Corpus& test,
                                  std::span<const TokenSeq> test_seqs, Attack attack,
                                  const AttackConfig& config) {
  config.validate();
  if (forget.empty() || test.empty()) {
    throw Error(ErrorCode::kOneClass, "both forget and test sets must be nonempty");
  }
  if (forget.size() != forget_seqs.size() || test.size() != test_seqs.size()) {
    throw Error(ErrorCode::kConfig, "corpus and encoding sizes differ");
  }
  return score_population(evaluate(model, forget_seqs), forget,
                          evaluate(model, test_seqs), test, attack, config);
}

PopulationScores score_population(const LossStats& forget_stats, const Corpus& forget,
                                  const LossStats& test_stats, const Corpus& test,
                                  Attack attack, const AttackConfig& config) {
  config.validate();
  if (forget.empty() || test.empty()) {
    throw Error(ErrorCode::kOneClass, "both forget and test sets must be nonempty");
  }
  if (forget.size() != forget_stats.per_token_nll.size() ||
      test.size() != test_stats.per_token_nll.size()) {
    throw Error(ErrorCode::kConfig, "corpus and loss statistics sizes differ");
  }
  PopulationScores out;
  score_side(forget_stats, forget, true, attack, config, out);
  score_side(test_stats, test, false, attack, config, out);
  return out;
}

std::string scores_to_csv(std::span<const AttackScore> scores) {
  std::string out = "sample_id,attack,score,is_member\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    // Ids are quoted only when they would break the row.
    const bool quote = s.sample_id.find_first_of(",\"\n") != std::string::npos;
    if (quote) {
      out += '"';
      for (char c : s.sample_id) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += s.sample_id;
    }
    out += ',';
    out += attack_name(s.attack);
    out += ',';
    out += buf;
    out += s.is_member ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace privleak
