#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "privleak/corpus.hpp"
#include "privleak/lm.hpp"

namespace privleak {

// Membership scores are oriented so that higher means more member-like.

enum class Attack { kLoss, kZlib, kMinK };

inline constexpr Attack kAllAttacks[] = {Attack::kLoss, Attack::kZlib, Attack::kMinK};

std::string_view attack_name(Attack a);
Attack parse_attack(std::string_view name);

struct AttackConfig {
  double min_k_percent = 20.0;  // in (0, 100]

  void validate() const;
};

struct AttackScore {
  std::string sample_id;
  Attack attack = Attack::kLoss;
  double score = 0.0;
  bool is_member = false;
};

/// -mean NLL.
double score_loss_mia(const LossStats& stats, std::size_t sequence = 0);

/// Size in bytes of `text` as a zlib stream (RFC 1950) at the default level,
/// header and Adler-32 trailer included.
std::size_t compressed_len(std::string_view text);

/// -mean NLL / compressed_len(text).
double score_zlib_mia(const LossStats& stats, std::string_view text,
                      std::size_t sequence = 0);

/// Negated mean NLL of the m = max(1, floor(K/100 * T)) least likely tokens.
double score_min_k(std::span<const double> per_token_nll, const AttackConfig& config);
double score_min_k(const LossStats& stats, const AttackConfig& config,
                   std::size_t sequence = 0);

struct PopulationScores {
  std::vector<AttackScore> scores;
  /// Ids dropped because their loss was not finite.
  std::vector<std::string> excluded;
};

/// Scores every forget sample (member) and test sample (non-member).
/// `forget_seqs`/`test_seqs` are the encodings of the two corpora.
PopulationScores score_population(const ModelState& model, const Corpus& forget,
                                  std::span<const TokenSeq> forget_seqs,
                                  const Corpus& test,
                                  std::span<const TokenSeq> test_seqs, Attack attack,
                                  const AttackConfig& config);

/// Same, from precomputed loss statistics (one row per corpus sample).
PopulationScores score_population(const LossStats& forget_stats, const Corpus& forget,
                                  const LossStats& test_stats, const Corpus& test,
                                  Attack attack, const AttackConfig& config);

/// CSV with header sample_id,attack,score,is_member.
std::string scores_to_csv(std::span<const AttackScore> scores);

}  // namespace privleak
