#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privleak/attack.hpp"
#include "privleak/partition.hpp"

namespace privleak {

struct AucResult {
  double auc = 0.5;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
};

/// Mann-Whitney AUC: the fraction of (member, non-member) pairs where the
/// member scores higher, ties counting one half. Computed from mid-ranks in
/// O(n log n); throws E_ONE_CLASS when either class is empty.
AucResult auc(std::span<const AttackScore> scores);

inline constexpr double kDenominatorEpsilon = 1e-9;

/// (auc_unlearn - auc_retrain) / auc_retrain.
double privleak(double auc_unlearn, double auc_retrain);

/// (|pl_case| - |pl_random|) / |pl_random|.
double excess_ratio(double pl_case, double pl_random);

struct PrivLeakRecord {
  std::string method;
  Attack attack = Attack::kLoss;
  Scenario scenario = Scenario::kRandom;
  double auc_unlearn = 0.0;
  double auc_retrain = 0.0;
  double pl = 0.0;
  double perplexity = 0.0;
};

inline constexpr double kUnderestimateThreshold = 0.20;

struct MinorityAwareRow {
  std::string method;
  Attack attack = Attack::kLoss;
  double pl_random = 0.0;
  double pl_canary = 0.0;
  double pl_minority = 0.0;
  double worst_pl = 0.0;  // signed value with the largest magnitude
  Scenario worst_scenario = Scenario::kRandom;
  /// Missing when |pl_random| is degenerate.
  std::optional<double> excess_ratio_canary;
  std::optional<double> excess_ratio_minority;
  double worst_perplexity = 0.0;
  bool underestimated = false;  // some excess ratio >= 20%

  double pl(Scenario s) const;
};

struct MinorityAwareSummary {
  std::vector<MinorityAwareRow> rows;  // in first-appearance order of (method, attack)
};

/// Groups records by (method, attack); all three scenarios are required
/// (E_MISSING_SCENARIO otherwise).
MinorityAwareSummary aggregate(std::span<const PrivLeakRecord> records);

}  // namespace privleak
