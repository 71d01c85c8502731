#include "privleak/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "privleak/error.hpp"

namespace privleak {

AucResult auc(std::span<const AttackScore> scores) {
  AucResult r;
  for (const auto& s : scores) (s.is_member ? r.n_members : r.n_nonmembers)++;
  if (r.n_members == 0 || r.n_nonmembers == 0) {
    throw Error(ErrorCode::kOneClass, "AUC needs members and non-members");
  }

  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.emplace_back(s.score, s.is_member);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Twice the member rank sum, using mid-ranks for ties; kept in integers so
  // the result is exact.
  unsigned long long twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    std::size_t members = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      members += sorted[j].second;
      ++j;
    }
    // 1-based ranks i+1 .. j share the mid-rank (i+1+j)/2.
    twice_rank_sum += static_cast<unsigned long long>(members) * (i + 1 + j);
    i = j;
  }
  const auto m = static_cast<unsigned long long>(r.n_members);
  const auto n = static_cast<unsigned long long>(r.n_nonmembers);
  // U = R - m(m+1)/2; credited pairs doubled to stay integral.
  const unsigned long long twice_u = twice_rank_sum - m * (m + 1);
  r.auc = static_cast<double>(twice_u) / (2.0 * static_cast<double>(m * n));
  return r;
}

double privleak(double auc_unlearn, double auc_retrain) {
  if (!(auc_retrain > kDenominatorEpsilon)) {
    throw Error(ErrorCode::kDegenerateRetrainAuc,
                "retrain AUC " + std::to_string(auc_retrain) + " is degenerate");
  }
  return (auc_unlearn - auc_retrain) / auc_retrain;
}

double excess_ratio(double pl_case, double pl_random) {
  const double base = std::fabs(pl_random);
  if (!(base > kDenominatorEpsilon)) {
    throw Error(ErrorCode::kDegenerateBase, "|PL_random| is degenerate");
  }
  return (std::fabs(pl_case) - base) / base;
}

double MinorityAwareRow::pl(Scenario s) const {
  switch (s) {
    case Scenario::kRandom: return pl_random;
    case Scenario::kCanary: return pl_canary;
    case Scenario::kMinority: return pl_minority;
  }
  return pl_random;
}

MinorityAwareSummary aggregate(std::span<const PrivLeakRecord> records) {
  struct Cell {
    std::optional<PrivLeakRecord> by_scenario[3];
  };
  std::vector<std::pair<std::string, Attack>> order;
  std::map<std::pair<std::string, int>, Cell> cells;
  for (const auto& rec : records) {
    auto key = std::make_pair(rec.method, static_cast<int>(rec.attack));
    if (!cells.count(key)) order.emplace_back(rec.method, rec.attack);
    cells[key].by_scenario[static_cast<int>(rec.scenario)] = rec;
  }

  MinorityAwareSummary summary;
  for (const auto& [method, attack] : order) {
    const Cell& cell = cells.at({method, static_cast<int>(attack)});
    MinorityAwareRow row;
    row.method = method;
    row.attack = attack;
    double worst_abs = -1.0;
    for (Scenario s : kAllScenarios) {
      const auto& rec = cell.by_scenario[static_cast<int>(s)];
      if (!rec) {
        throw Error(ErrorCode::kMissingScenario,
                    method + "/" + std::string(attack_name(attack)) + " lacks " +
                        std::string(scenario_name(s)));
      }
      if (std::fabs(rec->pl) > worst_abs) {
        worst_abs = std::fabs(rec->pl);
        row.worst_pl = rec->pl;
        row.worst_scenario = s;
      }
      row.worst_perplexity = std::max(row.worst_perplexity, rec->perplexity);
    }
    row.pl_random = cell.by_scenario[0]->pl;
    row.pl_canary = cell.by_scenario[1]->pl;
    row.pl_minority = cell.by_scenario[2]->pl;
    if (std::fabs(row.pl_random) > kDenominatorEpsilon) {
      row.excess_ratio_canary = excess_ratio(row.pl_canary, row.pl_random);
      row.excess_ratio_minority = excess_ratio(row.pl_minority, row.pl_random);
      row.underestimated = *row.excess_ratio_canary >= kUnderestimateThreshold ||
                           *row.excess_ratio_minority >= kUnderestimateThreshold;
    }
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

}  // namespace privleak
