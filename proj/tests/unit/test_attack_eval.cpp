#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "privleak/attack.hpp"
#include "privleak/eval.hpp"
#include "privleak/rng.hpp"
#include "test_util.hpp"

namespace privleak {
namespace {

LossStats stats_of(std::vector<std::vector<double>> rows) {
  LossStats s;
  double total = 0.0;
  for (const auto& r : rows) {
    for (double x : r) total += x;
    s.token_count += r.size();
  }
  s.mean_nll = total / static_cast<double>(s.token_count);
  s.per_token_nll = std::move(rows);
  return s;
}

std::vector<AttackScore> population(const std::vector<double>& members,
                                    const std::vector<double>& nonmembers) {
  std::vector<AttackScore> out;
  for (double m : members) out.push_back({"m" + std::to_string(out.size()), Attack::kLoss, m, true});
  for (double n : nonmembers) out.push_back({"n" + std::to_string(out.size()), Attack::kLoss, n, false});
  return out;
}

double brute_force_auc(const std::vector<AttackScore>& scores) {
  double credit = 0.0, pairs = 0.0;
  for (const auto& a : scores) {
    if (!a.is_member) continue;
    for (const auto& b : scores) {
      if (b.is_member) continue;
      pairs += 1.0;
      credit += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
    }
  }
  return credit / pairs;
}

TEST(LossMia, SignConvention) {
  EXPECT_EQ(score_loss_mia(stats_of({{2.0, 2.0}})), -2.0);
  EXPECT_EQ(score_loss_mia(stats_of({{0.0}})), 0.0);
  const auto s = stats_of({{1.0}, {3.0}});
  EXPECT_GT(score_loss_mia(s, 0), score_loss_mia(s, 1));
}

// Lengths from Python's zlib.compress at the default level.
TEST(Zlib, GoldenLengths) {
  EXPECT_EQ(compressed_len(""), 8u);
  EXPECT_EQ(compressed_len(std::string(1000, 'a')), 17u);
  EXPECT_EQ(compressed_len("call me at 713-853-1234 or 484-555-0000"), 45u);
  EXPECT_EQ(compressed_len("Dear Ivan, call me at 281-188-5256 about the credit. Thanks"), 67u);
  EXPECT_EQ(compressed_len("no phone 12-345-6789x and 1234-567-8901 then 555-123-4567"), 61u);
  EXPECT_EQ(compressed_len("repeat"), compressed_len("repeat"));
}

TEST(Zlib, Score) {
  // Text whose compressed length is 45 bytes.
  const std::string text = "call me at 713-853-1234 or 484-555-0000";
  EXPECT_NEAR(score_zlib_mia(stats_of({{2.0}}), text), -2.0 / 45.0, 1e-15);
  const auto s = stats_of({{1.0}, {2.0}});
  EXPECT_GT(score_zlib_mia(s, text, 0), score_zlib_mia(s, text, 1));
  EXPECT_EQ(score_zlib_mia(stats_of({{0.0}}), text), 0.0);
}

TEST(MinK, HandArithmetic) {
  AttackConfig c;
  c.min_k_percent = 40.0;
  const std::vector<double> nll = {0.1, 0.5, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(score_min_k(nll, c), -3.5);
}

TEST(MinK, FullSelectionIsLossMia) {
  AttackConfig c;
  c.min_k_percent = 100.0;
  const auto s = stats_of({{0.25, 1.5, 0.75, 2.0}});
  EXPECT_DOUBLE_EQ(score_min_k(s, c), score_loss_mia(s));
}

TEST(MinK, SingleTokenFloor) {
  AttackConfig c;
  for (double k : {1.0, 20.0, 100.0}) {
    c.min_k_percent = k;
    EXPECT_EQ(score_min_k(std::vector<double>{1.25}, c), -1.25);
  }
}

TEST(MinK, DefaultAndValidation) {
  EXPECT_EQ(AttackConfig{}.min_k_percent, 20.0);
  AttackConfig bad;
  bad.min_k_percent = 0.0;
  EXPECT_PRIVLEAK_ERROR(bad.validate(), ErrorCode::kConfig);
  bad.min_k_percent = 100.5;
  EXPECT_PRIVLEAK_ERROR(bad.validate(), ErrorCode::kConfig);
}

TEST(Scores, DecreasingInLoss) {
  AttackConfig c;
  const std::string text = "some fixed text";
  for (double base : {0.1, 1.0, 4.0}) {
    const auto s = stats_of({{base, base, base}, {base + 0.5, base + 0.5, base + 0.5}});
    EXPECT_GT(score_loss_mia(s, 0), score_loss_mia(s, 1));
    EXPECT_GT(score_zlib_mia(s, text, 0), score_zlib_mia(s, text, 1));
    EXPECT_GT(score_min_k(s, c, 0), score_min_k(s, c, 1));
  }
}

class PopulationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::vector<std::string> codes;
    for (int i = 0; i < 110; ++i) codes.push_back(std::to_string(200 + i % 37));
    const Corpus all = testing::phone_corpus(codes);
    std::vector<std::string> f, t;
    for (std::size_t i = 0; i < all.size(); ++i) (i < 10 ? f : t).push_back(all[i].id);
    forget = all.subset(f);
    test = all.subset(t);
    vocab = std::make_unique<Vocab>(build_vocab(all, TokenizerMode::kChar, 100));
    forget_seqs = encode_corpus(*vocab, forget, 64);
    test_seqs = encode_corpus(*vocab, test, 64);
    ModelConfig mc;
    mc.vocab_size = vocab->size();
    mc.init_seed = 4;
    model = init_model(mc);
  }

  Corpus forget, test;
  std::unique_ptr<Vocab> vocab;
  std::vector<TokenSeq> forget_seqs, test_seqs;
  ModelState model;
};

TEST_F(PopulationTest, CardinalityAndLabels) {
  for (Attack a : kAllAttacks) {
    const auto p =
        score_population(model, forget, forget_seqs, test, test_seqs, a, AttackConfig{});
    ASSERT_EQ(p.scores.size(), 110u);
    std::size_t members = 0;
    for (const auto& s : p.scores) {
      members += s.is_member;
      EXPECT_EQ(s.attack, a);
      EXPECT_TRUE(std::isfinite(s.score));
    }
    EXPECT_EQ(members, 10u);
    EXPECT_TRUE(p.excluded.empty());
  }
}

TEST_F(PopulationTest, DeterministicAndStatsOverloadAgrees) {
  const auto a = score_population(model, forget, forget_seqs, test, test_seqs, Attack::kZlib,
                                  AttackConfig{});
  const auto b = score_population(model, forget, forget_seqs, test, test_seqs, Attack::kZlib,
                                  AttackConfig{});
  EXPECT_EQ(scores_to_csv(a.scores), scores_to_csv(b.scores));
  const auto c = score_population(evaluate(model, forget_seqs), forget,
                                  evaluate(model, test_seqs), test, Attack::kZlib,
                                  AttackConfig{});
  EXPECT_EQ(scores_to_csv(a.scores), scores_to_csv(c.scores));
  EXPECT_EQ(scores_to_csv(a.scores).substr(0, 33), "sample_id,attack,score,is_member\n");
}

TEST_F(PopulationTest, MinKFullEqualsLossAuc) {
  AttackConfig full;
  full.min_k_percent = 100.0;
  const auto loss = score_population(model, forget, forget_seqs, test, test_seqs,
                                     Attack::kLoss, full);
  const auto mink = score_population(model, forget, forget_seqs, test, test_seqs,
                                     Attack::kMinK, full);
  EXPECT_NEAR(auc(loss.scores).auc, auc(mink.scores).auc, 1e-12);
}

TEST_F(PopulationTest, NonFiniteLossExcluded) {
  LossStats fs = evaluate(model, forget_seqs);
  fs.per_token_nll[3][1] = std::numeric_limits<double>::infinity();
  const auto p = score_population(fs, forget, evaluate(model, test_seqs), test,
                                  Attack::kLoss, AttackConfig{});
  ASSERT_EQ(p.excluded.size(), 1u);
  EXPECT_EQ(p.excluded[0], forget[3].id);
  EXPECT_EQ(p.scores.size(), 109u);
}

TEST(Attack, Names) {
  for (Attack a : kAllAttacks) EXPECT_EQ(parse_attack(attack_name(a)), a);
  EXPECT_PRIVLEAK_ERROR(parse_attack("lira"), ErrorCode::kConfig);
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(population({2, 3}, {0, 1})).auc, 1.0);
  EXPECT_EQ(auc(population({1, 2, 2}, {2, 1, 2})).auc, 0.5);
  EXPECT_EQ(auc(population({0.9, 0.4}, {0.6, 0.1})).auc, 0.75);
  const auto r = auc(population({0.9, 0.4}, {0.6, 0.1, 0.3}));
  EXPECT_EQ(r.n_members, 2u);
  EXPECT_EQ(r.n_nonmembers, 3u);
  EXPECT_PRIVLEAK_ERROR(auc(population({1.0}, {})), ErrorCode::kOneClass);
  EXPECT_PRIVLEAK_ERROR(auc(population({}, {1.0})), ErrorCode::kOneClass);
}

TEST(Auc, MatchesPairCountingAndSymmetries) {
  Rng rng(12345);
  std::uniform_int_distribution<int> size(1, 25);
  std::uniform_int_distribution<int> coarse(0, 6);  // forces ties
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> m(size(rng)), n(size(rng));
    for (auto& x : m) x = coarse(rng) * 0.5;
    for (auto& x : n) x = coarse(rng) * 0.5;
    auto scores = population(m, n);
    const double a = auc(scores).auc;
    ASSERT_EQ(a, brute_force_auc(scores)) << trial;

    auto swapped = scores;
    for (auto& s : swapped) s.is_member = !s.is_member;
    ASSERT_NEAR(auc(swapped).auc, 1.0 - a, 1e-15);

    auto affine = scores;
    for (auto& s : affine) s.score = 3.0 * s.score - 7.0;
    ASSERT_EQ(auc(affine).auc, a);
    auto monotone = scores;
    for (auto& s : monotone) s.score = std::exp(s.score) + s.score * s.score * s.score;
    ASSERT_EQ(auc(monotone).auc, a);
  }
}

TEST(PrivLeak, Examples) {
  EXPECT_NEAR(privleak(0.533, 0.448), 0.1897, 5e-5);
  EXPECT_NEAR(privleak(0.533, 0.448), 0.190, 5e-4);
  EXPECT_EQ(privleak(0.4, 0.4), 0.0);
  EXPECT_NEAR(privleak(0.3, 0.4), -0.25, 1e-15);
  EXPECT_PRIVLEAK_ERROR(privleak(0.5, 0.0), ErrorCode::kDegenerateRetrainAuc);
  for (double a : {1e-6, 0.1, 0.5, 0.93, 1.0}) EXPECT_EQ(privleak(a, a), 0.0);
}

TEST(ExcessRatio, Examples) {
  EXPECT_NEAR(excess_ratio(0.283, 0.190), 0.489, 5e-4);
  EXPECT_NEAR(excess_ratio(0.340, 0.190), 0.789, 5e-4);
  EXPECT_EQ(excess_ratio(0.19, 0.19), 0.0);
  EXPECT_NEAR(excess_ratio(-0.3, 0.2), 0.5, 1e-15);
  EXPECT_PRIVLEAK_ERROR(excess_ratio(0.3, 0.0), ErrorCode::kDegenerateBase);
}

std::vector<PrivLeakRecord> three(const std::string& method, double r, double c, double m) {
  return {{method, Attack::kLoss, Scenario::kRandom, 0, 0, r, 10.0},
          {method, Attack::kLoss, Scenario::kCanary, 0, 0, c, 12.0},
          {method, Attack::kLoss, Scenario::kMinority, 0, 0, m, 11.0}};
}

TEST(Aggregate, NoUnlearnRow) {
  const auto recs = three("no_unlearn", 0.190, 0.283, 0.340);
  const auto sum = aggregate(recs);
  ASSERT_EQ(sum.rows.size(), 1u);
  const auto& row = sum.rows[0];
  EXPECT_EQ(row.worst_pl, 0.340);
  EXPECT_EQ(row.worst_scenario, Scenario::kMinority);
  EXPECT_EQ(row.worst_perplexity, 12.0);
  EXPECT_NEAR(*row.excess_ratio_canary, 0.489, 5e-4);
  EXPECT_NEAR(*row.excess_ratio_minority, 0.789, 5e-4);
  EXPECT_TRUE(row.underestimated);
  EXPECT_EQ(row.pl(Scenario::kCanary), 0.283);
}

TEST(Aggregate, MagnitudeRuleKeepsSign) {
  const auto recs = three("ga", -0.5, 0.2, 0.3);
  const auto& row = aggregate(recs).rows[0];
  EXPECT_EQ(row.worst_pl, -0.5);
  EXPECT_EQ(row.worst_scenario, Scenario::kRandom);
  EXPECT_FALSE(row.underestimated);
  for (Scenario s : kAllScenarios) EXPECT_GE(std::abs(row.worst_pl), std::abs(row.pl(s)));
}

TEST(Aggregate, ThresholdAndDegenerateBase) {
  // 6/5 - 1 is exactly the threshold in binary floating point.
  auto recs = three("a", 5.0, 5.99, 1.0);
  EXPECT_FALSE(aggregate(recs).rows[0].underestimated);
  recs = three("a", 5.0, 6.0, 1.0);
  EXPECT_TRUE(aggregate(recs).rows[0].underestimated);
  recs = three("a", 0.0, 0.1, 0.05);
  const auto row = aggregate(recs).rows[0];
  EXPECT_FALSE(row.excess_ratio_canary.has_value());
  EXPECT_FALSE(row.underestimated);
}

TEST(Aggregate, MissingScenarioRejected) {
  auto recs = three("a", 0.1, 0.2, 0.3);
  recs.pop_back();
  EXPECT_PRIVLEAK_ERROR(aggregate(recs), ErrorCode::kMissingScenario);
}

TEST(Aggregate, GroupsInFirstAppearanceOrder) {
  auto recs = three("scrub", 0.1, 0.2, 0.3);
  auto more = three("ga", 0.3, 0.2, 0.1);
  for (auto& r : more) r.attack = Attack::kZlib;
  recs.insert(recs.begin() + 1, more.begin(), more.end());
  const auto sum = aggregate(recs);
  ASSERT_EQ(sum.rows.size(), 2u);
  EXPECT_EQ(sum.rows[0].method, "scrub");
  EXPECT_EQ(sum.rows[1].method, "ga");
  EXPECT_EQ(sum.rows[1].attack, Attack::kZlib);
}

}  // namespace
}  // namespace privleak
