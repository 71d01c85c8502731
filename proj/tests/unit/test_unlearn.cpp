#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "privleak/checkpoint.hpp"
#include "privleak/unlearn.hpp"
#include "test_util.hpp"

namespace privleak {
namespace {

bool same_params(const ModelState& a, const ModelState& b) {
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i) {
    if (a.params.tensors[i].value.data != b.params.tensors[i].value.data) return false;
  }
  return a.params.tensors.size() == b.params.tensors.size();
}

bool same_trajectory(const UnlearnOutcome& a, const UnlearnOutcome& b) {
  if (a.checkpoints.size() != b.checkpoints.size()) return false;
  for (std::size_t e = 0; e < a.checkpoints.size(); ++e) {
    if (!same_params(a.checkpoints[e], b.checkpoints[e])) return false;
  }
  return true;
}

struct Toy {
  ModelState learned;
  std::vector<TokenSeq> forget;
  std::vector<TokenSeq> keep;

  UnlearnData data() const { return {forget, keep, {}, 0.0}; }
};

std::vector<TokenSeq> toy_sequences(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<TokenId> tok(3, 9);
  std::vector<TokenSeq> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSeq s{Vocab::kBos};
    for (int j = 0; j < 6; ++j) s.push_back(tok(rng));
    s.push_back(Vocab::kEos);
    out.push_back(std::move(s));
  }
  return out;
}

Toy make_toy(std::uint64_t seed = 1, std::size_t train_epochs = 3) {
  ModelConfig mc;
  mc.vocab_size = 10;
  mc.embed_dim = 3;
  mc.context_window = 2;
  mc.hidden_blocks = 2;
  mc.hidden_dim = 6;
  mc.init_seed = seed;
  Toy t;
  t.forget = toy_sequences(4, seed * 31 + 1);
  t.keep = toy_sequences(30, seed * 31 + 2);
  std::vector<TokenSeq> all = t.keep;
  all.insert(all.end(), t.forget.begin(), t.forget.end());
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  tc.epochs = train_epochs;
  t.learned = train(init_model(mc), all, tc);
  return t;
}

UnlearnConfig base_config(Method m) {
  UnlearnConfig c;
  c.method = m;
  c.optim.learning_rate = 1e-2;
  c.optim.batch_size = 4;
  c.seed = 17;
  return c;
}

TEST(Ledger, UnitDefinition) {
  ComplexityLedger l(100, 10.0);
  l.charge(1, 100, 1.0);
  EXPECT_DOUBLE_EQ(l.charged(), 1.0);
  l.charge(2, 625, 0.16);
  EXPECT_DOUBLE_EQ(l.charged(), 2.0);
  ASSERT_EQ(l.events().size(), 2u);
  EXPECT_EQ(l.events()[1].samples, 625u);
}

TEST(Ledger, OverBudgetLeavesLedgerUnchanged) {
  ComplexityLedger l(10, 10.0);
  for (int e = 1; e <= 10; ++e) l.charge(e, 20, 0.5);
  EXPECT_DOUBLE_EQ(l.charged(), 10.0);
  EXPECT_PRIVLEAK_ERROR(l.charge(11, 1, 1.0), ErrorCode::kBudget);
  EXPECT_DOUBLE_EQ(l.charged(), 10.0);
  EXPECT_EQ(l.events().size(), 10u);
}

TEST(Ledger, LastLayerSampleCount) {
  EXPECT_EQ(last_layer_samples(10, 0.5), 20u);
  EXPECT_EQ(last_layer_samples(100, 0.16), 625u);
  EXPECT_EQ(last_layer_samples(10, 0.3), 33u);
  EXPECT_EQ(last_layer_samples(1, 1.0), 1u);
}

TEST(Methods, EpochCapsAndNames) {
  EXPECT_EQ(epoch_cap(Method::kRl), 10u);
  EXPECT_EQ(epoch_cap(Method::kGa), 10u);
  EXPECT_EQ(epoch_cap(Method::kLangevin), 10u);
  EXPECT_EQ(epoch_cap(Method::kEuk), 10u);
  EXPECT_EQ(epoch_cap(Method::kNegGradPlus), 5u);
  EXPECT_EQ(epoch_cap(Method::kScrub), 5u);
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_PRIVLEAK_ERROR(parse_method("sisa"), ErrorCode::kConfig);
}

TEST(Methods, PaperDefaults) {
  const UnlearnConfig c;
  EXPECT_EQ(c.neggrad_beta, 0.999);
  EXPECT_EQ(c.scrub_alpha, 0.999);
  EXPECT_EQ(c.scrub_beta, 1.0);
  EXPECT_EQ(c.scrub_gamma, 0.01);
  EXPECT_EQ(c.k, 3u);
  EXPECT_EQ(c.max_units, 10.0);
  EXPECT_EQ(c.optim.learning_rate, 1e-5);
  EXPECT_EQ(c.dp.noise_scale, 5e-4);
  EXPECT_EQ(c.dp.clip_norm, 1.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(RandomLabels, ZeroLearningRateIsIdentity) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kRl);
  c.optim.learning_rate = 0.0;
  const auto out = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(same_params(out.selected, t.learned));
  EXPECT_EQ(out.selected_epoch, 10u);
}

TEST(RandomLabels, TenEpochsChargeTenUnits) {
  const Toy t = make_toy();
  const auto out = unlearn(t.learned, t.data(), base_config(Method::kRl));
  EXPECT_EQ(out.checkpoints.size(), 11u);
  EXPECT_EQ(out.ledger.charged(), 10.0);
}

// Critical value of chi-square with 61 degrees of freedom at 0.999.
TEST(RandomLabels, LabelsAreUniform) {
  constexpr std::size_t kVocab = 62;
  Rng rng(2024);
  const auto labels = draw_random_labels(rng, kVocab, 100000);
  std::vector<double> counts(kVocab, 0.0);
  for (auto l : labels) {
    ASSERT_LT(l, kVocab);
    counts[l] += 1.0;
  }
  const double expected = 100000.0 / kVocab;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 100.8878853068583);
}

TEST(GradientAscent, OneStepIsSgdOnNegatedLoss) {
  const Toy t = make_toy();
  std::vector<TokenSeq> one = {t.forget[0]};
  UnlearnConfig c = base_config(Method::kGa);
  c.optim.optimizer = OptimizerKind::kSgd;
  c.optim.learning_rate = 0.2;
  c.epochs_override = 1;
  const auto out = unlearn(t.learned, UnlearnData{one, t.keep, {}, 0.0}, c);

  ModelState expect = t.learned;
  ForwardCache cache;
  forward_loss(expect, one, &cache);
  Gradients g = backward(expect, cache);
  g.scale(-1.0);
  sgd_step(expect, g, 0.2);
  EXPECT_TRUE(same_params(out.selected, expect));
}

TEST(GradientAscent, RaisesForgetLoss) {
  int raised = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Toy t = make_toy(seed, 30);
    UnlearnConfig c = base_config(Method::kGa);
    c.epochs_override = 1;
    const double before = evaluate(t.learned, t.forget).mean_nll;
    const auto out = unlearn(t.learned, t.data(), c);
    raised += evaluate(out.selected, t.forget).mean_nll >= before;
    EXPECT_EQ(out.ledger.charged(), 1.0);
  }
  EXPECT_GE(raised, 3);
}

TEST(GradientAscent, LedgerCountsEpochs) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kGa);
  c.epochs_override = 4;
  EXPECT_EQ(unlearn(t.learned, t.data(), c).ledger.charged(), 4.0);
}

void expect_frozen(const ModelState& before, const ModelState& after, const LayerMask& m) {
  for (std::size_t i = 0; i < before.params.tensors.size(); ++i) {
    if (m.trainable[i]) continue;
    EXPECT_EQ(before.params.tensors[i].value.data, after.params.tensors[i].value.data)
        << before.params.tensors[i].name;
  }
}

TEST(LastLayers, FrozenTensorsUntouched) {
  const Toy t = make_toy();
  for (Method m : {Method::kEuk, Method::kCfk}) {
    UnlearnConfig c = base_config(m);
    c.k = 2;
    const auto out = unlearn(t.learned, t.data(), c);
    const LayerMask mask = layer_mask(t.learned, 2);
    expect_frozen(t.learned, out.selected, mask);
    EXPECT_EQ(out.samples_per_epoch, last_layer_samples(t.forget.size(), mask.ratio));
    EXPECT_DOUBLE_EQ(out.param_fraction, mask.ratio);
    EXPECT_LE(out.ledger.charged(), 10.0 + ComplexityLedger::kTolerance);
    EXPECT_EQ(out.selected_epoch, 10u);
    EXPECT_NEAR(out.ledger.charged(),
                10.0 * out.samples_per_epoch * mask.ratio / t.forget.size(), 1e-12);
  }
}

TEST(LastLayers, CfkZeroEpochsAndStartingPoint) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kCfk);
  c.epochs_override = 0;
  EXPECT_TRUE(same_params(unlearn(t.learned, t.data(), c).selected, t.learned));

  // One epoch: CFk continues from the learned tensors, EUk from fresh ones.
  c.epochs_override = 1;
  c.k = 1;
  const auto cfk = unlearn(t.learned, t.data(), c);
  c.method = Method::kEuk;
  const auto euk = unlearn(t.learned, t.data(), c);
  const std::size_t last = t.learned.output_weight();
  EXPECT_NE(cfk.selected.params.tensors[last].value.data,
            euk.selected.params.tensors[last].value.data);
}

TEST(LastLayers, FullDepthIsRetrainingOnKeepSubsamples) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kEuk);
  c.k = 99;
  c.epochs_override = 3;
  const auto euk = unlearn(t.learned, t.data(), c);
  EXPECT_EQ(euk.param_fraction, 1.0);

  ModelConfig fresh_cfg = t.learned.config;
  fresh_cfg.init_seed = derive_seed(c.seed, "reinit");
  const auto ft = finetune_keep(init_model(fresh_cfg), t.data(), c, 3);
  EXPECT_TRUE(same_params(euk.selected, ft.selected));
}

TEST(NegGradPlus, BetaOneIsKeepFineTuning) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kNegGradPlus);
  c.neggrad_beta = 1.0;
  const auto ng = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(same_trajectory(ng, finetune_keep(t.learned, t.data(), c, 5)));
  EXPECT_DOUBLE_EQ(ng.ledger.charged(), 10.0);
}

TEST(NegGradPlus, BetaZeroIsGradientAscent) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kNegGradPlus);
  c.neggrad_beta = 0.0;
  c.epochs_override = 3;
  const auto ng = unlearn(t.learned, t.data(), c);
  c.method = Method::kGa;
  EXPECT_TRUE(same_trajectory(ng, unlearn(t.learned, t.data(), c)));
}

TEST(Kl, HandArithmetic) {
  ModelConfig mc;
  mc.vocab_size = 2;
  mc.init_scale = 0.0;
  ModelState teacher = init_model(mc), student = init_model(mc);
  teacher.params.tensors[teacher.output_bias()].value.data = {std::log(0.5), std::log(0.5)};
  student.params.tensors[student.output_bias()].value.data = {std::log(0.9), std::log(0.1)};
  const std::vector<TokenSeq> seqs = {{0, 1}};
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(kl_teacher_student(teacher, student, seqs).kl, expected, 1e-12);
  EXPECT_NEAR(expected, 0.5108, 5e-5);
  EXPECT_EQ(kl_teacher_student(teacher, teacher, seqs).kl, 0.0);
}

TEST(Kl, NonNegativeOnRandomLogits) {
  ModelConfig mc;
  mc.vocab_size = 6;
  mc.init_scale = 0.0;
  ModelState teacher = init_model(mc), student = init_model(mc);
  Rng rng(5);
  std::normal_distribution<double> z(0.0, 3.0);
  const std::vector<TokenSeq> seqs = {{0, 1}};
  for (int i = 0; i < 1000; ++i) {
    for (auto& x : teacher.params.tensors[teacher.output_bias()].value.data) x = z(rng);
    for (auto& x : student.params.tensors[student.output_bias()].value.data) x = z(rng);
    ASSERT_GE(kl_teacher_student(teacher, student, seqs).kl, 0.0);
  }
}

TEST(Scrub, DegenerateWeightsAreKeepFineTuning) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kScrub);
  c.scrub_alpha = 0.0;
  c.scrub_gamma = 0.0;
  c.scrub_beta = 1.0;
  const auto sc = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(same_trajectory(sc, finetune_keep(t.learned, t.data(), c, 5)));
  EXPECT_DOUBLE_EQ(sc.ledger.charged(), 10.0);
}

TEST(Scrub, FirstStepOnlySeesTheLossTerm) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kScrub);
  c.optim.optimizer = OptimizerKind::kSgd;
  c.optim.batch_size = 64;
  c.epochs_override = 1;
  const auto full = unlearn(t.learned, t.data(), c);
  c.scrub_alpha = 0.0;
  c.scrub_gamma = 0.0;
  EXPECT_TRUE(same_params(full.selected, unlearn(t.learned, t.data(), c).selected));
}

TEST(Langevin, NoiselessUnclippedIsKeepFineTuning) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kLangevin);
  c.optim.optimizer = OptimizerKind::kSgd;
  c.optim.learning_rate = 0.1;
  c.dp.noise_scale = 0.0;
  c.dp.clip_norm = std::numeric_limits<double>::infinity();
  const auto lg = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(same_trajectory(lg, finetune_keep(t.learned, t.data(), c, 10, true)));
  EXPECT_DOUBLE_EQ(lg.ledger.charged(), 10.0);
}

TEST(Langevin, NoiseChangesTheTrajectory) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kLangevin);
  c.optim.optimizer = OptimizerKind::kSgd;
  c.optim.learning_rate = 0.1;
  c.dp.noise_scale = 1.0;
  const auto a = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(same_trajectory(a, unlearn(t.learned, t.data(), c)));
  c.dp.noise_scale = 0.0;
  EXPECT_FALSE(same_trajectory(a, unlearn(t.learned, t.data(), c)));
}

TEST(Methods, EveryMethodIsDeterministicAndWithinBudget) {
  const Toy t = make_toy();
  for (Method m : kAllMethods) {
    const UnlearnConfig c = base_config(m);
    const auto a = unlearn(t.learned, t.data(), c);
    const auto b = unlearn(t.learned, t.data(), c);
    EXPECT_EQ(model_hash(a.selected), model_hash(b.selected)) << method_name(m);
    EXPECT_LE(a.ledger.charged(), 10.0 + ComplexityLedger::kTolerance) << method_name(m);
    EXPECT_LE(a.selected_epoch, a.checkpoints.size() - 1);
  }
}

TEST(Methods, DivergenceKeepsLastFiniteCheckpoint) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kGa);
  c.optim.optimizer = OptimizerKind::kSgd;
  c.optim.learning_rate = 1e300;
  const auto out = unlearn(t.learned, t.data(), c);
  EXPECT_TRUE(out.diverged);
  EXPECT_TRUE(out.selected.params.all_finite());
}

TEST(StopRule, Examples) {
  const std::vector<double> rising = {12.3, 12.8, 13.2};
  EXPECT_EQ(select_checkpoint(rising, 12.0), 3u);
  const std::vector<double> flat = {12.1, 12.2, 12.4, 12.9};
  EXPECT_EQ(select_checkpoint(flat, 12.0), 4u);
  const std::vector<double> boundary = {13.0, 12.5};
  EXPECT_EQ(select_checkpoint(boundary, 12.0), 2u);
  EXPECT_EQ(select_checkpoint(std::vector<double>{}, 12.0), 0u);
}

TEST(StopRule, MatchesDirectRule) {
  Rng rng(99);
  std::uniform_real_distribution<double> ppl(10.0, 14.0);
  std::uniform_int_distribution<int> len(1, 10);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> seq(len(rng));
    for (auto& p : seq) p = ppl(rng);
    const double base = ppl(rng) - 1.0;
    std::size_t expected = seq.size();
    for (std::size_t e = 0; e < seq.size(); ++e) {
      if (seq[e] - base > 1.0) {
        expected = e + 1;
        break;
      }
    }
    ASSERT_EQ(select_checkpoint(seq, base), expected);
  }
}

TEST(StopRule, AppliedDuringUnlearning) {
  const Toy t = make_toy();
  UnlearnConfig c = base_config(Method::kGa);
  c.optim.learning_rate = 0.05;
  std::vector<TokenSeq> all = t.keep;
  const double base = perplexity(t.learned, all);
  const auto out = unlearn(t.learned, UnlearnData{t.forget, t.keep, all, base}, c);
  ASSERT_FALSE(out.train_perplexities.empty());
  EXPECT_EQ(out.selected_epoch, select_checkpoint(out.train_perplexities, base));
  EXPECT_TRUE(same_params(out.selected, out.checkpoints[out.selected_epoch]));
}

}  // namespace
}  // namespace privleak
