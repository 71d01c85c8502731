#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "privleak/checkpoint.hpp"
#include "privleak/lm.hpp"
#include "privleak/optim.hpp"
#include "test_util.hpp"

namespace privleak {
namespace {

ModelConfig small_config(std::size_t vocab = 7, std::uint64_t seed = 3) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 3;
  c.context_window = 2;
  c.hidden_blocks = 2;
  c.hidden_dim = 5;
  c.init_scale = 0.5;
  c.init_seed = seed;
  return c;
}

bool same_params(const ModelState& a, const ModelState& b) {
  if (a.params.tensors.size() != b.params.tensors.size()) return false;
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i) {
    if (a.params.tensors[i].value.data != b.params.tensors[i].value.data) return false;
  }
  return true;
}

// Zero weights; logits equal the output bias at every position.
ModelState bias_only_model(const std::vector<double>& bias) {
  ModelConfig c = small_config(bias.size());
  c.init_scale = 0.0;
  ModelState m = init_model(c);
  m.params.tensors[m.output_bias()].value.data = bias;
  return m;
}

const std::vector<TokenSeq> kBatch = {
    {0, 3, 4, 5, 1}, {0, 6, 2, 1}, {0, 4, 4, 4, 3, 1}, {0, 5, 1}};

TEST(InitModel, DeterministicAndScaled) {
  const auto a = init_model(small_config());
  EXPECT_TRUE(same_params(a, init_model(small_config())));
  EXPECT_FALSE(same_params(a, init_model(small_config(7, 4))));
  for (const auto& t : a.params.tensors) {
    for (double x : t.value.data) {
      EXPECT_LE(std::abs(x), 0.5);
    }
  }
}

TEST(InitModel, ZeroScaleGivesZeros) {
  ModelConfig c = small_config();
  c.init_scale = 0.0;
  const auto m = init_model(c);
  EXPECT_EQ(m.params.squared_norm(), 0.0);
}

TEST(InitModel, ParameterCountClosedForm) {
  const ModelConfig c = small_config();
  const std::size_t v = 7, e = 3, d = 6, h = 5, l = 2;
  const std::size_t expected = v * e + l * (d * h + h + h * d + d) + d * v + v;
  EXPECT_EQ(c.parameter_count(), expected);
  EXPECT_EQ(init_model(c).params.size(), expected);
  // Front-to-back layer indices.
  const auto m = init_model(c);
  for (std::size_t i = 1; i < m.params.tensors.size(); ++i) {
    EXPECT_LE(m.params.tensors[i - 1].layer, m.params.tensors[i].layer);
  }
  EXPECT_EQ(m.params.tensors.back().layer, c.layer_count() - 1);
}

TEST(InitModel, InvalidConfigRejected) {
  ModelConfig c = small_config();
  c.context_window = 0;
  EXPECT_PRIVLEAK_ERROR(init_model(c), ErrorCode::kConfig);
}

TEST(ForwardLoss, UniformLogits) {
  const auto m = bias_only_model({0, 0, 0, 0});
  const std::vector<TokenSeq> seqs = {{0, 3, 2, 1}};
  const auto stats = forward_loss(m, seqs);
  for (double x : stats.per_token_nll[0]) EXPECT_NEAR(x, std::log(4.0), 1e-15);
}

TEST(ForwardLoss, ConstructedDistribution) {
  const auto m = bias_only_model(
      {std::log(0.5), std::log(0.25), std::log(0.25), -1000.0});
  const std::vector<TokenSeq> seqs = {{1, 0}};
  EXPECT_NEAR(forward_loss(m, seqs).per_token_nll[0][0], std::log(2.0), 1e-12);
}

TEST(ForwardLoss, TokenWeightedMean) {
  // p = [0.5, 0.25, 0.125, 0.125]
  const auto m = bias_only_model(
      {std::log(0.5), std::log(0.25), std::log(0.125), std::log(0.125)});
  const std::vector<TokenSeq> seqs = {{0, 1, 0}, {0, 2, 3, 0, 0}};
  const auto s = forward_loss(m, seqs);
  const double l2 = std::log(2.0);
  // Predictions: 1,0 | 2,3,0,0 -> 2+1 | 3+3+1+1 bits.
  ASSERT_EQ(s.token_count, 6u);
  EXPECT_NEAR(s.mean_nll, 11.0 * l2 / 6.0, 1e-12);
  EXPECT_NEAR(s.sequence_mean(0), 1.5 * l2, 1e-12);
  EXPECT_NEAR(s.sequence_mean(1), 2.0 * l2, 1e-12);
}

TEST(ForwardLoss, RejectsBadTokens) {
  const auto m = init_model(small_config());
  const std::vector<TokenSeq> bad = {{0, 99}};
  EXPECT_PRIVLEAK_ERROR(forward_loss(m, bad), ErrorCode::kBadToken);
  const std::vector<TokenSeq> short_seq = {{0}};
  EXPECT_PRIVLEAK_ERROR(forward_loss(m, short_seq), ErrorCode::kBadToken);
}

TEST(ForwardLoss, SoftmaxRowsNormalized) {
  const auto m = init_model(small_config());
  ForwardCache cache;
  const auto stats = forward_loss(m, kBatch, &cache);
  for (std::size_t r = 0; r < cache.probs.rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cache.probs.cols; ++c) sum += cache.probs(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  for (const auto& row : stats.per_token_nll) {
    for (double x : row) EXPECT_GE(x, 0.0);
  }
}

// Central differences on every parameter of a 2-block model.
TEST(Backward, MatchesFiniteDifferences) {
  const ModelState m = init_model(small_config());
  ForwardCache cache;
  forward_loss(m, kBatch, &cache);
  const Gradients g = backward(m, cache);
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < m.params.tensors[t].size(); ++j) {
      ModelState p = m, q = m;
      p.params.tensors[t].value.data[j] += h;
      q.params.tensors[t].value.data[j] -= h;
      const double numeric =
          (forward_loss(p, kBatch).mean_nll - forward_loss(q, kBatch).mean_nll) / (2 * h);
      const double analytic = g.tensors[t].value.data[j];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Backward, ScalesLinearly) {
  const ModelState m = init_model(small_config());
  ForwardCache cache;
  forward_loss(m, kBatch, &cache);
  const Gradients g1 = backward_from_logits(m, cache, nll_logit_grad(cache, 1.0));
  const Gradients g2 = backward_from_logits(m, cache, nll_logit_grad(cache, 2.0));
  for (std::size_t t = 0; t < g1.tensors.size(); ++t) {
    for (std::size_t j = 0; j < g1.tensors[t].size(); ++j) {
      EXPECT_NEAR(g2.tensors[t].value.data[j], 2.0 * g1.tensors[t].value.data[j], 1e-14);
    }
  }
}

TEST(Backward, ZeroAtBiasOptimum) {
  // Targets 1,2,2,1 -> empirical distribution [0, .5, .5, 0+]; with bias
  // set to its log the output-bias gradient vanishes.
  const std::vector<TokenSeq> seqs = {{0, 1, 2}, {0, 2, 1}};
  const auto m = bias_only_model({-800.0, std::log(0.5), std::log(0.5), -800.0});
  ForwardCache cache;
  forward_loss(m, seqs, &cache);
  const Gradients g = backward(m, cache);
  for (double x : g.tensors[m.output_bias()].value.data) EXPECT_NEAR(x, 0.0, 1e-15);
}

TEST(Backward, PerSampleGradientsMatchSingleBatches) {
  const ModelState m = init_model(small_config());
  const auto per = per_sample_gradients(m, kBatch);
  ASSERT_EQ(per.size(), kBatch.size());
  for (std::size_t i = 0; i < kBatch.size(); ++i) {
    ForwardCache cache;
    forward_loss(m, std::span(&kBatch[i], 1), &cache);
    const Gradients g = backward(m, cache);
    for (std::size_t t = 0; t < g.tensors.size(); ++t) {
      for (std::size_t j = 0; j < g.tensors[t].size(); ++j) {
        EXPECT_NEAR(per[i].tensors[t].value.data[j], g.tensors[t].value.data[j], 1e-13);
      }
    }
  }
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  const ModelState teacher = init_model(small_config(7, 11));
  const ModelState student = init_model(small_config(7, 12));
  const KlResult r = kl_teacher_student(teacher, student, kBatch);
  EXPECT_GT(r.kl, 0.0);
  EXPECT_NEAR(kl_teacher_student(teacher, teacher, kBatch).kl, 0.0, 1e-14);
  const double h = 1e-4;
  for (std::size_t t : {std::size_t{0}, student.output_weight()}) {
    for (std::size_t j = 0; j < 5; ++j) {
      ModelState p = student, q = student;
      p.params.tensors[t].value.data[j] += h;
      q.params.tensors[t].value.data[j] -= h;
      const double numeric = (kl_teacher_student(teacher, p, kBatch).kl -
                              kl_teacher_student(teacher, q, kBatch).kl) /
                             (2 * h);
      EXPECT_NEAR(r.grad.tensors[t].value.data[j], numeric,
                  1e-4 * std::max(1e-3, std::abs(numeric)));
    }
  }
}

TEST(AdamW, ZeroGradientNoDecay) {
  ModelState m = init_model(small_config());
  const ModelState before = m;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.learning_rate = 0.1;
  AdamState st = make_adam_state(m);
  adamw_step(m, m.params.zeros_like(), st, cfg);
  EXPECT_TRUE(same_params(m, before));
}

TEST(AdamW, ZeroGradientDecoupledDecay) {
  ModelState m = init_model(small_config());
  const ModelState before = m;
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.learning_rate = 0.01;
  AdamState st = make_adam_state(m);
  adamw_step(m, m.params.zeros_like(), st, cfg);
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < m.params.tensors[t].size(); ++j) {
      EXPECT_DOUBLE_EQ(m.params.tensors[t].value.data[j],
                       before.params.tensors[t].value.data[j] * (1 - 0.01 * 0.1));
    }
  }
}

TEST(AdamW, FirstStepClosedForm) {
  ModelState m = init_model(small_config());
  const ModelState before = m;
  Gradients g = m.params.zeros_like();
  double k = -3.0;
  for (auto& t : g.tensors) {
    for (double& x : t.value.data) x = (k += 0.37);
  }
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.learning_rate = 0.05;
  cfg.epsilon = 1e-3;
  AdamState st = make_adam_state(m);
  adamw_step(m, g, st, cfg);
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t) {
    for (std::size_t j = 0; j < m.params.tensors[t].size(); ++j) {
      const double gj = g.tensors[t].value.data[j];
      EXPECT_NEAR(m.params.tensors[t].value.data[j] - before.params.tensors[t].value.data[j],
                  -0.05 * gj / (std::abs(gj) + 1e-3), 1e-15);
    }
  }
}

TEST(DpSgd, NoiselessUnclippedIsMeanSgd) {
  const ModelState m = init_model(small_config());
  const auto per = per_sample_gradients(m, kBatch);
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  DpSgdConfig dp;
  dp.noise_scale = 0.0;
  dp.clip_norm = 1e6;
  ModelState a = m, b = m;
  Rng rng(1);
  dpsgd_step(a, per, dp, cfg, rng);
  sgd_step(b, average_gradients(per), 0.3);
  EXPECT_TRUE(same_params(a, b));

  // Infinite clip norm is the same reduction.
  dp.clip_norm = std::numeric_limits<double>::infinity();
  ModelState c = m;
  dpsgd_step(c, per, dp, cfg, rng);
  EXPECT_TRUE(same_params(c, b));
}

TEST(DpSgd, ClipToNorm) {
  Gradients g = init_model(small_config()).params;
  const double n = std::sqrt(g.squared_norm());
  g.scale(2.0 / n);
  clip_gradient(g, 1.0);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-12);
  Gradients small = g;
  small.scale(0.5);
  const Gradients copy = small;
  clip_gradient(small, 1.0);
  EXPECT_EQ(small.tensors[0].value.data, copy.tensors[0].value.data);
}

TEST(DpSgd, SeededNoiseReproducible) {
  const ModelState m = init_model(small_config());
  const auto per = per_sample_gradients(m, kBatch);
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  DpSgdConfig dp;
  dp.noise_scale = 0.5;
  ModelState a = m, b = m, c = m;
  Rng r1(9), r2(9), r3(10);
  dpsgd_step(a, per, dp, cfg, r1);
  dpsgd_step(b, per, dp, cfg, r2);
  dpsgd_step(c, per, dp, cfg, r3);
  EXPECT_TRUE(same_params(a, b));
  EXPECT_FALSE(same_params(a, c));
}

TEST(Perplexity, UniformAndConsistency) {
  const auto m = bias_only_model(std::vector<double>(100, 0.0));
  const std::vector<TokenSeq> seqs = {{0, 5, 17, 99}, {0, 1}};
  EXPECT_NEAR(perplexity(m, seqs), 100.0, 1e-9);

  LossStats zero;
  zero.mean_nll = 0.0;
  EXPECT_EQ(perplexity(zero), 1.0);
  LossStats four;
  four.mean_nll = std::log(4.0);
  EXPECT_NEAR(perplexity(four), 4.0, 1e-12);

  const auto trained = init_model(small_config());
  const LossStats s = evaluate(trained, kBatch);
  EXPECT_NEAR(perplexity(s), std::exp(s.mean_nll), 1e-12);
  EXPECT_NEAR(perplexity(trained, kBatch), std::exp(s.mean_nll), 1e-12);
}

TEST(Train, ZeroEpochsIsIdentity) {
  const ModelState m = init_model(small_config());
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(same_params(train(m, kBatch, cfg), m));
}

TEST(Train, MemorizesSmallCorpus) {
  ModelConfig mc = small_config(8);
  mc.init_scale = 0.1;
  const ModelState m = init_model(mc);
  std::vector<TokenSeq> data;
  for (TokenId i = 0; i < 20; ++i) {
    data.push_back({0, TokenId(3 + i % 5), TokenId(3 + (i * 3) % 5), TokenId(3 + (i + 2) % 5), 1});
  }
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  const double before = evaluate(m, data).mean_nll;
  const ModelState out = train(m, data, cfg);
  EXPECT_LT(evaluate(out, data).mean_nll, before);
  // Bit-identical on a rerun.
  EXPECT_TRUE(same_params(out, train(m, data, cfg)));
}

TEST(Train, PaperDefaultsAccepted) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.learning_rate, 1e-5);
  EXPECT_EQ(cfg.batch_size, 32u);
  EXPECT_EQ(cfg.epochs, 5u);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::kAdamW);
  EXPECT_NO_THROW(cfg.validate());
  const DpSgdConfig dp;
  EXPECT_EQ(dp.noise_scale, 5e-4);
  EXPECT_EQ(dp.clip_norm, 1.0);
  const ModelState m = init_model(small_config());
  EXPECT_NO_THROW(train(m, kBatch, cfg));
}

TEST(Train, DpTrainingIsSeeded) {
  const ModelState m = init_model(small_config());
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.1;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  DpSgdConfig dp;
  dp.noise_seed = 5;
  EXPECT_TRUE(same_params(train(m, kBatch, cfg, dp), train(m, kBatch, cfg, dp)));
  DpSgdConfig other = dp;
  other.noise_seed = 6;
  EXPECT_FALSE(same_params(train(m, kBatch, cfg, dp), train(m, kBatch, cfg, other)));
}

TEST(KeyedOrder, PermutationSharedRelativeOrder) {
  const std::vector<std::uint64_t> keys = {11, 22, 33, 44, 55, 66, 77, 88};
  const auto order = keyed_order(keys, 5, 0);
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(keys.size());
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  EXPECT_NE(order, keyed_order(keys, 5, 1));

  // Dropping some keys keeps the others in the same relative order.
  const std::vector<std::uint64_t> sub = {22, 44, 66, 88};
  std::vector<std::uint64_t> full_seq, sub_seq;
  for (auto i : order) {
    if (keys[i] % 22 == 0) full_seq.push_back(keys[i]);
  }
  for (auto i : keyed_order(sub, 5, 0)) sub_seq.push_back(sub[i]);
  EXPECT_EQ(full_seq, sub_seq);
}

TEST(LayerMask, RatioArithmetic) {
  const std::vector<std::size_t> layers = {0, 1, 2, 3}, sizes = {10, 10, 10, 10};
  const LayerMask m2 = mask_last_layers(layers, sizes, 2);
  EXPECT_EQ(m2.ratio, 0.5);
  EXPECT_EQ(m2.trainable, (std::vector<bool>{false, false, true, true}));
  const LayerMask all = mask_last_layers(layers, sizes, 9);
  EXPECT_EQ(all.ratio, 1.0);
}

TEST(LayerMask, MaskedTrainingFreezesOthers) {
  ModelState m = init_model(small_config());
  const ModelState before = m;
  const LayerMask mask = layer_mask(m, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  Optimizer opt(m, cfg, mask.trainable);
  ForwardCache cache;
  forward_loss(m, kBatch, &cache);
  opt.step(m, backward(m, cache));
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t) {
    const bool same = m.params.tensors[t].value.data == before.params.tensors[t].value.data;
    EXPECT_EQ(same, !mask.trainable[t]) << m.params.tensors[t].name;
  }
}

TEST(Reinit, NoneAllAndPartial) {
  const ModelState m = init_model(small_config());
  LayerMask none;
  none.trainable.assign(m.params.tensors.size(), false);
  EXPECT_TRUE(same_params(reinit_layers(m, none, 77), m));

  ModelConfig c = m.config;
  c.init_seed = 77;
  EXPECT_TRUE(same_params(reinit_layers(m, full_mask(m), 77), init_model(c)));

  const LayerMask last = layer_mask(m, 1);
  const ModelState r = reinit_layers(m, last, 77);
  for (std::size_t t = 0; t < m.params.tensors.size(); ++t) {
    const bool same = r.params.tensors[t].value.data == m.params.tensors[t].value.data;
    EXPECT_EQ(same, !last.trainable[t]);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  testing::TempDir dir("ckpt");
  const ModelState m = init_model(small_config());
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(m, path);
  const ModelState back = load_checkpoint(path);
  EXPECT_EQ(back.config, m.config);
  EXPECT_TRUE(same_params(back, m));
  EXPECT_EQ(model_hash(back), model_hash(m));
  std::string bytes = serialize_model(m);
  EXPECT_PRIVLEAK_ERROR(deserialize_model(bytes.substr(0, bytes.size() - 3)),
                        ErrorCode::kParse);
  bytes[0] = 'X';
  EXPECT_PRIVLEAK_ERROR(deserialize_model(bytes), ErrorCode::kParse);
}

TEST(Checkpoint, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace privleak
