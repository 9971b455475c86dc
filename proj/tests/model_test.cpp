#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topicsum/graph.hpp"
#include "topicsum/model.hpp"

using namespace topicsum;
using tsumtest::bitwise_equal;
using tsumtest::make_tiny_fixture;
using tsumtest::TinyFixture;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

std::vector<int> random_ids(Rng& rng, int n, int vocab_size) {
  std::vector<int> ids(n);
  for (int& id : ids) id = static_cast<int>(rng.below(vocab_size));
  return ids;
}

TEST(EncodeTest, ShapeMatchesInputLength) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(1);
  const auto ids = random_ids(rng, 12, f.cfg.vocab_size);
  const Mat reps = encode_ids(f.params, f.cfg, ids);
  EXPECT_EQ(reps.rows(), 12);
  EXPECT_EQ(reps.cols(), f.cfg.d_model);
}

TEST(EncodeTest, DeterministicInEvalMode) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(2);
  const auto ids = random_ids(rng, 9, f.cfg.vocab_size);
  EXPECT_TRUE(bitwise_equal(encode_ids(f.params, f.cfg, ids),
                            encode_ids(f.params, f.cfg, ids)));
}

TEST(EncodeTest, PerturbingOnePositionChangesOutput) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(3);
  auto ids = random_ids(rng, 10, f.cfg.vocab_size);
  const Mat before = encode_ids(f.params, f.cfg, ids);
  ids[4] = (ids[4] + 1) % f.cfg.vocab_size;
  const Mat after = encode_ids(f.params, f.cfg, ids);
  EXPECT_GT((before - after).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EncodeTest, OutOfRangeIdFails) {
  const TinyFixture f = make_tiny_fixture();
  EXPECT_THROW(encode_ids(f.params, f.cfg, {0, f.cfg.vocab_size}),
               std::out_of_range);
}

TEST(DecodeTest, RowsSumToOneAndMatchTargetLength) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(4);
  const Mat mem = random_mat(rng, 8, f.cfg.d_model);
  const auto target = random_ids(rng, 7, f.cfg.vocab_size);
  const Mat probs = decode(f.params, f.cfg, mem, target);
  ASSERT_EQ(probs.rows(), 7);
  ASSERT_EQ(probs.cols(), f.cfg.vocab_size);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-6);
  }
}

TEST(DecodeTest, CausalMaskHoldsRowByRow) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(5);
  const Mat mem = random_mat(rng, 6, f.cfg.d_model);
  const auto target = random_ids(rng, 8, f.cfg.vocab_size);
  const Mat base = decode(f.params, f.cfg, mem, target);
  for (int j = 0; j < 8; ++j) {
    auto changed = target;
    changed[j] = (changed[j] + 1) % f.cfg.vocab_size;
    const Mat probs = decode(f.params, f.cfg, mem, changed);
    for (int r = 0; r <= j; ++r) {
      EXPECT_TRUE(bitwise_equal(Mat(base.row(r)), Mat(probs.row(r))))
          << "row " << r << " changed when target position " << j << " changed";
    }
    // rows past j see the change (the final position feeds no decoder input)
    if (j < 7) EXPECT_GT((base - probs).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(DecodeTest, EmptyTargetFails) {
  const TinyFixture f = make_tiny_fixture();
  const Mat mem = Mat::Zero(4, f.cfg.d_model);
  EXPECT_THROW(decode(f.params, f.cfg, mem, {}), std::invalid_argument);
}

TEST(MeanPoolTest, FixtureValues) {
  Mat reps(4, 1);
  reps << 1, 3, 3, 5;
  const Mat pooled = mean_pool(reps, {{0, 2}, {2, 4}});
  ASSERT_EQ(pooled.rows(), 2);
  EXPECT_DOUBLE_EQ(pooled(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(pooled(1, 0), 4.0);
}

TEST(MeanPoolTest, SingleTokenSpanIsIdentity) {
  Rng rng(6);
  const Mat reps = random_mat(rng, 5, 3);
  const Mat pooled = mean_pool(reps, {{2, 3}});
  EXPECT_TRUE(bitwise_equal(Mat(reps.row(2)), Mat(pooled.row(0))));
}

TEST(MeanPoolTest, PermutingRowsInsideSpanLeavesMeanUnchanged) {
  Rng rng(7);
  Mat reps = random_mat(rng, 6, 4);
  const Mat before = mean_pool(reps, {{1, 4}});
  reps.row(1).swap(reps.row(3));
  const Mat after = mean_pool(reps, {{1, 4}});
  EXPECT_TRUE(before.isApprox(after, 1e-15));
}

TEST(MeanPoolTest, EmptySpanListGivesEmptyOutput) {
  const Mat reps = Mat::Ones(3, 2);
  const Mat pooled = mean_pool(reps, {});
  EXPECT_EQ(pooled.rows(), 0);
  EXPECT_EQ(pooled.cols(), 2);
}

TEST(MeanPoolTest, Linearity) {
  Rng rng(8);
  const Mat x = random_mat(rng, 7, 3);
  const Mat y = random_mat(rng, 7, 3);
  const std::vector<SentenceSpan> spans = {{0, 3}, {3, 4}, {4, 7}};
  const double a = 0.7, b = -1.3;
  const Mat lhs = mean_pool(a * x + b * y, spans);
  const Mat rhs = a * mean_pool(x, spans) + b * mean_pool(y, spans);
  EXPECT_TRUE(lhs.isApprox(rhs, 1e-12));
}

TEST(TopicHeadTest, ShapeAndRowwisePurity) {
  const TinyFixture f = make_tiny_fixture();
  Rng rng(9);
  Mat sents = random_mat(rng, 4, f.cfg.d_model);
  sents.row(3) = sents.row(1);
  const auto dists = topic_head(f.params, f.cfg, sents);
  ASSERT_EQ(dists.size(), 4u);
  for (const auto& d : dists) {
    EXPECT_EQ(d.size(), f.cfg.v);
    EXPECT_NEAR(d.sum(), 1.0, 1e-6);
  }
  EXPECT_TRUE(dists[1].isApprox(dists[3], 0.0));
}

TEST(TopicHeadTest, ZeroWeightsGiveUniform) {
  TinyFixture f = make_tiny_fixture();
  f.params.at("head.topic.w1").setZero();
  f.params.at("head.topic.b1").setZero();
  f.params.at("head.topic.b2").setZero();
  Rng rng(10);
  const auto dists = topic_head(f.params, f.cfg, random_mat(rng, 3, f.cfg.d_model));
  for (const auto& d : dists) {
    for (int t = 0; t < f.cfg.v; ++t) {
      EXPECT_DOUBLE_EQ(d(t), 1.0 / f.cfg.v);
    }
  }
}

TEST(SoftmaxRowsTest, SumToOneOverManySeeds) {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    ad::Tape tape(false);
    const ad::Var probs = tape.softmax_rows(tape.constant(random_mat(rng, 3, 6, 4.0)));
    for (Eigen::Index r = 0; r < 3; ++r) {
      EXPECT_NEAR(tape.val(probs).row(r).sum(), 1.0, 1e-6);
    }
  }
}

TEST(CeSummaryLossTest, PerfectPredictionIsZero) {
  Mat probs = Mat::Zero(3, 4);
  probs(0, 1) = 1.0;
  probs(1, 2) = 1.0;
  probs(2, 3) = 1.0;
  EXPECT_DOUBLE_EQ(ce_summary_loss(probs, {1, 2, 3}), 0.0);
}

TEST(CeSummaryLossTest, SingleRowHalfProbability) {
  Mat probs(1, 3);
  probs << 0.5, 0.25, 0.25;
  // no padding in play, so id 0 is an ordinary class here
  EXPECT_NEAR(ce_summary_loss(probs, {0}, -1), std::log(2.0), 1e-12);
}

TEST(CeSummaryLossTest, AveragesOverRows) {
  Mat probs(2, 2);
  probs << 0.5, 0.5, 0.5, 0.5;
  EXPECT_NEAR(ce_summary_loss(probs, {0, 1}), std::log(2.0), 1e-12);
}

TEST(CeSummaryLossTest, PadPositionsExcluded) {
  Mat probs(3, 4);
  probs << 0.25, 0.25, 0.25, 0.25,  //
      0.001, 0.997, 0.001, 0.001,   //
      0.5, 0.3, 0.1, 0.1;
  const double with_pad = ce_summary_loss(probs, {1, Vocab::kPad, 3});
  EXPECT_NEAR(with_pad, -(std::log(0.25) + std::log(0.1)) / 2.0, 1e-12);
}

TEST(CeSummaryLossTest, ZeroProbabilityClampsInsteadOfInf) {
  Mat probs = Mat::Zero(1, 3);
  probs(0, 1) = 1.0;
  const double loss = ce_summary_loss(probs, {2});
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -std::log(1e-12), 1e-6);
}

TEST(TarForwardTest, UniformHeadGivesLogV) {
  TinyFixture f = make_tiny_fixture();
  f.params.at("head.topic.w1").setZero();
  f.params.at("head.topic.b1").setZero();
  f.params.at("head.topic.b2").setZero();
  const auto pairs = build_tar_pairs(f.data.train);
  ASSERT_FALSE(pairs.empty());
  const auto res = tar_forward(f.params, f.cfg, pairs.front(), f.vocab);
  ASSERT_TRUE(res.has_value());
  EXPECT_NEAR(res->loss, std::log(static_cast<double>(f.cfg.v)), 1e-9);
}

TEST(TarForwardTest, SentenceCountsAddUp) {
  const TinyFixture f = make_tiny_fixture();
  TarPair pair;
  pair.article_id = "a";
  pair.first = {"T0w1 f2 t0w3. T0w2 f1 t0w0.", 0};
  pair.second = {"T1w0 f3. T1w1 f0. T1w2 f1.", 1};
  const auto res = tar_forward(f.params, f.cfg, pair, f.vocab);
  ASSERT_TRUE(res.has_value());
  EXPECT_EQ(res->m1, 2);
  EXPECT_EQ(res->m2, 3);
  EXPECT_EQ(res->per_sentence.size(), 5u);
}

TEST(TarForwardTest, EmptySummarySideIsSkipped) {
  const TinyFixture f = make_tiny_fixture();
  TarPair pair;
  pair.article_id = "a";
  pair.first = {"   ", 0};
  pair.second = {"T1w0 f3.", 1};
  EXPECT_FALSE(tar_forward(f.params, f.cfg, pair, f.vocab).has_value());
}

TEST(TarForwardTest, OrderSwapEquivalentWithZeroPositions) {
  TinyFixture f = make_tiny_fixture();
  f.params.at("embed.pos_enc").setZero();
  TarPair pair;
  pair.article_id = "a";
  pair.first = {"T0w1 f2 t0w3. T0w2 f1 t0w0.", 0};
  pair.second = {"T1w0 f3. T1w1 f0.", 1};
  TarPair swapped;
  swapped.article_id = "a";
  swapped.first = pair.second;
  swapped.second = pair.first;
  const auto a = tar_forward(f.params, f.cfg, pair, f.vocab);
  const auto b = tar_forward(f.params, f.cfg, swapped, f.vocab);
  ASSERT_TRUE(a.has_value() && b.has_value());
  EXPECT_NEAR(a->loss, b->loss, 1e-5);
}

TEST(TarForwardTest, LabelPermutationEquivariance) {
  const TinyFixture f = make_tiny_fixture();
  const std::vector<int> perm = {2, 0, 3, 1};  // new id of old topic t

  TinyFixture g = make_tiny_fixture();
  const Mat w2 = f.params.at("head.topic.w2");
  const Mat b2 = f.params.at("head.topic.b2");
  for (int t = 0; t < f.cfg.v; ++t) {
    g.params.at("head.topic.w2").col(perm[t]) = w2.col(t);
    g.params.at("head.topic.b2")(0, perm[t]) = b2(0, t);
  }

  TarPair pair;
  pair.article_id = "a";
  pair.first = {"T0w1 f2 t0w3. T0w2 f1 t0w0.", 0};
  pair.second = {"T1w0 f3. T1w1 f0.", 1};
  TarPair relabeled = pair;
  relabeled.first.topic_id = perm[pair.first.topic_id];
  relabeled.second.topic_id = perm[pair.second.topic_id];

  const auto a = tar_forward(f.params, f.cfg, pair, f.vocab);
  const auto b = tar_forward(g.params, g.cfg, relabeled, f.vocab);
  ASSERT_TRUE(a.has_value() && b.has_value());
  EXPECT_NEAR(a->loss, b->loss, 1e-12);
}

TEST(GreedyGenerateTest, ImmediateEosGivesEmptySummary) {
  TinyFixture f = make_tiny_fixture();
  f.params.at("out.w").setZero();
  f.params.at("out.b").setZero();
  f.params.at("out.b")(0, Vocab::kEos) = 5.0;
  const Mat mem = Mat::Zero(4, f.cfg.d_model);
  EXPECT_TRUE(greedy_generate_from_memory(f.params, f.cfg, mem, 128).empty());
}

TEST(GreedyGenerateTest, RunawayModelIsCappedAtMaxOut) {
  TinyFixture f = make_tiny_fixture();
  f.params.at("out.w").setZero();
  f.params.at("out.b").setZero();
  f.params.at("out.b")(0, 9) = 5.0;  // a non-special token wins every step
  const Mat mem = Mat::Zero(4, f.cfg.d_model);
  const auto out = greedy_generate_from_memory(f.params, f.cfg, mem, 128);
  EXPECT_EQ(out.size(), static_cast<std::size_t>(f.cfg.max_out));
  for (const int id : out) EXPECT_EQ(id, 9);
}

TEST(GreedyGenerateTest, DeterministicAndTiesGoToLowestId) {
  TinyFixture f = make_tiny_fixture();
  const Example& ex = f.data.train.examples.front();
  const ModelInput input =
      build_model_input(f.data.topics.entry(ex.target_topic_id).words,
                        ex.article_text, f.vocab, f.cfg.limits());
  const auto a = greedy_generate(f.params, f.cfg, input);
  const auto b = greedy_generate(f.params, f.cfg, input);
  EXPECT_EQ(a, b);

  // all-equal logits: the lowest id (PAD) wins every step
  f.params.at("out.w").setZero();
  f.params.at("out.b").setZero();
  const Mat mem = Mat::Zero(3, f.cfg.d_model);
  const auto ties = greedy_generate_from_memory(f.params, f.cfg, mem, 4);
  ASSERT_FALSE(ties.empty());
  for (const int id : ties) EXPECT_EQ(id, Vocab::kPad);
}

TEST(CheckpointTest, SaveLoadRoundTripAtFloatPrecision) {
  tsumtest::ScratchDir scratch("ckpt");
  const TinyFixture f = make_tiny_fixture();
  f.params.save(scratch.str("m.ckpt"), {{"tsgn_enabled", true}});
  nlohmann::json flags;
  const Parameters loaded = Parameters::load(scratch.str("m.ckpt"), &flags);
  EXPECT_TRUE(flags.value("tsgn_enabled", false));
  loaded.validate_against(f.cfg);
  for (const auto& [name, m] : f.params.tensors()) {
    const Mat& l = loaded.at(name);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        EXPECT_EQ(static_cast<float>(m(r, c)), static_cast<float>(l(r, c)));
      }
    }
  }
}

TEST(CheckpointTest, CorruptedHeaderFails) {
  tsumtest::ScratchDir scratch("ckptbad");
  tsumtest::spit(scratch.str("bad.ckpt"), "\xff\xff\xff\x7fnot a checkpoint");
  EXPECT_THROW(Parameters::load(scratch.str("bad.ckpt")), CheckpointError);
}

TEST(CheckpointTest, ShapeMismatchDetected) {
  tsumtest::ScratchDir scratch("ckptshape");
  const TinyFixture f = make_tiny_fixture();
  f.params.save(scratch.str("m.ckpt"));
  ModelConfig other = f.cfg;
  other.d_model = 32;
  other.n_heads = 4;
  EXPECT_THROW(Parameters::load(scratch.str("m.ckpt")).validate_against(other),
               CheckpointError);
}

}  // namespace
