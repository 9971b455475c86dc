#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "topicsum/corpus.hpp"

using namespace topicsum;
using tsumtest::ScratchDir;
using tsumtest::slurp;
using tsumtest::spit;

namespace {

TopicVocabulary small_topics(int v = 5) {
  TopicVocabulary tv;
  for (int i = 0; i < v; ++i) {
    tv.entries.push_back(
        {i, "topic" + std::to_string(i), {"w" + std::to_string(i)}});
  }
  return tv;
}

std::string record(const std::string& id, const std::string& article, int topic,
                   const std::string& summary) {
  return nlohmann::json{{"article_id", id},
                        {"article", article},
                        {"topic_id", topic},
                        {"summary", summary}}
      .dump();
}

TEST(LoadDatasetTest, TwoValidLines) {
  ScratchDir scratch("load2");
  spit(scratch.str("d.jsonl"), record("a1", "Text one.", 0, "Sum one.") + "\n" +
                                   record("a1", "Text one.", 1, "Sum two.") + "\n");
  const DatasetSplit split = load_dataset(scratch.str("d.jsonl"), small_topics());
  ASSERT_EQ(split.examples.size(), 2u);
  EXPECT_EQ(split.examples[0].target_topic_id, 0);
  EXPECT_EQ(split.examples[1].gold_summary, "Sum two.");
}

TEST(LoadDatasetTest, EmptyFileGivesEmptySplit) {
  ScratchDir scratch("load0");
  spit(scratch.str("d.jsonl"), "");
  EXPECT_TRUE(load_dataset(scratch.str("d.jsonl"), small_topics()).examples.empty());
}

TEST(LoadDatasetTest, UnknownTopicNamesIdAndLine) {
  ScratchDir scratch("loadbad");
  spit(scratch.str("d.jsonl"), record("a1", "T.", 0, "S.") + "\n" +
                                   record("a2", "T.", 5, "S.") + "\n");
  try {
    load_dataset(scratch.str("d.jsonl"), small_topics(5));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown topic 5"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadDatasetTest, MalformedLineNamesLine) {
  ScratchDir scratch("loadmal");
  spit(scratch.str("d.jsonl"),
       record("a1", "T.", 0, "S.") + "\n{not json\n");
  try {
    load_dataset(scratch.str("d.jsonl"), small_topics());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadDatasetTest, RoundTripPreservesSplit) {
  ScratchDir scratch("roundtrip");
  const SyntheticData data = generate_synthetic({3, 6, 2, 4, 6, 5, 8}, 11);
  save_dataset(data.train, scratch.str("t.jsonl"));
  const DatasetSplit again = load_dataset(scratch.str("t.jsonl"), data.topics);
  ASSERT_EQ(again.examples.size(), data.train.examples.size());
  for (std::size_t i = 0; i < again.examples.size(); ++i) {
    EXPECT_EQ(again.examples[i].article_id, data.train.examples[i].article_id);
    EXPECT_EQ(again.examples[i].article_text, data.train.examples[i].article_text);
    EXPECT_EQ(again.examples[i].target_topic_id,
              data.train.examples[i].target_topic_id);
    EXPECT_EQ(again.examples[i].gold_summary, data.train.examples[i].gold_summary);
  }
}

TEST(TarPairsTest, TwoTopicsGiveOnePairOrdered) {
  DatasetSplit split;
  split.vocabulary = small_topics();
  split.examples.push_back({"a1", "Text.", 4, "On topic four."});
  split.examples.push_back({"a1", "Text.", 1, "On topic one."});
  const auto pairs = build_tar_pairs(split);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].first.topic_id, 1);
  EXPECT_EQ(pairs[0].second.topic_id, 4);
}

TEST(TarPairsTest, SingleSummaryGivesNoPair) {
  DatasetSplit split;
  split.vocabulary = small_topics();
  split.examples.push_back({"a1", "Text.", 0, "Only one."});
  EXPECT_TRUE(build_tar_pairs(split).empty());
}

TEST(TarPairsTest, ThreeTopicsGiveThreePairs) {
  DatasetSplit split;
  split.vocabulary = small_topics();
  for (const int t : {0, 1, 2}) {
    split.examples.push_back({"a1", "Text.", t, "Sum " + std::to_string(t) + "."});
  }
  const auto pairs = build_tar_pairs(split);

  // enumerate C(3, 2) by hand as the oracle
  std::set<std::pair<int, int>> expected;
  const std::vector<int> topics = {0, 1, 2};
  for (std::size_t i = 0; i < topics.size(); ++i) {
    for (std::size_t j = i + 1; j < topics.size(); ++j) {
      expected.insert({topics[i], topics[j]});
    }
  }
  ASSERT_EQ(pairs.size(), expected.size());
  for (const auto& p : pairs) {
    EXPECT_TRUE(expected.count({p.first.topic_id, p.second.topic_id}) > 0);
    EXPECT_NE(p.first.topic_id, p.second.topic_id);
  }
}

TEST(TarPairsTest, PairCountMatchesFormula) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    DatasetSplit split;
    split.vocabulary = small_topics(5);
    const int d = 1 + static_cast<int>(rng.below(5));
    std::vector<int> topics(5);
    std::iota(topics.begin(), topics.end(), 0);
    rng.shuffle(topics);
    for (int i = 0; i < d; ++i) {
      split.examples.push_back(
          {"art", "Text.", topics[i], "Sum " + std::to_string(topics[i]) + "."});
    }
    EXPECT_EQ(build_tar_pairs(split).size(),
              static_cast<std::size_t>(d * (d - 1) / 2));
  }
}

TEST(SyntheticTest, DeterministicAcrossRuns) {
  ScratchDir scratch("synthdet");
  const SyntheticConfig cfg{3, 10, 4, 6, 8, 5, 8};
  const SyntheticData a = generate_synthetic(cfg, 7);
  const SyntheticData b = generate_synthetic(cfg, 7);
  save_dataset(a.train, scratch.str("a.jsonl"));
  save_dataset(b.train, scratch.str("b.jsonl"));
  EXPECT_EQ(slurp(scratch.str("a.jsonl")), slurp(scratch.str("b.jsonl")));
  save_dataset(a.test, scratch.str("at.jsonl"));
  save_dataset(b.test, scratch.str("bt.jsonl"));
  EXPECT_EQ(slurp(scratch.str("at.jsonl")), slurp(scratch.str("bt.jsonl")));
}

TEST(SyntheticTest, OracleShapeMatchesConfig) {
  SyntheticConfig cfg;
  cfg.v = 3;
  cfg.articles = 10;
  cfg.test_articles = 0;
  cfg.sentences_per_article = 6;
  const SyntheticData data = generate_synthetic(cfg, 3);
  EXPECT_EQ(data.sentence_topic_oracle.size(), 10u);
  for (const auto& [id, topics] : data.sentence_topic_oracle) {
    EXPECT_EQ(topics.size(), 6u);
  }
}

TEST(SyntheticTest, GoldSummaryTokensSubsetOfArticleTokens) {
  const SyntheticData data = generate_synthetic({4, 12, 3, 5, 7, 6, 10}, 21);
  for (const auto& ex : data.train.examples) {
    std::set<std::string> article_tokens;
    for (const auto& t : tokenize(ex.article_text)) article_tokens.insert(t);
    for (const auto& t : tokenize(ex.gold_summary)) {
      EXPECT_TRUE(article_tokens.count(t) > 0)
          << "token " << t << " of summary missing from article";
    }
  }
}

TEST(SyntheticTest, OracleConsistentWithGoldSummaries) {
  const SyntheticData data = generate_synthetic({4, 15, 3, 5, 7, 6, 10}, 9);
  for (const auto& ex : data.train.examples) {
    const auto& topics = data.sentence_topic_oracle.at(ex.article_id);
    const auto sentences = split_sentences(ex.article_text);
    ASSERT_EQ(sentences.size(), topics.size());
    std::string expected_gold;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      if (topics[s] != ex.target_topic_id) continue;
      if (!expected_gold.empty()) expected_gold += " ";
      expected_gold += sentences[s];
    }
    EXPECT_EQ(ex.gold_summary, expected_gold);
  }
}

TEST(SyntheticTest, EveryArticleHasAtLeastTwoTopics) {
  const SyntheticData data = generate_synthetic({2, 30, 5, 2, 6, 5, 8}, 13);
  for (const auto& [id, topics] : data.sentence_topic_oracle) {
    EXPECT_GE(std::set<int>(topics.begin(), topics.end()).size(), 2u);
  }
}

TEST(SyntheticTest, RejectsDegenerateConfigs) {
  SyntheticConfig cfg;
  cfg.v = 1;
  EXPECT_THROW(generate_synthetic(cfg, 1), std::invalid_argument);
  cfg.v = 3;
  cfg.sentences_per_article = 1;
  EXPECT_THROW(generate_synthetic(cfg, 1), std::invalid_argument);
}

TEST(TopicVocabularyTest, FileRoundTripAndValidation) {
  ScratchDir scratch("topics");
  const TopicVocabulary tv = emotion_topic_vocabulary();
  EXPECT_EQ(tv.v(), 7);
  save_topic_vocabulary(tv, scratch.str("topics.json"));
  const TopicVocabulary again = load_topic_vocabulary(scratch.str("topics.json"));
  ASSERT_EQ(again.v(), 7);
  EXPECT_EQ(again.entries[4].name, "fear");
  EXPECT_EQ(again.entries[4].words, tv.entries[4].words);
  EXPECT_THROW(tv.entry(7), DataError);
}

TEST(OracleIoTest, RoundTrip) {
  ScratchDir scratch("oracle");
  const std::map<std::string, std::vector<int>> oracle = {
      {"a1", {0, 1, 2}}, {"a2", {2, 2}}};
  save_oracle(oracle, scratch.str("oracle.json"));
  EXPECT_EQ(load_oracle(scratch.str("oracle.json")), oracle);
}

}  // namespace
