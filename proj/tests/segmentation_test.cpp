#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topicsum/segmentation.hpp"

using namespace topicsum;

namespace {

TEST(SplitSentencesTest, SplitsOnTerminatorBeforeUppercase) {
  EXPECT_EQ(split_sentences("A b. C d!"),
            (std::vector<std::string>{"A b.", "C d!"}));
}

TEST(SplitSentencesTest, AbbreviationsDoNotSplit) {
  EXPECT_EQ(split_sentences("Dr. Li won. He smiled."),
            (std::vector<std::string>{"Dr. Li won.", "He smiled."}));
  EXPECT_EQ(split_sentences("The U.S. Senate met. It voted."),
            (std::vector<std::string>{"The U.S. Senate met.", "It voted."}));
  EXPECT_EQ(split_sentences("See etc. Not here. Mrs. Lee left."),
            (std::vector<std::string>{"See etc. Not here.", "Mrs. Lee left."}));
}

TEST(SplitSentencesTest, NoTerminatorIsOneSentence) {
  EXPECT_EQ(split_sentences("no terminator"),
            (std::vector<std::string>{"no terminator"}));
}

TEST(SplitSentencesTest, EmptyAndWhitespaceGiveNothing) {
  EXPECT_TRUE(split_sentences("").empty());
  EXPECT_TRUE(split_sentences("  \t \n ").empty());
}

TEST(SplitSentencesTest, LowercaseAfterTerminatorDoesNotSplit) {
  EXPECT_EQ(split_sentences("He won. and left."),
            (std::vector<std::string>{"He won. and left."}));
}

TEST(SplitSentencesTest, QuestionAndMultipleTerminators) {
  EXPECT_EQ(split_sentences("Really?! Yes."),
            (std::vector<std::string>{"Really?!", "Yes."}));
}

TEST(SplitSentencesTest, ConcatenationReproducesInputModuloWhitespace) {
  const std::vector<std::string> inputs = {
      "A b. C d!  E f?",
      "Dr. Li won. He smiled.",
      "One.   Two.  Three ends without terminator",
      "Tail whitespace. Next one here.   ",
  };
  for (const auto& text : inputs) {
    const auto sentences = split_sentences(text);
    std::string joined;
    for (const auto& s : sentences) {
      if (!joined.empty()) joined += " ";
      joined += s;
    }
    std::istringstream a(text), b(joined);
    std::string wa, wb;
    while (a >> wa) {
      ASSERT_TRUE(static_cast<bool>(b >> wb)) << text;
      EXPECT_EQ(wa, wb);
    }
    EXPECT_FALSE(static_cast<bool>(b >> wb));
  }
}

TEST(TokenizeTest, LowercasesAndSeparatesPunctuation) {
  EXPECT_EQ(tokenize("A b. C-d!"),
            (std::vector<std::string>{"a", "b", ".", "c", "-", "d", "!"}));
  EXPECT_TRUE(tokenize("").empty());
}

TEST(BuildVocabTest, ReservedIdsThenFrequencyOrder) {
  const Vocab v = build_vocab({"a a b"}, 1);
  EXPECT_EQ(v.id_of("a"), 7);
  EXPECT_EQ(v.id_of("b"), 8);
  EXPECT_EQ(v.size(), 9);
  EXPECT_EQ(v.id_of(":"), Vocab::kColon);
}

TEST(BuildVocabTest, BelowMinCountMapsToUnk) {
  const Vocab v = build_vocab({"a a b"}, 2);
  EXPECT_EQ(v.id_of("a"), 7);
  EXPECT_EQ(v.id_of("b"), Vocab::kUnk);
}

TEST(BuildVocabTest, Deterministic) {
  const std::vector<std::string> corpus = {"x y z z", "w x y"};
  const Vocab a = build_vocab(corpus, 1);
  const Vocab b = build_vocab(corpus, 1);
  EXPECT_EQ(a.id_to_token, b.id_to_token);
}

TEST(BuildVocabTest, JsonRoundTrip) {
  tsumtest::ScratchDir scratch("vocab");
  const Vocab v = build_vocab({"alpha beta beta gamma"}, 1);
  save_vocab(v, scratch.str("vocab.json"));
  const Vocab r = load_vocab(scratch.str("vocab.json"));
  EXPECT_EQ(v.id_to_token, r.id_to_token);
}

TEST(DetokenizeTest, RoundTripModuloCaseWhitespaceUnk) {
  const Vocab v = build_vocab({"the cat sat . on the mat ."}, 1);
  const std::string text = "The cat  sat. On the UNSEEN mat.";
  const std::string round = v.detokenize(v.encode(text));
  EXPECT_EQ(round, "the cat sat . on the <unk> mat .");
}

TEST(BuildModelInputTest, PromptLayoutAndSpans) {
  const Vocab v = build_vocab({"economy market", "A b. C d."}, 1);
  const ModelInput mi =
      build_model_input({"economy", "market"}, "A b. C d.", v, {1024, 60});
  const std::vector<int> expected = {Vocab::kCls, v.id_of("economy"),
                                     v.id_of("market"), Vocab::kColon,
                                     v.id_of("a"),       v.id_of("b"),
                                     v.id_of("."),       v.id_of("c"),
                                     v.id_of("d"),       v.id_of("."),
                                     Vocab::kSep};
  EXPECT_EQ(mi.token_ids, expected);
  ASSERT_EQ(mi.sentence_spans.size(), 2u);
  EXPECT_EQ(mi.sentence_spans[0], (SentenceSpan{4, 7}));
  EXPECT_EQ(mi.sentence_spans[1], (SentenceSpan{7, 10}));
  EXPECT_EQ(mi.prompt_span, (SentenceSpan{1, 3}));
}

TEST(BuildModelInputTest, SentenceCapKeepsSixty) {
  std::string article;
  for (int i = 0; i < 70; ++i) article += "Alpha beta. ";
  const Vocab v = build_vocab({article}, 1);
  const ModelInput mi = build_model_input({"alpha"}, article, v, {1024, 60});
  EXPECT_EQ(mi.sentence_spans.size(), 60u);
}

TEST(BuildModelInputTest, TokenCapTruncatesToMaxLenWithSep) {
  std::string sentence = "Start";
  for (int w = 0; w < 29; ++w) sentence += " word" + std::to_string(w);
  sentence += ".";
  std::string article = sentence;
  for (int i = 1; i < 60; ++i) article += " " + sentence;
  const Vocab v = build_vocab({article}, 1);
  const ModelInput mi = build_model_input({"word0"}, article, v, {1024, 60});
  EXPECT_EQ(mi.token_ids.size(), 1024u);
  EXPECT_EQ(mi.token_ids.back(), Vocab::kSep);
  // the final kept sentence holds a partial span
  EXPECT_EQ(mi.sentence_spans.back().end, 1023);
}

TEST(BuildModelInputTest, MonotoneTruncation) {
  std::string article;
  for (int i = 0; i < 30; ++i) article += "Alpha beta gamma delta. ";
  const Vocab v = build_vocab({article}, 1);
  std::vector<int> prev;
  for (const int max_len : {16, 24, 48, 96, 1024}) {
    const ModelInput mi = build_model_input({"alpha"}, article, v, {max_len, 60});
    // everything the smaller budget kept is still there, in the same order
    ASSERT_GE(mi.token_ids.size(), prev.size());
    for (std::size_t i = 0; i + 1 < prev.size(); ++i) {
      EXPECT_EQ(mi.token_ids[i], prev[i]);
    }
    prev = mi.token_ids;
  }
}

TEST(BuildModelInputTest, SpanCoverPartitionsBody) {
  tsumtest::TinyFixture f = tsumtest::make_tiny_fixture();
  for (const auto& ex : f.data.train.examples) {
    const ModelInput mi =
        build_model_input(f.data.topics.entry(ex.target_topic_id).words,
                          ex.article_text, f.vocab, f.cfg.limits());
    const int body_start = mi.prompt_span.end + 1;  // prompt, then the colon
    const int body_end = static_cast<int>(mi.token_ids.size()) - 1;
    int at = body_start;
    for (const auto& s : mi.sentence_spans) {
      EXPECT_EQ(s.start, at);
      EXPECT_LT(s.start, s.end);
      at = s.end;
    }
    EXPECT_EQ(at, body_end);
  }
}

TEST(BuildModelInputTest, EmptyArticleFails) {
  const Vocab v = build_vocab({"word"}, 1);
  EXPECT_THROW(
      {
        try {
          build_model_input({"word"}, "   ", v, {1024, 60});
        } catch (const std::runtime_error& e) {
          EXPECT_STREQ(e.what(), "empty article");
          throw;
        }
      },
      std::runtime_error);
}

}  // namespace
