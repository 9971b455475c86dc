#ifndef TOPICSUM_CORPUS_HPP
#define TOPICSUM_CORPUS_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicsum/rng.hpp"
#include "topicsum/segmentation.hpp"

namespace topicsum {

/// Raised for malformed or inconsistent dataset files.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct TopicEntry {
  int topic_id = -1;
  std::string name;
  std::vector<std::string> words;  // prompt words, lowercase
};

struct TopicVocabulary {
  std::vector<TopicEntry> entries;

  int v() const { return static_cast<int>(entries.size()); }

  const TopicEntry& entry(int topic_id) const {
    if (topic_id < 0 || topic_id >= v()) {
      throw DataError("unknown topic " + std::to_string(topic_id));
    }
    return entries[topic_id];
  }

  void validate() const {
    if (v() < 2) throw DataError("topic vocabulary needs at least 2 topics");
    for (int i = 0; i < v(); ++i) {
      if (entries[i].topic_id != i) {
        throw DataError("topic ids must be exactly 0.." + std::to_string(v() - 1));
      }
      if (entries[i].words.empty()) {
        throw DataError("topic " + std::to_string(i) + " has no words");
      }
    }
  }
};

struct SummaryRecord {
  std::string text;
  int topic_id = -1;
};

struct Example {
  std::string article_id;
  std::string article_text;
  int target_topic_id = -1;
  std::string gold_summary;
};

/// Two same-article summaries with different topics.
struct TarPair {
  std::string article_id;
  SummaryRecord first;
  SummaryRecord second;
};

struct DatasetSplit {
  std::vector<Example> examples;
  TopicVocabulary vocabulary;
};

// ---------------------------------------------------------------------------
// Topic vocabulary files: {"topics": [{"id", "name", "words"}]}
// ---------------------------------------------------------------------------

inline void save_topic_vocabulary(const TopicVocabulary& tv, const std::string& path) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& e : tv.entries) {
    topics.push_back({{"id", e.topic_id}, {"name", e.name}, {"words", e.words}});
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write topic vocabulary: " + path);
  os << nlohmann::json{{"topics", topics}}.dump(2) << "\n";
}

inline TopicVocabulary load_topic_vocabulary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read topic vocabulary: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed topic vocabulary " + path + ": " + e.what());
  }
  TopicVocabulary tv;
  for (const auto& t : j.at("topics")) {
    TopicEntry e;
    e.topic_id = t.at("id").get<int>();
    e.name = t.at("name").get<std::string>();
    e.words = t.at("words").get<std::vector<std::string>>();
    tv.entries.push_back(std::move(e));
  }
  std::sort(tv.entries.begin(), tv.entries.end(),
            [](const TopicEntry& a, const TopicEntry& b) {
              return a.topic_id < b.topic_id;
            });
  tv.validate();
  return tv;
}

/// Seven-emotion vocabulary so emotion-conditioned corpora run through the
/// same code path as topic-conditioned ones.
inline TopicVocabulary emotion_topic_vocabulary() {
  TopicVocabulary tv;
  const std::vector<std::pair<std::string, std::vector<std::string>>> defs = {
      {"anger", {"angry", "furious", "outraged", "mad", "rage", "annoyed"}},
      {"anticipation", {"expect", "await", "upcoming", "soon", "eager", "hope"}},
      {"joy", {"happy", "glad", "delighted", "joyful", "celebrate", "relief"}},
      {"trust", {"trust", "reliable", "confidence", "faith", "assure", "depend"}},
      {"fear", {"afraid", "scared", "fear", "worried", "anxious", "panic"}},
      {"sadness", {"sad", "grief", "mourn", "loss", "sorrow", "cry"}},
      {"disgust", {"disgust", "gross", "revolting", "awful", "repulsed", "sickening"}},
  };
  int id = 0;
  for (const auto& [name, words] : defs) {
    tv.entries.push_back({id++, name, words});
  }
  return tv;
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------
// Record schema: {"article_id": str, "article": str, "topic_id": int,
//                 "summary": str}, one record per line.

inline DatasetSplit load_dataset(const std::string& path,
                                 const TopicVocabulary& vocabulary) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read dataset: " + path);
  DatasetSplit split;
  split.vocabulary = vocabulary;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Example ex;
      ex.article_id = j.at("article_id").get<std::string>();
      ex.article_text = j.at("article").get<std::string>();
      ex.target_topic_id = j.at("topic_id").get<int>();
      ex.gold_summary = j.at("summary").get<std::string>();
      if (ex.target_topic_id < 0 || ex.target_topic_id >= vocabulary.v()) {
        throw DataError("unknown topic " + std::to_string(ex.target_topic_id) +
                        " at line " + std::to_string(line_no));
      }
      if (ex.article_text.empty() || ex.gold_summary.empty()) {
        throw DataError("empty article or summary at line " +
                        std::to_string(line_no));
      }
      split.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed record at line " + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  return split;
}

inline void save_dataset(const DatasetSplit& split, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset: " + path);
  for (const auto& ex : split.examples) {
    os << nlohmann::json{{"article_id", ex.article_id},
                         {"article", ex.article_text},
                         {"topic_id", ex.target_topic_id},
                         {"summary", ex.gold_summary}}
              .dump()
       << "\n";
  }
}

// ---------------------------------------------------------------------------
// TAR pair construction
// ---------------------------------------------------------------------------

/// All unordered distinct-topic summary pairs per article, each once.
/// Pair members are ordered by (topic_id, text); articles appear in first-seen
/// order so the result is deterministic.
inline std::vector<TarPair> build_tar_pairs(const DatasetSplit& split) {
  std::vector<std::string> article_order;
  std::map<std::string, std::vector<SummaryRecord>> by_article;
  for (const auto& ex : split.examples) {
    auto& records = by_article[ex.article_id];
    if (records.empty()) article_order.push_back(ex.article_id);
    const SummaryRecord rec{ex.gold_summary, ex.target_topic_id};
    const bool dup = std::any_of(records.begin(), records.end(),
                                 [&](const SummaryRecord& r) {
                                   return r.topic_id == rec.topic_id &&
                                          r.text == rec.text;
                                 });
    if (!dup) records.push_back(rec);
  }

  std::vector<TarPair> pairs;
  for (const auto& id : article_order) {
    auto records = by_article[id];
    std::sort(records.begin(), records.end(),
              [](const SummaryRecord& a, const SummaryRecord& b) {
                if (a.topic_id != b.topic_id) return a.topic_id < b.topic_id;
                return a.text < b.text;
              });
    for (std::size_t i = 0; i < records.size(); ++i) {
      for (std::size_t j = i + 1; j < records.size(); ++j) {
        if (records[i].topic_id == records[j].topic_id) continue;
        pairs.push_back({id, records[i], records[j]});
      }
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int v = 4;
  int articles = 500;       // training articles
  int test_articles = 100;  // held-out articles
  int sentences_per_article = 6;
  int words_per_sentence = 8;
  int topic_word_pool_size = 18;  // generation vocabulary per topic
  int prompt_words_per_topic = 6; // listed in TopicEntry.words, like an
                                  // LDA top-word list covering part of the
                                  // topic's vocabulary
  int filler_pool_size = 12;
};

struct SyntheticData {
  DatasetSplit train;
  DatasetSplit test;
  // true topic of every sentence, per article, in article order
  std::map<std::string, std::vector<int>> sentence_topic_oracle;
  TopicVocabulary topics;
};

namespace detail {

inline std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

}  // namespace detail

/// Topic-templated corpus with per-sentence topic ground truth. Every article
/// interleaves sentences from at least two topics; the gold summary for
/// (article, t) is the in-order concatenation of the article's topic-t
/// sentences, so summary tokens are a subset of article tokens by
/// construction. Deterministic given the seed.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg,
                                        std::uint64_t seed) {
  if (cfg.v < 2) throw std::invalid_argument("v must be >= 2");
  if (cfg.sentences_per_article < 2) {
    throw std::invalid_argument("sentences_per_article must be >= 2");
  }
  if (cfg.words_per_sentence < 2 || cfg.topic_word_pool_size < 1 ||
      cfg.prompt_words_per_topic < 1 || cfg.articles < 1 ||
      cfg.test_articles < 0) {
    throw std::invalid_argument("invalid synthetic corpus config");
  }

  SyntheticData data;
  const int n_prompt =
      std::min(cfg.prompt_words_per_topic, cfg.topic_word_pool_size);
  std::vector<std::vector<std::string>> pools(cfg.v);
  for (int t = 0; t < cfg.v; ++t) {
    TopicEntry e;
    e.topic_id = t;
    e.name = "topic" + std::to_string(t);
    for (int w = 0; w < cfg.topic_word_pool_size; ++w) {
      pools[t].push_back("t" + std::to_string(t) + "w" + std::to_string(w));
    }
    // the prompt lists a representative subset of the topic vocabulary
    e.words.assign(pools[t].begin(), pools[t].begin() + n_prompt);
    data.topics.entries.push_back(std::move(e));
  }
  // fillers are common function words, so a focus metric that strips stop
  // words sees only the topical content of a sentence
  std::vector<std::string> fillers;
  for (int w = 0; w < cfg.filler_pool_size; ++w) {
    fillers.push_back(stop_word_list()[w % stop_word_list().size()]);
  }

  Rng rng(seed);
  const int n_filler = std::max(1, cfg.words_per_sentence / 3);
  const int n_topic = cfg.words_per_sentence - n_filler;

  const auto make_article = [&](const std::string& article_id,
                                DatasetSplit& split) {
    std::vector<int> topic_of;
    for (int s = 0; s < cfg.sentences_per_article; ++s) {
      topic_of.push_back(static_cast<int>(rng.below(cfg.v)));
    }
    const bool all_same = std::all_of(topic_of.begin(), topic_of.end(),
                                      [&](int t) { return t == topic_of[0]; });
    if (all_same) {
      topic_of.back() = (topic_of[0] + 1 + static_cast<int>(rng.below(cfg.v - 1))) % cfg.v;
    }

    // A sentence is a run of consecutive words from its topic's cyclic word
    // list, starting anywhere, with filler function words spliced in. Local
    // word order is therefore predictable within a topic while the run start
    // varies per sentence.
    std::vector<std::string> sentences;
    for (const int t : topic_of) {
      std::vector<std::string> words;
      const std::size_t start = rng.below(pools[t].size());
      for (int w = 0; w < n_topic; ++w) {
        words.push_back(pools[t][(start + w) % pools[t].size()]);
      }
      for (int w = 0; w < n_filler; ++w) {
        const std::size_t at = rng.below(words.size() + 1);
        words.insert(words.begin() + at, fillers[rng.below(fillers.size())]);
      }
      std::string sent = detail::capitalize(words[0]);
      for (std::size_t w = 1; w < words.size(); ++w) sent += " " + words[w];
      sent += ".";
      sentences.push_back(std::move(sent));
    }

    std::string article_text = sentences[0];
    for (std::size_t s = 1; s < sentences.size(); ++s) {
      article_text += " " + sentences[s];
    }
    data.sentence_topic_oracle[article_id] = topic_of;

    std::set<int> present(topic_of.begin(), topic_of.end());
    for (const int t : present) {
      std::string gold;
      for (int s = 0; s < cfg.sentences_per_article; ++s) {
        if (topic_of[s] != t) continue;
        if (!gold.empty()) gold += " ";
        gold += sentences[s];
      }
      split.examples.push_back({article_id, article_text, t, gold});
    }
  };

  data.train.vocabulary = data.topics;
  data.test.vocabulary = data.topics;
  for (int a = 0; a < cfg.articles; ++a) {
    char id[32];
    std::snprintf(id, sizeof(id), "train-%04d", a);
    make_article(id, data.train);
  }
  for (int a = 0; a < cfg.test_articles; ++a) {
    char id[32];
    std::snprintf(id, sizeof(id), "test-%04d", a);
    make_article(id, data.test);
  }
  return data;
}

inline void save_oracle(const std::map<std::string, std::vector<int>>& oracle,
                        const std::string& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, topics] : oracle) j[id] = topics;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write oracle: " + path);
  os << j.dump(2) << "\n";
}

inline std::map<std::string, std::vector<int>> load_oracle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read oracle: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed oracle " + path + ": " + e.what());
  }
  std::map<std::string, std::vector<int>> oracle;
  for (auto it = j.begin(); it != j.end(); ++it) {
    oracle[it.key()] = it.value().get<std::vector<int>>();
  }
  return oracle;
}

}  // namespace topicsum

#endif  // TOPICSUM_CORPUS_HPP
