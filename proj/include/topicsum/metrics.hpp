#ifndef TOPICSUM_METRICS_HPP
#define TOPICSUM_METRICS_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topicsum/graph.hpp"

namespace topicsum {

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline std::unordered_map<std::string, long> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

inline double f1_of(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace detail

/// Clipped n-gram multiset overlap. Empty n-gram sets on either side give
/// all-zero scores.
inline RougeScore rouge_n(const std::vector<std::string>& candidate,
                          const std::vector<std::string>& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  const auto cand = detail::ngram_counts(candidate, n);
  const auto ref = detail::ngram_counts(reference, n);
  long cand_total = 0, ref_total = 0, matched = 0;
  for (const auto& [g, c] : cand) cand_total += c;
  for (const auto& [g, c] : ref) ref_total += c;
  if (cand_total == 0 || ref_total == 0) return {};
  for (const auto& [g, c] : cand) {
    const auto it = ref.find(g);
    if (it != ref.end()) matched += std::min(c, it->second);
  }
  RougeScore s;
  s.precision = static_cast<double>(matched) / static_cast<double>(cand_total);
  s.recall = static_cast<double>(matched) / static_cast<double>(ref_total);
  s.f1 = detail::f1_of(s.precision, s.recall);
  return s;
}

/// Longest-common-subsequence variant: recall against the reference length,
/// precision against the candidate length.
inline RougeScore rouge_l(const std::vector<std::string>& candidate,
                          const std::vector<std::string>& reference) {
  const std::size_t nc = candidate.size();
  const std::size_t nr = reference.size();
  if (nc == 0 || nr == 0) return {};
  std::vector<long> prev(nr + 1, 0), cur(nr + 1, 0);
  for (std::size_t i = 1; i <= nc; ++i) {
    for (std::size_t j = 1; j <= nr; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[nr]);
  RougeScore s;
  s.precision = lcs / static_cast<double>(nc);
  s.recall = lcs / static_cast<double>(nr);
  s.f1 = detail::f1_of(s.precision, s.recall);
  return s;
}

// ---------------------------------------------------------------------------
// Topic focus proxy
// ---------------------------------------------------------------------------

/// Fixed 50-word stop list used by the topic focus proxy.
inline const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> words(stop_word_list().begin(),
                                                     stop_word_list().end());
  return words;
}

/// Bag-of-words lexical focus score: the fraction of content tokens that
/// appear in the topic's word list (lowercased). Content tokens are word
/// tokens outside the fixed stop list; punctuation-only tokens do not count
/// as content. This is a proxy measure; it is not comparable to model-based
/// topic scores.
inline double topic_focus_proxy(const std::vector<std::string>& candidate,
                                const TopicEntry& topic) {
  std::unordered_set<std::string> topic_words;
  for (const auto& w : topic.words) {
    std::string lw = w;
    std::transform(lw.begin(), lw.end(), lw.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    topic_words.insert(lw);
  }
  const auto is_word = [](const std::string& tok) {
    return std::any_of(tok.begin(), tok.end(), [](unsigned char c) {
      return std::isalnum(c) != 0;
    });
  };
  long content = 0, hits = 0;
  for (const auto& tok : candidate) {
    if (!is_word(tok) || stop_words().count(tok) > 0) continue;
    ++content;
    if (topic_words.count(tok) > 0) ++hits;
  }
  return content == 0 ? 0.0
                      : static_cast<double>(hits) / static_cast<double>(content);
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation
// ---------------------------------------------------------------------------

struct TopicMetrics {
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  double topic_focus = 0.0;
  long n_examples = 0;
};

struct MetricsReport {
  TopicMetrics overall;
  std::map<int, TopicMetrics> per_topic;
  std::optional<double> tar_accuracy;
};

using GenerateFn =
    std::function<std::vector<std::string>(const Example&, const TopicEntry&)>;

namespace detail {

struct MetricsAccumulator {
  double r1 = 0, r2 = 0, rl = 0, focus = 0;
  long n = 0;

  void add(double a, double b, double c, double d) {
    r1 += a;
    r2 += b;
    rl += c;
    focus += d;
    ++n;
  }

  TopicMetrics mean() const {
    TopicMetrics m;
    m.n_examples = n;
    if (n == 0) return m;
    m.rouge1_f = r1 / n;
    m.rouge2_f = r2 / n;
    m.rougeL_f = rl / n;
    m.topic_focus = focus / n;
    return m;
  }
};

}  // namespace detail

/// Macro-averaged metrics with an injectable candidate generator; the
/// standard path wires greedy decoding in. Example order is fixed, so
/// aggregation is deterministic.
inline MetricsReport evaluate_with(const GenerateFn& generate,
                                   const DatasetSplit& split) {
  detail::MetricsAccumulator overall;
  std::map<int, detail::MetricsAccumulator> per_topic;
  for (const auto& ex : split.examples) {
    const TopicEntry& topic = split.vocabulary.entry(ex.target_topic_id);
    const std::vector<std::string> cand = generate(ex, topic);
    const std::vector<std::string> ref = tokenize(ex.gold_summary);
    const double r1 = rouge_n(cand, ref, 1).f1;
    const double r2 = rouge_n(cand, ref, 2).f1;
    const double rl = rouge_l(cand, ref).f1;
    const double focus = topic_focus_proxy(cand, topic);
    overall.add(r1, r2, rl, focus);
    per_topic[ex.target_topic_id].add(r1, r2, rl, focus);
  }
  MetricsReport report;
  report.overall = overall.mean();
  for (const auto& [t, acc] : per_topic) report.per_topic[t] = acc.mean();
  return report;
}

/// Per-sentence topic classification accuracy on unique articles, measured
/// against a sentence-topic oracle. Articles are encoded without a prompt
/// ([CLS] article [SEP]) so no label can leak into the prediction.
inline std::optional<double> tar_accuracy_against_oracle(
    const Parameters& params, const ModelConfig& cfg, const DatasetSplit& split,
    const Vocab& vocab, const std::map<std::string, std::vector<int>>& oracle) {
  long total = 0, correct = 0;
  std::set<std::string> seen;
  for (const auto& ex : split.examples) {
    if (!seen.insert(ex.article_id).second) continue;
    const auto it = oracle.find(ex.article_id);
    if (it == oracle.end()) continue;
    const auto& gold_topics = it->second;

    std::vector<int> ids = {Vocab::kCls};
    std::vector<SentenceSpan> spans;
    const int budget = cfg.max_in - 2;
    int used = 0;
    for (const auto& sent : split_sentences(ex.article_text)) {
      if (used >= budget) break;
      std::vector<int> toks = vocab.encode(sent);
      if (toks.empty()) continue;
      const int take = std::min<int>(static_cast<int>(toks.size()), budget - used);
      const int start = static_cast<int>(ids.size());
      ids.insert(ids.end(), toks.begin(), toks.begin() + take);
      spans.push_back({start, start + take});
      used += take;
    }
    ids.push_back(Vocab::kSep);
    if (spans.empty()) continue;

    const Mat reps = encode_ids(params, cfg, ids);
    const Mat pooled = mean_pool(reps, spans);
    const auto dists = topic_head(params, cfg, pooled);

    total += static_cast<long>(gold_topics.size());
    const std::size_t upto = std::min(dists.size(), gold_topics.size());
    for (std::size_t s = 0; s < upto; ++s) {
      int best = 0;
      for (int c = 1; c < static_cast<int>(dists[s].size()); ++c) {
        if (dists[s](c) > dists[s](best)) best = c;
      }
      if (best == gold_topics[s]) ++correct;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Full evaluation: greedy generation per example, macro-averaged ROUGE and
/// topic focus overall and per topic, plus sentence-topic accuracy when an
/// oracle is supplied.
inline MetricsReport evaluate(
    const Parameters& params, const ModelConfig& cfg, const DatasetSplit& split,
    const Vocab& vocab,
    const std::map<std::string, std::vector<int>>* oracle = nullptr,
    bool use_tsgn = true) {
  const GenerateFn gen = [&](const Example& ex, const TopicEntry& topic) {
    const ModelInput input = build_model_input(topic.words, ex.article_text, vocab,
                                               cfg.limits(), ex.target_topic_id);
    return vocab.decode_tokens(greedy_generate(params, cfg, input, use_tsgn));
  };
  MetricsReport report = evaluate_with(gen, split);
  if (oracle != nullptr) {
    report.tar_accuracy =
        tar_accuracy_against_oracle(params, cfg, split, vocab, *oracle);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_report_to_json(const MetricsReport& r,
                                             bool include_per_topic) {
  const auto block = [](const TopicMetrics& m) {
    return nlohmann::json{{"rouge1_f", m.rouge1_f},
                          {"rouge2_f", m.rouge2_f},
                          {"rougeL_f", m.rougeL_f},
                          {"topic_focus", m.topic_focus},
                          {"n_examples", m.n_examples}};
  };
  nlohmann::json j;
  j["overall"] = block(r.overall);
  j["topic_focus_note"] =
      "lexical proxy: fraction of non-stop-word generated tokens found in the "
      "topic word list; not comparable to model-based topic focus scores";
  if (r.tar_accuracy) j["tar_accuracy"] = *r.tar_accuracy;
  if (include_per_topic) {
    nlohmann::json pt = nlohmann::json::object();
    for (const auto& [t, m] : r.per_topic) pt[std::to_string(t)] = block(m);
    j["per_topic"] = pt;
  }
  return j;
}

/// Aligned plain-text table in R-1 / R-2 / R-L / Topic Focus column order.
inline std::string metrics_report_to_table(const MetricsReport& r,
                                           bool include_per_topic) {
  std::ostringstream os;
  const auto row = [&os](const std::string& label, const TopicMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-10s %8.4f %8.4f %8.4f %12.4f\n",
                  label.c_str(), m.rouge1_f, m.rouge2_f, m.rougeL_f,
                  m.topic_focus);
    os << buf;
  };
  os << "method          R-1      R-2      R-L  Topic Focus\n";
  row("overall", r.overall);
  if (include_per_topic) {
    for (const auto& [t, m] : r.per_topic) row("topic " + std::to_string(t), m);
  }
  if (r.tar_accuracy) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "tar_accuracy %.4f\n", *r.tar_accuracy);
    os << buf;
  }
  os << "(topic focus is a lexical proxy)\n";
  return os.str();
}

}  // namespace topicsum

#endif  // TOPICSUM_METRICS_HPP
