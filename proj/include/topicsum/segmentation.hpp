#ifndef TOPICSUM_SEGMENTATION_HPP
#define TOPICSUM_SEGMENTATION_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace topicsum {

// ---------------------------------------------------------------------------
// Sentence splitting
// ---------------------------------------------------------------------------

namespace detail {

inline const std::array<std::string, 7>& abbreviation_stoplist() {
  static const std::array<std::string, 7> list = {
      "Mr.", "Mrs.", "Dr.", "U.S.", "e.g.", "i.e.", "etc."};
  return list;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

/// Rule-based sentence splitter: boundaries at '.', '!' or '?' followed by
/// whitespace and an uppercase letter, except after stop-list abbreviations.
/// Empty or all-whitespace input yields an empty list.
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t k = i + 1;
      bool saw_ws = false;
      while (k < n && std::isspace(static_cast<unsigned char>(text[k]))) {
        ++k;
        saw_ws = true;
      }
      if (saw_ws && k < n && std::isupper(static_cast<unsigned char>(text[k]))) {
        bool suppressed = false;
        if (c == '.') {
          // the whitespace-delimited token ending at this period
          std::size_t b = i;
          while (b > start &&
                 !std::isspace(static_cast<unsigned char>(text[b - 1]))) {
            --b;
          }
          const std::string word = text.substr(b, i - b + 1);
          for (const auto& abbr : detail::abbreviation_stoplist()) {
            if (word == abbr) {
              suppressed = true;
              break;
            }
          }
        }
        if (!suppressed) {
          const std::string sent = detail::trim(text.substr(start, i + 1 - start));
          if (!sent.empty()) out.push_back(sent);
          start = k;
          i = k;
          continue;
        }
      }
    }
    ++i;
  }
  const std::string tail = detail::trim(text.substr(start));
  if (!tail.empty()) out.push_back(tail);
  return out;
}

// ---------------------------------------------------------------------------
// Tokenization and vocabulary
// ---------------------------------------------------------------------------

/// Fixed 50-word stop list shared by the focus metric (which removes these
/// tokens) and the synthetic corpus generator (which uses them as filler
/// function words).
inline const std::vector<std::string>& stop_word_list() {
  static const std::vector<std::string> words = {
      "the",     "a",       "an",     "and",     "or",     "but",    "if",
      "then",    "of",      "at",     "by",      "for",    "with",   "about",
      "against", "between", "into",   "through", "during", "before", "after",
      "above",   "below",   "to",     "from",    "up",     "down",   "in",
      "out",     "on",      "off",    "over",    "under",  "again",  "further",
      "once",    "is",      "are",    "was",     "were",   "be",     "been",
      "being",   "have",    "has",    "had",     "do",     "does",   "did",
      "not"};
  return words;
}

/// Lowercased word/punctuation tokenizer: alnum runs become word tokens,
/// every other non-space character is its own token.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> toks;
  std::string cur;
  for (const char raw : text) {
    const unsigned char u = static_cast<unsigned char>(raw);
    const char c = static_cast<char>(std::tolower(u));
    if (std::isalnum(u)) {
      cur.push_back(c);
    } else {
      if (!cur.empty()) {
        toks.push_back(cur);
        cur.clear();
      }
      if (!std::isspace(u)) toks.push_back(std::string(1, c));
    }
  }
  if (!cur.empty()) toks.push_back(cur);
  return toks;
}

/**
 * Token vocabulary with seven reserved ids. The ':' surface form is pinned
 * to the reserved COLON id so the prompt separator and the literal character
 * share one id.
 */
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kBos = 3;
  static constexpr int kEos = 4;
  static constexpr int kUnk = 5;
  static constexpr int kColon = 6;
  static constexpr int kReserved = 7;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int id_of(const std::string& tok) const {
    if (tok == ":") return kColon;
    const auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  const std::string& token_of(int id) const { return id_to_token.at(id); }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& t : tokenize(text)) ids.push_back(id_of(t));
    return ids;
  }

  /// Inverse of encode modulo case, whitespace and UNK substitution.
  /// Structural ids (PAD/CLS/SEP/BOS/EOS) are dropped.
  std::string detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (const int id : ids) {
      if (id == kPad || id == kCls || id == kSep || id == kBos || id == kEos) {
        continue;
      }
      if (!out.empty()) out.push_back(' ');
      out += token_of(id);
    }
    return out;
  }

  /// Token strings for metric computation; structural ids dropped.
  std::vector<std::string> decode_tokens(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (const int id : ids) {
      if (id == kPad || id == kCls || id == kSep || id == kBos || id == kEos) {
        continue;
      }
      out.push_back(token_of(id));
    }
    return out;
  }
};

/// Corpus-derived vocabulary: tokens with count >= min_count, ordered by
/// (-count, lexicographic) after the reserved ids.
inline Vocab build_vocab(const std::vector<std::string>& corpus, int min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> counts;
  for (const auto& text : corpus) {
    for (const auto& t : tokenize(text)) {
      if (t == ":") continue;  // pinned to the reserved COLON id
      ++counts[t];
    }
  }
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.id_to_token = {"<pad>", "<cls>", "<sep>", "<bos>", "<eos>", "<unk>", ":"};
  for (int i = 0; i < Vocab::kReserved; ++i) v.token_to_id[v.id_to_token[i]] = i;
  for (const auto& [tok, count] : items) {
    if (count < min_count) continue;
    v.token_to_id[tok] = v.size();
    v.id_to_token.push_back(tok);
  }
  return v;
}

inline void save_vocab(const Vocab& v, const std::string& path) {
  nlohmann::json j = nlohmann::json::object();
  for (int id = 0; id < v.size(); ++id) j[v.id_to_token[id]] = id;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocabulary file: " + path);
  os << j.dump(2) << "\n";
}

inline Vocab load_vocab(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read vocabulary file: " + path);
  nlohmann::json j;
  is >> j;
  std::vector<std::pair<std::string, int>> items;
  for (auto it = j.begin(); it != j.end(); ++it) {
    items.emplace_back(it.key(), it.value().get<int>());
  }
  Vocab v;
  v.id_to_token.resize(items.size());
  for (const auto& [tok, id] : items) {
    if (id < 0 || id >= static_cast<int>(items.size())) {
      throw std::runtime_error("vocabulary file has out-of-range id");
    }
    v.id_to_token[id] = tok;
    v.token_to_id[tok] = id;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Model input layout
// ---------------------------------------------------------------------------

/// Half-open token index range [start, end).
struct SentenceSpan {
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  bool operator==(const SentenceSpan&) const = default;
};

/// Encoder input after the prefix-prompt layout is applied:
/// [CLS] prompt words [:] article body [SEP].
struct ModelInput {
  std::vector<int> token_ids;
  std::vector<SentenceSpan> sentence_spans;  // article-body tokens only
  SentenceSpan prompt_span{0, 0};
  int target_topic_id = -1;
};

struct InputLimits {
  int max_len = 1024;
  int max_sentences = 60;
};

/// Assembles the prompted encoder input. Sentences beyond max_sentences are
/// dropped first, then tokens beyond max_len - 1 (SEP is always appended and
/// the prompt is never truncated). A sentence cut mid-way keeps its partial
/// span.
inline ModelInput build_model_input(const std::vector<std::string>& topic_words,
                                    const std::string& article, const Vocab& vocab,
                                    const InputLimits& limits = {},
                                    int target_topic_id = -1) {
  if (topic_words.empty()) {
    throw std::invalid_argument("build_model_input: topic_words empty");
  }
  if (article.empty()) throw std::runtime_error("empty article");

  ModelInput mi;
  mi.target_topic_id = target_topic_id;
  mi.token_ids.push_back(Vocab::kCls);
  for (const auto& w : topic_words) {
    for (const int id : vocab.encode(w)) mi.token_ids.push_back(id);
  }
  mi.prompt_span = {1, static_cast<int>(mi.token_ids.size())};
  mi.token_ids.push_back(Vocab::kColon);

  std::vector<std::string> sentences = split_sentences(article);
  if (static_cast<int>(sentences.size()) > limits.max_sentences) {
    sentences.resize(limits.max_sentences);
  }

  const int body_budget =
      limits.max_len - 1 - static_cast<int>(mi.token_ids.size());
  int used = 0;
  for (const auto& sent : sentences) {
    if (used >= body_budget) break;
    std::vector<int> ids = vocab.encode(sent);
    if (ids.empty()) continue;
    const int take = std::min<int>(static_cast<int>(ids.size()), body_budget - used);
    const int start = static_cast<int>(mi.token_ids.size());
    mi.token_ids.insert(mi.token_ids.end(), ids.begin(), ids.begin() + take);
    mi.sentence_spans.push_back({start, start + take});
    used += take;
  }
  if (mi.sentence_spans.empty()) throw std::runtime_error("empty article");
  mi.token_ids.push_back(Vocab::kSep);
  return mi;
}

}  // namespace topicsum

#endif  // TOPICSUM_SEGMENTATION_HPP
