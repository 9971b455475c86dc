#ifndef TOPICSUM_CONFIG_HPP
#define TOPICSUM_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "topicsum/corpus.hpp"

namespace topicsum {

/// Raised for invalid configuration values; the message names the field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_width = 128;
  int vocab_size = 0;  // derived from the token vocabulary at train time
  int v = 4;           // topic categories
  int k = 3;           // topic candidates per sentence
  int n_rgcn_layers = 2;
  int max_in = 1024;
  int max_out = 128;
  int max_sentences = 60;
  int min_count = 1;
  double dropout = 0.1;

  void validate() const {
    if (d_model <= 0) throw ConfigError("model.d_model must be positive");
    if (n_heads <= 0 || d_model % n_heads != 0) {
      throw ConfigError("model.n_heads must divide d_model");
    }
    if (n_enc_layers < 1) throw ConfigError("model.n_enc_layers must be >= 1");
    if (n_dec_layers < 1) throw ConfigError("model.n_dec_layers must be >= 1");
    if (ffn_width < 1) throw ConfigError("model.ffn_width must be >= 1");
    if (v < 2) throw ConfigError("model.v must be >= 2");
    if (k < 1 || k > v) throw ConfigError("model.k must be in [1, v]");
    if (n_rgcn_layers < 1 || n_rgcn_layers > 4) {
      throw ConfigError("model.n_rgcn_layers must be in [1, 4]");
    }
    if (max_in < 8) throw ConfigError("model.max_in must be >= 8");
    if (max_out < 2) throw ConfigError("model.max_out must be >= 2");
    if (max_sentences < 1) throw ConfigError("model.max_sentences must be >= 1");
    if (min_count < 1) throw ConfigError("model.min_count must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) {
      throw ConfigError("model.dropout must be in [0, 1)");
    }
  }

  InputLimits limits() const { return {max_in, max_sentences}; }
};

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.8;
  double lr_main = 5e-5;
  double lr_graph = 1e-4;
  double weight_decay = 0.01;
  int epochs = 3;
  int batch_size = 2;
  std::uint64_t seed = 1234;
  double grad_clip = 1.0;
  bool ablate_tar = false;
  bool ablate_tsgn = false;

  void validate() const {
    if (alpha < 0.0) throw ConfigError("train.alpha must be >= 0");
    if (beta < 0.0) throw ConfigError("train.beta must be >= 0");
    if (lr_main <= 0.0) throw ConfigError("train.lr_main must be > 0");
    if (lr_graph <= 0.0) throw ConfigError("train.lr_graph must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
  }
};

struct Paths {
  std::string train_data;
  std::string test_data;
  std::string topic_vocab;
  std::string checkpoint_dir;
  std::string report_path;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticConfig synthetic;
  Paths paths;
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::read_field(m, "d_model", c.model.d_model);
    detail::read_field(m, "n_heads", c.model.n_heads);
    detail::read_field(m, "n_enc_layers", c.model.n_enc_layers);
    detail::read_field(m, "n_dec_layers", c.model.n_dec_layers);
    detail::read_field(m, "ffn_width", c.model.ffn_width);
    detail::read_field(m, "vocab_size", c.model.vocab_size);
    detail::read_field(m, "v", c.model.v);
    detail::read_field(m, "k", c.model.k);
    detail::read_field(m, "n_rgcn_layers", c.model.n_rgcn_layers);
    detail::read_field(m, "max_in", c.model.max_in);
    detail::read_field(m, "max_out", c.model.max_out);
    detail::read_field(m, "max_sentences", c.model.max_sentences);
    detail::read_field(m, "min_count", c.model.min_count);
    detail::read_field(m, "dropout", c.model.dropout);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::read_field(t, "alpha", c.train.alpha);
    detail::read_field(t, "beta", c.train.beta);
    detail::read_field(t, "lr_main", c.train.lr_main);
    detail::read_field(t, "lr_graph", c.train.lr_graph);
    detail::read_field(t, "weight_decay", c.train.weight_decay);
    detail::read_field(t, "epochs", c.train.epochs);
    detail::read_field(t, "batch_size", c.train.batch_size);
    detail::read_field(t, "seed", c.train.seed);
    detail::read_field(t, "grad_clip", c.train.grad_clip);
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    detail::read_field(s, "v", c.synthetic.v);
    detail::read_field(s, "articles", c.synthetic.articles);
    detail::read_field(s, "test_articles", c.synthetic.test_articles);
    detail::read_field(s, "sentences_per_article", c.synthetic.sentences_per_article);
    detail::read_field(s, "words_per_sentence", c.synthetic.words_per_sentence);
    detail::read_field(s, "topic_word_pool_size", c.synthetic.topic_word_pool_size);
    detail::read_field(s, "prompt_words_per_topic", c.synthetic.prompt_words_per_topic);
    detail::read_field(s, "filler_pool_size", c.synthetic.filler_pool_size);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::read_field(p, "train_data", c.paths.train_data);
    detail::read_field(p, "test_data", c.paths.test_data);
    detail::read_field(p, "topic_vocab", c.paths.topic_vocab);
    detail::read_field(p, "checkpoint_dir", c.paths.checkpoint_dir);
    detail::read_field(p, "report_path", c.paths.report_path);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return {
      {"model",
       {{"d_model", c.model.d_model},
        {"n_heads", c.model.n_heads},
        {"n_enc_layers", c.model.n_enc_layers},
        {"n_dec_layers", c.model.n_dec_layers},
        {"ffn_width", c.model.ffn_width},
        {"vocab_size", c.model.vocab_size},
        {"v", c.model.v},
        {"k", c.model.k},
        {"n_rgcn_layers", c.model.n_rgcn_layers},
        {"max_in", c.model.max_in},
        {"max_out", c.model.max_out},
        {"max_sentences", c.model.max_sentences},
        {"min_count", c.model.min_count},
        {"dropout", c.model.dropout}}},
      {"train",
       {{"alpha", c.train.alpha},
        {"beta", c.train.beta},
        {"lr_main", c.train.lr_main},
        {"lr_graph", c.train.lr_graph},
        {"weight_decay", c.train.weight_decay},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"grad_clip", c.train.grad_clip}}},
      {"synthetic",
       {{"v", c.synthetic.v},
        {"articles", c.synthetic.articles},
        {"test_articles", c.synthetic.test_articles},
        {"sentences_per_article", c.synthetic.sentences_per_article},
        {"words_per_sentence", c.synthetic.words_per_sentence},
        {"topic_word_pool_size", c.synthetic.topic_word_pool_size},
        {"prompt_words_per_topic", c.synthetic.prompt_words_per_topic},
        {"filler_pool_size", c.synthetic.filler_pool_size}}},
      {"paths",
       {{"train_data", c.paths.train_data},
        {"test_data", c.paths.test_data},
        {"topic_vocab", c.paths.topic_vocab},
        {"checkpoint_dir", c.paths.checkpoint_dir},
        {"report_path", c.paths.report_path}}}};
}

}  // namespace topicsum

#endif  // TOPICSUM_CONFIG_HPP
