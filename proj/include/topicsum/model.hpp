#ifndef TOPICSUM_MODEL_HPP
#define TOPICSUM_MODEL_HPP

#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "topicsum/autodiff.hpp"
#include "topicsum/config.hpp"
#include "topicsum/corpus.hpp"
#include "topicsum/parameters.hpp"
#include "topicsum/rng.hpp"
#include "topicsum/segmentation.hpp"

namespace topicsum {

// ---------------------------------------------------------------------------
// Parameter binding
// ---------------------------------------------------------------------------

/// Lazily injects parameter tensors into a tape as leaves. Only tensors that
/// the forward pass actually touches are bound, so gradients exist exactly
/// for the tensors that participated.
class ParamBinder {
public:
  ParamBinder(ad::Tape& tape, const Parameters& params)
      : tape_(tape), params_(params) {}

  ad::Var operator()(const std::string& name) {
    const auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const ad::Var v = tape_.leaf(params_.at(name));
    bound_.emplace(name, v);
    return v;
  }

  /// Adds each bound tensor's gradient into grads[name]; call after backward().
  void accumulate_grads(std::map<std::string, Mat>& grads) const {
    for (const auto& [name, var] : bound_) {
      Mat g = tape_.grad_of(var);
      const auto it = grads.find(name);
      if (it == grads.end()) {
        grads.emplace(name, std::move(g));
      } else {
        it->second += g;
      }
    }
  }

  const std::map<std::string, ad::Var>& bound() const { return bound_; }

private:
  ad::Tape& tape_;
  const Parameters& params_;
  std::map<std::string, ad::Var> bound_;
};

/// Everything a forward pass needs. Dropout applies only when training is
/// set and the config rate is positive; evaluation-mode passes are
/// deterministic.
struct ForwardCtx {
  ad::Tape& tape;
  ParamBinder& P;
  const ModelConfig& cfg;
  bool training = false;
  Rng* dropout_rng = nullptr;
};

namespace detail {

inline ad::Var dropout(ForwardCtx& ctx, ad::Var x) {
  if (!ctx.training || ctx.cfg.dropout <= 0.0) return x;
  if (ctx.dropout_rng == nullptr) {
    throw std::logic_error("training forward pass without a dropout rng");
  }
  const Mat& v = ctx.tape.val(x);
  const double keep = 1.0 - ctx.cfg.dropout;
  Mat mask(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      mask(r, c) = ctx.dropout_rng->uniform() < ctx.cfg.dropout ? 0.0 : 1.0 / keep;
    }
  }
  return ctx.tape.mul(x, ctx.tape.constant(std::move(mask)));
}

inline std::vector<int> iota_ids(int n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

/// Multi-head scaled dot-product attention with learned projections.
/// An additive mask (0 / -1e30) is applied to the score matrix when given.
inline ad::Var attention(ForwardCtx& ctx, const std::string& prefix, ad::Var q_in,
                         ad::Var kv_in, const Mat* additive_mask) {
  ad::Tape& t = ctx.tape;
  const int d = ctx.cfg.d_model;
  const int heads = ctx.cfg.n_heads;
  const int dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  const ad::Var q = t.add_row(t.matmul(q_in, ctx.P(prefix + ".wq")), ctx.P(prefix + ".bq"));
  const ad::Var k = t.add_row(t.matmul(kv_in, ctx.P(prefix + ".wk")), ctx.P(prefix + ".bk"));
  const ad::Var v = t.add_row(t.matmul(kv_in, ctx.P(prefix + ".wv")), ctx.P(prefix + ".bv"));

  ad::Var mask_var{-1};
  if (additive_mask != nullptr) mask_var = t.constant(*additive_mask);

  std::vector<ad::Var> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const ad::Var qh = t.cols(q, h * dk, dk);
    const ad::Var kh = t.cols(k, h * dk, dk);
    const ad::Var vh = t.cols(v, h * dk, dk);
    ad::Var scores = t.scale(t.matmul(qh, kh, false, true), inv_sqrt_dk);
    if (mask_var.valid()) scores = t.add(scores, mask_var);
    head_outs.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  const ad::Var merged = heads == 1 ? head_outs[0] : t.hstack(head_outs);
  return t.add_row(t.matmul(merged, ctx.P(prefix + ".wo")), ctx.P(prefix + ".bo"));
}

inline ad::Var feed_forward(ForwardCtx& ctx, const std::string& prefix, ad::Var x) {
  ad::Tape& t = ctx.tape;
  const ad::Var h =
      t.relu(t.add_row(t.matmul(x, ctx.P(prefix + ".w1")), ctx.P(prefix + ".b1")));
  return t.add_row(t.matmul(h, ctx.P(prefix + ".w2")), ctx.P(prefix + ".b2"));
}

inline ad::Var layer_norm(ForwardCtx& ctx, const std::string& prefix, ad::Var x) {
  return ctx.tape.layer_norm(x, ctx.P(prefix + ".g"), ctx.P(prefix + ".b"));
}

inline Mat causal_mask(int n) {
  Mat m = Mat::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) m(r, c) = -1e30;
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder / decoder
// ---------------------------------------------------------------------------

/// Token representations (post-LN transformer encoder, full self-attention).
inline ad::Var encode_tokens(ForwardCtx& ctx, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  if (static_cast<int>(ids.size()) > ctx.cfg.max_in) {
    throw std::invalid_argument("encode: input longer than max_in");
  }
  ad::Tape& t = ctx.tape;
  const ad::Var tok = t.gather_rows(ctx.P("embed.token"), ids);
  const ad::Var pos =
      t.gather_rows(ctx.P("embed.pos_enc"), detail::iota_ids(static_cast<int>(ids.size())));
  ad::Var x = detail::dropout(ctx, t.add(tok, pos));
  for (int i = 0; i < ctx.cfg.n_enc_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    const ad::Var n1 = detail::layer_norm(ctx, p + ".ln1", x);
    x = t.add(x, detail::dropout(ctx, detail::attention(ctx, p + ".attn", n1, n1, nullptr)));
    const ad::Var n2 = detail::layer_norm(ctx, p + ".ln2", x);
    x = t.add(x, detail::dropout(ctx, detail::feed_forward(ctx, p + ".ffn", n2)));
  }
  return detail::layer_norm(ctx, "enc.ln_f", x);
}

namespace detail {

/// Causally masked decoder stack over an explicit input sequence; returns
/// vocabulary logits per position.
inline ad::Var decoder_logits(ForwardCtx& ctx, ad::Var memory,
                              const std::vector<int>& dec_in) {
  ad::Tape& t = ctx.tape;
  const int n = static_cast<int>(dec_in.size());
  const ad::Var tok = t.gather_rows(ctx.P("embed.token"), dec_in);
  const ad::Var pos = t.gather_rows(ctx.P("embed.pos_dec"), iota_ids(n));
  ad::Var x = dropout(ctx, t.add(tok, pos));
  const Mat mask = causal_mask(n);
  for (int i = 0; i < ctx.cfg.n_dec_layers; ++i) {
    const std::string p = "dec." + std::to_string(i);
    const ad::Var n1 = layer_norm(ctx, p + ".ln1", x);
    x = t.add(x, dropout(ctx, attention(ctx, p + ".self", n1, n1, &mask)));
    const ad::Var n2 = layer_norm(ctx, p + ".ln2", x);
    x = t.add(x, dropout(ctx, attention(ctx, p + ".cross", n2, memory, nullptr)));
    const ad::Var n3 = layer_norm(ctx, p + ".ln3", x);
    x = t.add(x, dropout(ctx, feed_forward(ctx, p + ".ffn", n3)));
  }
  x = layer_norm(ctx, "dec.ln_f", x);
  return t.add_row(t.matmul(x, ctx.P("out.w")), ctx.P("out.b"));
}

}  // namespace detail

/// Teacher-forced next-token distributions. Row i is the distribution for
/// target_ids[i] and depends only on targets before i (the decoder input is
/// the BOS-shifted target) and on the encoder memory.
inline ad::Var decode_probs(ForwardCtx& ctx, ad::Var memory,
                            const std::vector<int>& target_ids) {
  if (target_ids.empty()) throw std::invalid_argument("decode: empty target");
  const int n = static_cast<int>(target_ids.size());
  if (n > ctx.cfg.max_out) {
    throw std::invalid_argument("decode: target longer than max_out");
  }
  std::vector<int> dec_in(target_ids.size());
  dec_in[0] = Vocab::kBos;
  for (int i = 1; i < n; ++i) dec_in[i] = target_ids[i - 1];
  return ctx.tape.softmax_rows(detail::decoder_logits(ctx, memory, dec_in));
}

// ---------------------------------------------------------------------------
// Pooling and the topic head
// ---------------------------------------------------------------------------

/// m x l averaging matrix: row i holds 1/|span_i| over span i's columns.
inline Mat pooling_matrix(const std::vector<SentenceSpan>& spans, int seq_len) {
  Mat p = Mat::Zero(static_cast<Eigen::Index>(spans.size()), seq_len);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (s.start < 0 || s.end > seq_len || s.start >= s.end) {
      throw std::invalid_argument("pooling_matrix: invalid span");
    }
    const double w = 1.0 / static_cast<double>(s.length());
    for (int c = s.start; c < s.end; ++c) p(static_cast<Eigen::Index>(i), c) = w;
  }
  return p;
}

/// Rowwise arithmetic mean of token representations over each span.
inline Mat mean_pool(const Mat& reps, const std::vector<SentenceSpan>& spans) {
  if (spans.empty()) return Mat(0, reps.cols());
  return pooling_matrix(spans, static_cast<int>(reps.rows())) * reps;
}

inline ad::Var mean_pool_var(ForwardCtx& ctx, ad::Var reps,
                             const std::vector<SentenceSpan>& spans) {
  const Mat p = pooling_matrix(spans, static_cast<int>(ctx.tape.val(reps).rows()));
  return ctx.tape.matmul(ctx.tape.constant(p), reps);
}

/// Shared sentence-topic classifier: one ReLU hidden layer of width d_model,
/// then a softmax over the v topics. The same weights serve the topic-arc
/// objective and candidate scoring for the graph.
inline ad::Var topic_head_var(ForwardCtx& ctx, ad::Var sentence_reps) {
  ad::Tape& t = ctx.tape;
  const ad::Var h = t.relu(t.add_row(t.matmul(sentence_reps, ctx.P("head.topic.w1")),
                                     ctx.P("head.topic.b1")));
  const ad::Var logits =
      t.add_row(t.matmul(h, ctx.P("head.topic.w2")), ctx.P("head.topic.b2"));
  return t.softmax_rows(logits);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean negative log-likelihood of the gold ids under the given per-position
/// distributions. PAD positions are excluded from both the sum and the count;
/// zero probabilities are clamped at 1e-12 with a warning on stderr.
inline double ce_summary_loss(const Mat& probs, const std::vector<int>& gold_ids,
                              int pad_id = Vocab::kPad) {
  if (static_cast<Eigen::Index>(gold_ids.size()) != probs.rows()) {
    throw std::invalid_argument("ce_summary_loss: |gold_ids| != rows(probs)");
  }
  long kept = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < gold_ids.size(); ++i) {
    if (gold_ids[i] == pad_id) continue;
    if (gold_ids[i] < 0 || gold_ids[i] >= probs.cols()) {
      throw std::out_of_range("ce_summary_loss: gold id out of range");
    }
    double p = probs(static_cast<Eigen::Index>(i), gold_ids[i]);
    if (p < 1e-12) {
      std::cerr << "[topicsum] warning: clamped zero probability at gold id "
                << gold_ids[i] << "\n";
      p = 1e-12;
    }
    total -= std::log(p);
    ++kept;
  }
  return kept == 0 ? 0.0 : total / static_cast<double>(kept);
}

// ---------------------------------------------------------------------------
// Topic-arc recognition
// ---------------------------------------------------------------------------

/// Tokenized summary pair in the [CLS] S0 [SEP] S1 [SEP] layout, with
/// per-sentence spans and gold topic labels. No topic prompt is included:
/// the classifier must not see the label it predicts.
struct TarEncoding {
  std::vector<int> ids;
  std::vector<SentenceSpan> spans;
  std::vector<int> labels;
  int m1 = 0;
  int m2 = 0;
};

/// Returns nullopt when either summary contributes no sentence (such pairs
/// are skipped and reported by the caller).
inline std::optional<TarEncoding> encode_tar_pair(const TarPair& pair,
                                                  const Vocab& vocab,
                                                  int max_in = 1024) {
  TarEncoding enc;
  enc.ids.push_back(Vocab::kCls);
  const int body_budget = max_in - 3;  // CLS and two SEPs
  int used = 0;

  const auto add_summary = [&](const SummaryRecord& rec) {
    int n_sentences = 0;
    for (const auto& sent : split_sentences(rec.text)) {
      if (used >= body_budget) break;
      std::vector<int> toks = vocab.encode(sent);
      if (toks.empty()) continue;
      const int take =
          std::min<int>(static_cast<int>(toks.size()), body_budget - used);
      const int start = static_cast<int>(enc.ids.size());
      enc.ids.insert(enc.ids.end(), toks.begin(), toks.begin() + take);
      enc.spans.push_back({start, start + take});
      enc.labels.push_back(rec.topic_id);
      used += take;
      ++n_sentences;
    }
    enc.ids.push_back(Vocab::kSep);
    return n_sentences;
  };

  enc.m1 = add_summary(pair.first);
  enc.m2 = add_summary(pair.second);
  if (enc.m1 == 0 || enc.m2 == 0) return std::nullopt;
  return enc;
}

/// Mean cross-entropy of per-sentence topic predictions over the pair.
inline ad::Var tar_loss_var(ForwardCtx& ctx, const TarEncoding& enc,
                            ad::Var* probs_out = nullptr) {
  const ad::Var reps = encode_tokens(ctx, enc.ids);
  const ad::Var pooled = mean_pool_var(ctx, reps, enc.spans);
  const ad::Var probs = topic_head_var(ctx, pooled);
  if (probs_out != nullptr) *probs_out = probs;
  return ctx.tape.neg_mean_log_pick(probs, enc.labels);
}

struct TarResult {
  double loss = 0.0;
  // (argmax topic id, full distribution) per sentence, first summary first
  std::vector<std::pair<int, Eigen::VectorXd>> per_sentence;
  int m1 = 0;
  int m2 = 0;
};

inline std::optional<TarResult> tar_forward(const Parameters& params,
                                            const ModelConfig& cfg,
                                            const TarPair& pair, const Vocab& vocab) {
  const auto enc = encode_tar_pair(pair, vocab, cfg.max_in);
  if (!enc) return std::nullopt;
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  ad::Var probs_var;
  const ad::Var loss = tar_loss_var(ctx, *enc, &probs_var);
  TarResult res;
  res.loss = tape.val(loss)(0, 0);
  res.m1 = enc->m1;
  res.m2 = enc->m2;
  const Mat& probs = tape.val(probs_var);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
    }
    res.per_sentence.emplace_back(best, probs.row(r).transpose());
  }
  return res;
}

// ---------------------------------------------------------------------------
// Plain-matrix wrappers (evaluation mode)
// ---------------------------------------------------------------------------

inline Mat encode_ids(const Parameters& params, const ModelConfig& cfg,
                      const std::vector<int>& ids) {
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  return tape.val(encode_tokens(ctx, ids));
}

inline Mat encode(const Parameters& params, const ModelConfig& cfg,
                  const ModelInput& input) {
  return encode_ids(params, cfg, input.token_ids);
}

inline Mat decode(const Parameters& params, const ModelConfig& cfg, const Mat& memory,
                  const std::vector<int>& target_ids) {
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  return tape.val(decode_probs(ctx, tape.constant(memory), target_ids));
}

inline std::vector<Eigen::VectorXd> topic_head(const Parameters& params,
                                               const ModelConfig& cfg,
                                               const Mat& sentence_reps) {
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  const Mat probs =
      tape.val(topic_head_var(ctx, tape.constant(sentence_reps)));
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    out.push_back(probs.row(r).transpose());
  }
  return out;
}

/// Greedy decoding from BOS over a fixed encoder memory: argmax each step
/// (ties to the lowest id), stop at EOS or after max_out tokens.
inline std::vector<int> greedy_generate_from_memory(const Parameters& params,
                                                    const ModelConfig& cfg,
                                                    const Mat& memory,
                                                    int max_out) {
  std::vector<int> out;
  std::vector<int> dec_in = {Vocab::kBos};
  while (static_cast<int>(out.size()) < max_out) {
    ad::Tape tape(false);
    ParamBinder binder(tape, params);
    ForwardCtx ctx{tape, binder, cfg, false, nullptr};
    const ad::Var mem = tape.constant(memory);
    const ad::Var logits = detail::decoder_logits(ctx, mem, dec_in);
    const Mat& lv = tape.val(logits);
    const Eigen::Index last = lv.rows() - 1;
    int best = 0;
    for (Eigen::Index c = 1; c < lv.cols(); ++c) {
      if (lv(last, c) > lv(last, best)) best = static_cast<int>(c);
    }
    if (best == Vocab::kEos) break;
    out.push_back(best);
    if (static_cast<int>(dec_in.size()) >= cfg.max_out) break;
    dec_in.push_back(best);
  }
  return out;
}

}  // namespace topicsum

#endif  // TOPICSUM_MODEL_HPP
