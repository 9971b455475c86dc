#ifndef TOPICSUM_GRAPH_HPP
#define TOPICSUM_GRAPH_HPP

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "topicsum/model.hpp"

namespace topicsum {

// ---------------------------------------------------------------------------
// Semantic graph over sentence and topic nodes
// ---------------------------------------------------------------------------

/**
 * Heterogeneous graph with two edge relations: consecutive sentences are
 * chained under the sentence relation, and each sentence connects to its
 * topic candidate nodes under the topic relation. Edges are stored directed
 * (low index first / sentence first) but message passing treats both
 * directions within a relation.
 */
struct SemanticGraph {
  int n_sentence_nodes = 0;
  std::vector<int> topic_node_ids;                // sorted topic ids in use
  std::vector<std::pair<int, int>> edges_s;       // (sentence i, sentence i+1)
  std::vector<std::pair<int, int>> edges_t;       // (sentence i, topic id u)

  int n_nodes() const {
    return n_sentence_nodes + static_cast<int>(topic_node_ids.size());
  }

  // node index of topic id u: sentence nodes first, then topic nodes in
  // topic_node_ids order
  int topic_node_index(int topic_id) const {
    const auto it = std::lower_bound(topic_node_ids.begin(), topic_node_ids.end(),
                                     topic_id);
    if (it == topic_node_ids.end() || *it != topic_id) {
      throw std::out_of_range("topic id " + std::to_string(topic_id) +
                              " is not a node of this graph");
    }
    return n_sentence_nodes + static_cast<int>(it - topic_node_ids.begin());
  }
};

/// Top-k topic ids by probability, ties broken toward the lower id, returned
/// ascending.
inline std::vector<int> select_topic_candidates(const Eigen::VectorXd& dist, int k) {
  const int v = static_cast<int>(dist.size());
  if (k < 1 || k > v) {
    throw std::invalid_argument("select_topic_candidates: k must be in [1, v]");
  }
  std::vector<int> ids(v);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (dist(a) != dist(b)) return dist(a) > dist(b);
    return a < b;
  });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Graph construction from per-sentence candidate lists: a chain of sentence
/// nodes plus one edge from every sentence to each of its candidates. Topics
/// never proposed by any sentence do not become nodes.
inline SemanticGraph build_semantic_graph(
    int m, const std::vector<std::vector<int>>& candidates) {
  if (m < 1 || static_cast<int>(candidates.size()) != m) {
    throw std::invalid_argument("build_semantic_graph: |candidates| must equal m >= 1");
  }
  SemanticGraph g;
  g.n_sentence_nodes = m;
  for (int i = 0; i + 1 < m; ++i) g.edges_s.emplace_back(i, i + 1);
  std::vector<int> all;
  for (int i = 0; i < m; ++i) {
    std::vector<int> c = candidates[i];
    std::sort(c.begin(), c.end());
    if (std::adjacent_find(c.begin(), c.end()) != c.end()) {
      throw std::invalid_argument("build_semantic_graph: duplicate candidate");
    }
    for (const int u : c) {
      g.edges_t.emplace_back(i, u);
      all.push_back(u);
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  g.topic_node_ids = std::move(all);
  return g;
}

// ---------------------------------------------------------------------------
// Relational graph convolution
// ---------------------------------------------------------------------------

namespace detail {

/// Degree-normalized bidirectional adjacency for one relation:
/// row i holds 1/|N(i)| at each neighbor column.
inline Mat relation_matrix(int n_nodes,
                           const std::vector<std::pair<int, int>>& node_edges) {
  Mat a = Mat::Zero(n_nodes, n_nodes);
  std::vector<int> degree(n_nodes, 0);
  for (const auto& [i, j] : node_edges) {
    ++degree[i];
    ++degree[j];
  }
  for (const auto& [i, j] : node_edges) {
    a(i, j) += 1.0 / static_cast<double>(degree[i]);
    a(j, i) += 1.0 / static_cast<double>(degree[j]);
  }
  return a;
}

inline std::vector<std::pair<int, int>> topic_edges_as_node_pairs(
    const SemanticGraph& g) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(g.edges_t.size());
  for (const auto& [i, u] : g.edges_t) {
    pairs.emplace_back(i, g.topic_node_index(u));
  }
  return pairs;
}

}  // namespace detail

inline Mat sentence_relation_matrix(const SemanticGraph& g) {
  return detail::relation_matrix(g.n_nodes(), g.edges_s);
}

inline Mat topic_relation_matrix(const SemanticGraph& g) {
  return detail::relation_matrix(g.n_nodes(), detail::topic_edges_as_node_pairs(g));
}

/// One relational graph convolution:
///   out_i = ReLU( sum_e sum_{j in N_e(i)} (1/|N_e(i)|) W_e in_j )
/// with no self loop and no bias. Relations with an empty neighborhood
/// contribute nothing; an isolated node maps to the zero vector.
inline Mat rgcn_layer(const SemanticGraph& g, const Mat& feats, const Mat& w_s,
                      const Mat& w_t) {
  if (feats.rows() != g.n_nodes()) {
    throw std::invalid_argument("rgcn_layer: feature row count must match graph");
  }
  const Mat a_s = sentence_relation_matrix(g);
  const Mat a_t = topic_relation_matrix(g);
  const Mat pre = a_s * (feats * w_s.transpose()) + a_t * (feats * w_t.transpose());
  return pre.cwiseMax(0.0);
}

inline ad::Var rgcn_layer_var(ForwardCtx& ctx, const SemanticGraph& g, ad::Var feats,
                              ad::Var w_s, ad::Var w_t) {
  ad::Tape& t = ctx.tape;
  const ad::Var a_s = t.constant(sentence_relation_matrix(g));
  const ad::Var a_t = t.constant(topic_relation_matrix(g));
  const ad::Var m_s = t.matmul(a_s, t.matmul(feats, w_s, false, true));
  const ad::Var m_t = t.matmul(a_t, t.matmul(feats, w_t, false, true));
  return t.relu(t.add(m_s, m_t));
}

// ---------------------------------------------------------------------------
// Residual injection
// ---------------------------------------------------------------------------

namespace detail {

/// l x m scatter matrix: column i is 1 over span i's rows.
inline Mat scatter_matrix(const std::vector<SentenceSpan>& spans, int seq_len) {
  Mat s = Mat::Zero(seq_len, static_cast<Eigen::Index>(spans.size()));
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (int r = spans[i].start; r < spans[i].end; ++r) {
      s(r, static_cast<Eigen::Index>(i)) = 1.0;
    }
  }
  return s;
}

}  // namespace detail

/// Adds updated sentence vector i to every token row inside span i; rows
/// outside all spans (CLS, prompt, separator) are untouched.
inline Mat inject(const Mat& reps, const Mat& updated,
                  const std::vector<SentenceSpan>& spans) {
  if (updated.rows() != static_cast<Eigen::Index>(spans.size())) {
    throw std::invalid_argument("inject: |updated| != |spans|");
  }
  return reps + detail::scatter_matrix(spans, static_cast<int>(reps.rows())) * updated;
}

inline ad::Var inject_var(ForwardCtx& ctx, ad::Var reps, ad::Var updated,
                          const std::vector<SentenceSpan>& spans) {
  ad::Tape& t = ctx.tape;
  if (t.val(updated).rows() != static_cast<Eigen::Index>(spans.size())) {
    throw std::invalid_argument("inject: |updated| != |spans|");
  }
  const ad::Var s = t.constant(
      detail::scatter_matrix(spans, static_cast<int>(t.val(reps).rows())));
  return t.add(reps, t.matmul(s, updated));
}

// ---------------------------------------------------------------------------
// Full graph-network summarization path
// ---------------------------------------------------------------------------

/// Encoder -> pooling -> shared topic head -> hard top-k candidate selection
/// -> graph construction -> relational convolutions -> residual injection.
/// Candidate selection is a hard choice: gradients flow through the features,
/// not through the selection.
struct GraphPipeline {
  ad::Var reps;
  ad::Var injected;
  SemanticGraph graph;
  std::vector<std::vector<int>> candidates;  // per sentence, ascending
  Mat topic_probs;                           // m x v, detached values
};

inline GraphPipeline graph_pipeline_var(
    ForwardCtx& ctx, const ModelInput& input,
    const std::vector<std::vector<int>>* forced_candidates = nullptr) {
  ad::Tape& t = ctx.tape;
  if (input.sentence_spans.empty()) {
    throw std::invalid_argument("graph pipeline: input has no sentence spans");
  }
  const int m = static_cast<int>(input.sentence_spans.size());
  const int k = std::min(ctx.cfg.k, ctx.cfg.v);

  GraphPipeline out;
  out.reps = encode_tokens(ctx, input.token_ids);
  const ad::Var pooled = mean_pool_var(ctx, out.reps, input.sentence_spans);
  out.topic_probs = t.val(topic_head_var(ctx, pooled));
  if (forced_candidates != nullptr) {
    out.candidates = *forced_candidates;
  } else {
    for (int i = 0; i < m; ++i) {
      out.candidates.push_back(
          select_topic_candidates(out.topic_probs.row(i).transpose(), k));
    }
  }
  out.graph = build_semantic_graph(m, out.candidates);

  ad::Var feats = t.vstack(
      pooled, t.gather_rows(ctx.P("embed.topic"), out.graph.topic_node_ids));
  for (int l = 0; l < ctx.cfg.n_rgcn_layers; ++l) {
    const std::string p = "gcn." + std::to_string(l);
    feats = rgcn_layer_var(ctx, out.graph, feats, ctx.P(p + ".ws"), ctx.P(p + ".wt"));
  }
  out.injected = inject_var(ctx, out.reps, t.rows(feats, 0, m), input.sentence_spans);
  return out;
}

struct TsgnVars {
  ad::Var loss;
  ad::Var probs;
  ad::Var injected;
  SemanticGraph graph;
  std::vector<std::vector<int>> candidates;
  Mat topic_probs;
};

inline TsgnVars tsgn_forward_var(
    ForwardCtx& ctx, const ModelInput& input, const std::vector<int>& gold_ids,
    const std::vector<std::vector<int>>* forced_candidates = nullptr) {
  GraphPipeline pipe = graph_pipeline_var(ctx, input, forced_candidates);
  TsgnVars out;
  out.injected = pipe.injected;
  out.graph = std::move(pipe.graph);
  out.candidates = std::move(pipe.candidates);
  out.topic_probs = std::move(pipe.topic_probs);
  out.probs = decode_probs(ctx, out.injected, gold_ids);
  out.loss = ctx.tape.neg_mean_log_pick(out.probs, gold_ids, Vocab::kPad);
  return out;
}

/// Prompted base path: encoder memory goes straight to the decoder.
inline ad::Var base_loss_var(ForwardCtx& ctx, const ModelInput& input,
                             const std::vector<int>& gold_ids,
                             ad::Var* probs_out = nullptr) {
  const ad::Var reps = encode_tokens(ctx, input.token_ids);
  const ad::Var probs = decode_probs(ctx, reps, gold_ids);
  if (probs_out != nullptr) *probs_out = probs;
  return ctx.tape.neg_mean_log_pick(probs, gold_ids, Vocab::kPad);
}

struct TsgnResult {
  double loss = 0.0;
  Mat probs;
  SemanticGraph graph;
  std::vector<std::vector<int>> candidates;
  Mat topic_probs;
};

inline TsgnResult tsgn_forward(const Parameters& params, const ModelConfig& cfg,
                               const ModelInput& input,
                               const std::vector<int>& gold_ids) {
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  TsgnVars vars = tsgn_forward_var(ctx, input, gold_ids);
  TsgnResult res;
  res.loss = tape.val(vars.loss)(0, 0);
  res.probs = tape.val(vars.probs);
  res.graph = std::move(vars.graph);
  res.candidates = std::move(vars.candidates);
  res.topic_probs = std::move(vars.topic_probs);
  return res;
}

/// Encoder memory for generation: the graph-updated representations when
/// use_tsgn is set, the raw encoder output otherwise.
inline Mat generation_memory(const Parameters& params, const ModelConfig& cfg,
                             const ModelInput& input, bool use_tsgn) {
  ad::Tape tape(false);
  ParamBinder binder(tape, params);
  ForwardCtx ctx{tape, binder, cfg, false, nullptr};
  if (!use_tsgn) return tape.val(encode_tokens(ctx, input.token_ids));
  return tape.val(graph_pipeline_var(ctx, input).injected);
}

/// Greedy summary for a prompted input.
inline std::vector<int> greedy_generate(const Parameters& params,
                                        const ModelConfig& cfg,
                                        const ModelInput& input, bool use_tsgn = true,
                                        int max_out = -1) {
  const Mat memory = generation_memory(params, cfg, input, use_tsgn);
  return greedy_generate_from_memory(params, cfg, memory,
                                     max_out < 0 ? cfg.max_out : max_out);
}

// ---------------------------------------------------------------------------
// Graph inspection dump
// ---------------------------------------------------------------------------

/// Stable textual dump: one line per sentence with candidates, argmax topic
/// and its probability, then both edge lists and the topic node set.
inline std::string format_graph_dump(const SemanticGraph& graph,
                                     const std::vector<std::vector<int>>& candidates,
                                     const Mat& topic_probs) {
  std::ostringstream os;
  const auto join_ids = [](const std::vector<int>& ids) {
    std::string s = "[";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i > 0) s += ",";
      s += std::to_string(ids[i]);
    }
    return s + "]";
  };
  for (int i = 0; i < graph.n_sentence_nodes; ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < topic_probs.cols(); ++c) {
      if (topic_probs(i, c) > topic_probs(i, best)) best = static_cast<int>(c);
    }
    char pbuf[32];
    std::snprintf(pbuf, sizeof(pbuf), "%.6f", topic_probs(i, best));
    os << i << "  topic_candidates=" << join_ids(candidates[i]) << "  argmax="
       << best << "  p=" << pbuf << "\n";
  }
  os << "edges_s:";
  for (const auto& [a, b] : graph.edges_s) os << " (" << a << "," << b << ")";
  os << "\nedges_t:";
  for (const auto& [a, u] : graph.edges_t) os << " (" << a << "," << u << ")";
  os << "\ntopic_nodes: " << join_ids(graph.topic_node_ids) << "\n";
  return os.str();
}

}  // namespace topicsum

#endif  // TOPICSUM_GRAPH_HPP
