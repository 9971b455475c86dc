#ifndef TOPICSUM_PARAMETERS_HPP
#define TOPICSUM_PARAMETERS_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "topicsum/config.hpp"
#include "topicsum/rng.hpp"

namespace topicsum {

using Mat = Eigen::MatrixXd;

/// Raised for unreadable, corrupted or shape-mismatched checkpoints.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorSpec {
  std::string name;
  long rows = 0;
  long cols = 0;
};

namespace detail {

inline void append_attention_specs(std::vector<TensorSpec>& specs,
                                   const std::string& prefix, int d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    specs.push_back({prefix + "." + w, d, d});
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    specs.push_back({prefix + "." + b, 1, d});
  }
}

inline void append_ln_specs(std::vector<TensorSpec>& specs,
                            const std::string& prefix, int d) {
  specs.push_back({prefix + ".g", 1, d});
  specs.push_back({prefix + ".b", 1, d});
}

inline void append_ffn_specs(std::vector<TensorSpec>& specs,
                             const std::string& prefix, int d, int f) {
  specs.push_back({prefix + ".w1", d, f});
  specs.push_back({prefix + ".b1", 1, f});
  specs.push_back({prefix + ".w2", f, d});
  specs.push_back({prefix + ".b2", 1, d});
}

}  // namespace detail

/**
 * All learnable tensors, keyed by name. Names are stable and define the
 * checkpoint layout:
 *   embed.token / embed.pos_enc / embed.pos_dec / embed.topic
 *   enc.<i>.attn.* enc.<i>.ln1.* enc.<i>.ffn.* enc.<i>.ln2.*
 *   dec.<i>.self.* dec.<i>.ln1.* dec.<i>.cross.* dec.<i>.ln2.*
 *   dec.<i>.ffn.* dec.<i>.ln3.*
 *   head.topic.{w1,b1,w2,b2}
 *   gcn.<l>.{ws,wt}
 *   out.{w,b}
 */
class Parameters {
public:
  static std::vector<TensorSpec> layout(const ModelConfig& cfg) {
    if (cfg.vocab_size <= 0) {
      throw std::invalid_argument("Parameters::layout: vocab_size not set");
    }
    const int d = cfg.d_model;
    std::vector<TensorSpec> specs;
    specs.push_back({"embed.token", cfg.vocab_size, d});
    specs.push_back({"embed.pos_enc", cfg.max_in, d});
    specs.push_back({"embed.pos_dec", cfg.max_out, d});
    specs.push_back({"embed.topic", cfg.v, d});
    for (int i = 0; i < cfg.n_enc_layers; ++i) {
      const std::string p = "enc." + std::to_string(i);
      detail::append_attention_specs(specs, p + ".attn", d);
      detail::append_ln_specs(specs, p + ".ln1", d);
      detail::append_ffn_specs(specs, p + ".ffn", d, cfg.ffn_width);
      detail::append_ln_specs(specs, p + ".ln2", d);
    }
    detail::append_ln_specs(specs, "enc.ln_f", d);
    for (int i = 0; i < cfg.n_dec_layers; ++i) {
      const std::string p = "dec." + std::to_string(i);
      detail::append_attention_specs(specs, p + ".self", d);
      detail::append_ln_specs(specs, p + ".ln1", d);
      detail::append_attention_specs(specs, p + ".cross", d);
      detail::append_ln_specs(specs, p + ".ln2", d);
      detail::append_ffn_specs(specs, p + ".ffn", d, cfg.ffn_width);
      detail::append_ln_specs(specs, p + ".ln3", d);
    }
    detail::append_ln_specs(specs, "dec.ln_f", d);
    specs.push_back({"head.topic.w1", d, d});
    specs.push_back({"head.topic.b1", 1, d});
    specs.push_back({"head.topic.w2", d, cfg.v});
    specs.push_back({"head.topic.b2", 1, cfg.v});
    for (int l = 0; l < cfg.n_rgcn_layers; ++l) {
      const std::string p = "gcn." + std::to_string(l);
      specs.push_back({p + ".ws", d, d});
      specs.push_back({p + ".wt", d, d});
    }
    specs.push_back({"out.w", d, cfg.vocab_size});
    specs.push_back({"out.b", 1, cfg.vocab_size});
    return specs;
  }

  /// Seeded initialization: Xavier-uniform weights, N(0, 0.02) embeddings,
  /// unit layer-norm gains, zero biases.
  static Parameters init(const ModelConfig& cfg, std::uint64_t seed) {
    Parameters p;
    Rng rng(seed);
    for (const auto& spec : layout(cfg)) {
      Mat m(spec.rows, spec.cols);
      const bool is_embedding = spec.name.rfind("embed.", 0) == 0;
      const bool is_ln_gain =
          spec.name.size() > 2 && spec.name.substr(spec.name.size() - 2) == ".g" &&
          spec.name.find(".ln") != std::string::npos;
      const bool is_bias =
          spec.rows == 1 && !is_ln_gain &&
          (spec.name.back() == 'b' || spec.name.find(".b") != std::string::npos);
      if (is_ln_gain) {
        m.setOnes();
      } else if (is_bias) {
        m.setZero();
      } else if (is_embedding) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = 0.02 * rng.normal();
          }
        }
      } else {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = rng.uniform(-limit, limit);
          }
        }
      }
      p.tensors_.emplace(spec.name, std::move(m));
    }
    return p;
  }

  Mat& at(const std::string& name) {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) {
      throw std::out_of_range("no parameter tensor named " + name);
    }
    return it->second;
  }

  const Mat& at(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) {
      throw std::out_of_range("no parameter tensor named " + name);
    }
    return it->second;
  }

  bool has(const std::string& name) const { return tensors_.count(name) > 0; }

  const std::map<std::string, Mat>& tensors() const { return tensors_; }
  std::map<std::string, Mat>& tensors() { return tensors_; }

  bool all_finite() const {
    for (const auto& [name, m] : tensors_) {
      if (!m.allFinite()) return false;
    }
    return true;
  }

  /// Learning-rate group: relational graph weights and the topic embedding
  /// table form the graph group, everything else the main group.
  static bool in_graph_group(const std::string& name) {
    return name.rfind("gcn.", 0) == 0 || name == "embed.topic";
  }

  // -- checkpoint io ---------------------------------------------------------
  // Layout: [u32 little-endian header length][header JSON][row-major float32
  // little-endian payload in header order]. The header lists tensor names and
  // shapes plus model flags.

  void save(const std::string& path, const nlohmann::json& flags = {}) const {
    nlohmann::json header;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : tensors_) {
      header["tensors"].push_back(
          {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
    if (!flags.is_null() && !flags.empty()) header["flags"] = flags;
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint: " + path);
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                             static_cast<unsigned char>((len >> 8) & 0xff),
                             static_cast<unsigned char>((len >> 16) & 0xff),
                             static_cast<unsigned char>((len >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(lenb), 4);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf;
    for (const auto& [name, m] : tensors_) {
      buf.resize(static_cast<std::size_t>(m.size()));
      std::size_t at = 0;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          buf[at++] = static_cast<float>(m(r, c));
        }
      }
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw CheckpointError("short write on checkpoint: " + path);
  }

  static Parameters load(const std::string& path,
                         nlohmann::json* flags_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot read checkpoint: " + path);
    unsigned char lenb[4];
    if (!is.read(reinterpret_cast<char*>(lenb), 4)) {
      throw CheckpointError("corrupted checkpoint header: " + path);
    }
    const std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                              (static_cast<std::uint32_t>(lenb[1]) << 8) |
                              (static_cast<std::uint32_t>(lenb[2]) << 16) |
                              (static_cast<std::uint32_t>(lenb[3]) << 24);
    if (len == 0 || len > (1u << 24)) {
      throw CheckpointError("corrupted checkpoint header: " + path);
    }
    std::string hs(len, '\0');
    if (!is.read(hs.data(), len)) {
      throw CheckpointError("corrupted checkpoint header: " + path);
    }
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception&) {
      throw CheckpointError("corrupted checkpoint header: " + path);
    }
    if (!header.contains("tensors") || !header["tensors"].is_array()) {
      throw CheckpointError("corrupted checkpoint header: " + path);
    }
    if (flags_out != nullptr) {
      *flags_out = header.value("flags", nlohmann::json::object());
    }
    Parameters p;
    std::vector<float> buf;
    for (const auto& t : header["tensors"]) {
      std::string name;
      long rows = 0, cols = 0;
      try {
        name = t.at("name").get<std::string>();
        rows = t.at("rows").get<long>();
        cols = t.at("cols").get<long>();
      } catch (const nlohmann::json::exception&) {
        throw CheckpointError("corrupted checkpoint header: " + path);
      }
      if (rows <= 0 || cols <= 0) {
        throw CheckpointError("corrupted checkpoint header: " + path);
      }
      buf.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
      if (!is.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
        throw CheckpointError("truncated checkpoint payload: " + path);
      }
      Mat m(rows, cols);
      std::size_t at = 0;
      for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
          m(r, c) = static_cast<double>(buf[at++]);
        }
      }
      p.tensors_.emplace(std::move(name), std::move(m));
    }
    return p;
  }

  /// Shape check against the layout implied by a model config.
  void validate_against(const ModelConfig& cfg) const {
    const auto specs = layout(cfg);
    if (specs.size() != tensors_.size()) {
      throw CheckpointError("checkpoint does not match config: expected " +
                            std::to_string(specs.size()) + " tensors, found " +
                            std::to_string(tensors_.size()));
    }
    for (const auto& spec : specs) {
      const auto it = tensors_.find(spec.name);
      if (it == tensors_.end()) {
        throw CheckpointError("checkpoint missing tensor " + spec.name);
      }
      if (it->second.rows() != spec.rows || it->second.cols() != spec.cols) {
        throw CheckpointError("checkpoint tensor " + spec.name +
                              " has mismatched shape");
      }
    }
  }

private:
  std::map<std::string, Mat> tensors_;
};

}  // namespace topicsum

#endif  // TOPICSUM_PARAMETERS_HPP
