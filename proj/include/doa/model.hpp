#pragma once
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "doa/cmat.hpp"
#include "doa/error.hpp"
#include "doa/rng.hpp"
#include "doa/tensor.hpp"

namespace doa {

enum class OutputMode : std::uint8_t { one_d = 1, two_d = 2 };

struct ModelConfig {
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int sources = 3;
  int elements = 8;
  OutputMode mode = OutputMode::one_d;

  int head_dim() const { return embed_dim / heads; }
  int output_dim() const {
    return mode == OutputMode::two_d ? 2 * sources : sources;
  }
  int seq_len() const { return elements + 1; }

  void validate() const {
    if (embed_dim < 1 || depth < 1 || heads < 1 || mlp_ratio < 1 ||
        sources < 1 || elements < 2)
      throw InvalidArgument("model config: all dimensions must be positive");
    if (embed_dim % heads != 0)
      throw InvalidArgument("model config: embed_dim must divide by heads");
  }

  nlohmann::json to_json() const {
    return {{"embed_dim", embed_dim}, {"depth", depth},
            {"heads", heads},         {"mlp_ratio", mlp_ratio},
            {"sources", sources},     {"elements", elements},
            {"output_mode", mode == OutputMode::two_d ? "2d" : "1d"}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.sources = j.at("sources").get<int>();
    c.elements = j.at("elements").get<int>();
    const std::string mode = j.at("output_mode").get<std::string>();
    if (mode == "1d")
      c.mode = OutputMode::one_d;
    else if (mode == "2d")
      c.mode = OutputMode::two_d;
    else
      throw InvalidArgument("model config: bad output_mode");
    c.validate();
    return c;
  }
};

// Enumerates every learnable tensor in a fixed order:
// fn(name, rank, rows, cols). Rank-1 tensors are stored as 1 x n rows.
template <class Fn>
void for_each_tensor(const ModelConfig& c, Fn&& fn) {
  const std::size_t d = static_cast<std::size_t>(c.embed_dim);
  const std::size_t m = static_cast<std::size_t>(c.elements);
  const std::size_t hidden = d * static_cast<std::size_t>(c.mlp_ratio);
  fn("embed", 2, d, 2 * m);
  fn("doa_token", 1, std::size_t(1), d);
  fn("pos_embed", 2, m + 1, d);
  for (int l = 0; l < c.depth; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "ln1.gain", 1, std::size_t(1), d);
    fn(p + "ln1.bias", 1, std::size_t(1), d);
    fn(p + "attn.wq", 2, d, d);
    fn(p + "attn.wk", 2, d, d);
    fn(p + "attn.wv", 2, d, d);
    fn(p + "attn.wo", 2, d, d);
    fn(p + "ln2.gain", 1, std::size_t(1), d);
    fn(p + "ln2.bias", 1, std::size_t(1), d);
    fn(p + "mlp.w1", 2, hidden, d);
    fn(p + "mlp.b1", 1, std::size_t(1), hidden);
    fn(p + "mlp.w2", 2, d, hidden);
    fn(p + "mlp.b2", 1, std::size_t(1), d);
  }
  fn("final_ln.gain", 1, std::size_t(1), d);
  fn("final_ln.bias", 1, std::size_t(1), d);
  fn("head.weight", 2, static_cast<std::size_t>(c.output_dim()), d);
  fn("head.bias", 1, std::size_t(1), static_cast<std::size_t>(c.output_dim()));
}

struct ParamLayout {
  struct Entry {
    std::string name;
    std::uint8_t rank = 2;
    std::size_t rows = 0, cols = 0;
    std::size_t offset = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
};

inline ParamLayout make_layout(const ModelConfig& c) {
  c.validate();
  ParamLayout layout;
  for_each_tensor(c, [&](const std::string& name, int rank, std::size_t rows,
                         std::size_t cols) {
    layout.entries.push_back({name, static_cast<std::uint8_t>(rank), rows,
                              cols, layout.total});
    layout.total += rows * cols;
  });
  return layout;
}

inline std::size_t param_count(const ModelConfig& c) {
  return make_layout(c).total;
}

// The full learnable parameter set, stored flat so the optimizer, the
// checkpoint writer and the gradient export all address it uniformly.
struct TransDoaParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> data;
};

// Weights, biases, token and positional embeddings ~ N(0, 0.02^2);
// layernorm gains start at 1.
inline TransDoaParams init_params(const ModelConfig& c, std::uint64_t seed) {
  TransDoaParams p;
  p.config = c;
  p.layout = make_layout(c);
  p.data.assign(p.layout.total, 0.0);
  Rng rng(seed);
  for (const auto& e : p.layout.entries) {
    double* dst = p.data.data() + e.offset;
    const std::size_t n = e.rows * e.cols;
    if (e.name.size() >= 4 && e.name.ends_with("gain")) {
      std::fill(dst, dst + n, 1.0);
    } else {
      for (std::size_t i = 0; i < n; ++i) dst[i] = 0.02 * rng.normal();
    }
  }
  return p;
}

// Node ids of every parameter tensor inside one tape.
struct LayerRefs {
  int ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
};
struct ParamRefs {
  int embed, token, pos;
  std::vector<LayerRefs> layers;
  int lnf_g, lnf_b, head_w, head_b;
};

namespace detail {

// Builds ParamRefs in layout order from a provider(entry_index) -> node id.
template <class Provider>
ParamRefs build_refs(const ModelConfig& c, Provider&& next) {
  ParamRefs r;
  r.embed = next();
  r.token = next();
  r.pos = next();
  r.layers.resize(static_cast<std::size_t>(c.depth));
  for (auto& l : r.layers) {
    l.ln1_g = next();
    l.ln1_b = next();
    l.wq = next();
    l.wk = next();
    l.wv = next();
    l.wo = next();
    l.ln2_g = next();
    l.ln2_b = next();
    l.w1 = next();
    l.b1 = next();
    l.w2 = next();
    l.b2 = next();
  }
  r.lnf_g = next();
  r.lnf_b = next();
  r.head_w = next();
  r.head_b = next();
  return r;
}

}  // namespace detail

// View leaves over the flat parameter buffer. `leaf_offsets` receives
// (node id, flat offset) pairs for gradient export.
inline ParamRefs params_to_refs(
    ad::Tape& t, const TransDoaParams& p,
    std::vector<std::pair<int, std::size_t>>* leaf_offsets = nullptr) {
  std::size_t i = 0;
  return detail::build_refs(p.config, [&]() {
    const auto& e = p.layout.entries[i++];
    const int id = ad::leaf_view(t, e.rows, e.cols, p.data.data() + e.offset);
    if (leaf_offsets) leaf_offsets->emplace_back(id, e.offset);
    return id;
  });
}

// Same tensors carved out of a single leaf that views a flat vector; used
// by whole-model gradient checks.
inline ParamRefs refs_from_flat(ad::Tape& t, const ModelConfig& c,
                                const ParamLayout& layout, int flat_leaf) {
  std::size_t i = 0;
  return detail::build_refs(c, [&]() {
    const auto& e = layout.entries[i++];
    const int s =
        ad::slice_cols(t, flat_leaf, e.offset, e.offset + e.rows * e.cols);
    return ad::reshape(t, s, e.rows, e.cols);
  });
}

// SCM -> real (M x 2M) embedding input: the matrix is scaled by M/trace,
// column i becomes row [Re(r_i); Im(r_i)].
inline std::vector<double> embed_input(const CMat& scm) {
  if (scm.rows != scm.cols || scm.rows == 0)
    throw InvalidArgument("embed_input: SCM must be square");
  const std::size_t m = scm.rows;
  const double tr_mean = trace(scm).real() / static_cast<double>(m);
  const double s = tr_mean > 0.0 ? 1.0 / tr_mean : 1.0;
  std::vector<double> out(m * 2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t r = 0; r < m; ++r) {
      out[i * 2 * m + r] = scm(r, i).real() * s;
      out[i * 2 * m + m + r] = scm(r, i).imag() * s;
    }
  }
  return out;
}

// Covariance embedding: project each realified column, prepend the DOA
// token, add positional embeddings. Returns the (M+1) x D sequence node.
inline int build_embedding(ad::Tape& t, const ParamRefs& p, int input) {
  const int x = ad::matmul_nt(t, input, p.embed);
  const int with_token = ad::concat_rows(t, p.token, x);
  return ad::add(t, with_token, p.pos);
}

// One multi-head self-attention block on a (M+1) x D sequence.
inline int build_mhsa(ad::Tape& t, const ModelConfig& c, const LayerRefs& l,
                      int z) {
  const std::size_t dk = static_cast<std::size_t>(c.head_dim());
  const int q = ad::matmul_nt(t, z, l.wq);
  const int k = ad::matmul_nt(t, z, l.wk);
  const int v = ad::matmul_nt(t, z, l.wv);
  std::vector<int> heads;
  heads.reserve(static_cast<std::size_t>(c.heads));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int h = 0; h < c.heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dk;
    const int qh = ad::slice_cols(t, q, c0, c0 + dk);
    const int kh = ad::slice_cols(t, k, c0, c0 + dk);
    const int vh = ad::slice_cols(t, v, c0, c0 + dk);
    const int scores = ad::scale(t, ad::matmul_nt(t, qh, kh), inv_scale);
    const int attn = ad::softmax_rows(t, scores);
    heads.push_back(ad::matmul(t, attn, vh));
  }
  const int cat = ad::concat_cols(t, heads);
  return ad::matmul_nt(t, cat, l.wo);
}

struct ForwardNodes {
  int feature = -1;  // 1 x D token features after the final layernorm
  int output = -1;   // 1 x output_dim estimate in degrees
};

// Pre-norm encoder: Z += MHSA(LN(Z)); Z += MLP(LN(Z)); final LN; the head
// projects the token row.
inline ForwardNodes build_forward(ad::Tape& t, const ModelConfig& c,
                                  const ParamRefs& p, int input) {
  int z = build_embedding(t, p, input);
  for (const LayerRefs& l : p.layers) {
    const int a = ad::layernorm(t, z, l.ln1_g, l.ln1_b);
    z = ad::add(t, z, build_mhsa(t, c, l, a));
    const int b = ad::layernorm(t, z, l.ln2_g, l.ln2_b);
    const int u = ad::linear(t, b, l.w1, l.b1);
    const int g = ad::gelu(t, u);
    const int u2 = ad::linear(t, g, l.w2, l.b2);
    z = ad::add(t, z, u2);
  }
  const int f = ad::layernorm(t, z, p.lnf_g, p.lnf_b);
  ForwardNodes out;
  out.feature = ad::slice_row(t, f, 0);
  out.output = ad::linear(t, out.feature, p.head_w, p.head_b);
  return out;
}

struct ModelEval {
  std::vector<double> feature;
  std::vector<double> thetas;
  std::vector<double> phis;  // 2-D mode only
};

inline ModelEval eval_from_input(const TransDoaParams& p,
                                 const std::vector<double>& input) {
  const ModelConfig& c = p.config;
  if (input.size() != static_cast<std::size_t>(c.elements) * 2 *
                          static_cast<std::size_t>(c.elements))
    throw InvalidArgument("model input does not match config");
  thread_local ad::Tape t;
  t.clear();
  const int in =
      ad::leaf_view(t, static_cast<std::size_t>(c.elements),
                    2 * static_cast<std::size_t>(c.elements), input.data());
  const ParamRefs refs = params_to_refs(t, p);
  const ForwardNodes nodes = build_forward(t, c, refs, in);

  ModelEval out;
  const auto fv = t.value(nodes.feature);
  out.feature.assign(fv.begin(), fv.end());
  const auto ov = t.value(nodes.output);
  for (double v : ov)
    if (!std::isfinite(v))
      throw NumericError("model forward produced non-finite output");
  const std::size_t k = static_cast<std::size_t>(c.sources);
  out.thetas.assign(ov.begin(), ov.begin() + k);
  if (c.mode == OutputMode::two_d) out.phis.assign(ov.begin() + k, ov.end());
  return out;
}

// Full estimate from a raw SCM.
inline ModelEval model_forward(const TransDoaParams& p, const CMat& scm) {
  if (scm.rows != static_cast<std::size_t>(p.config.elements))
    throw InvalidArgument("SCM size does not match model config");
  return eval_from_input(p, embed_input(scm));
}

// Backbone features only (the estimation head is not applied).
inline std::vector<double> feature_extract(const TransDoaParams& p,
                                           const CMat& scm) {
  return model_forward(p, scm).feature;
}

}  // namespace doa
