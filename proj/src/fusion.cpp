#include "trace/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "trace/init.hpp"

namespace trace {

void FusionConfig::validate() const {
  if (d_img == 0 || d_txt == 0 || dim == 0)
    throw std::invalid_argument("fusion dims must be positive");
}

void init_fusion(ParamStore& store, const FusionConfig& cfg, std::uint64_t seed,
                 const std::string& prefix) {
  cfg.validate();
  RngStream rng(seed);
  store.add(prefix + "img_proj.w", xavier_uniform(cfg.d_img, cfg.dim, rng));
  store.add(prefix + "img_proj.b", Tensor({cfg.dim}));
  store.add(prefix + "txt_proj.w", xavier_uniform(cfg.d_txt, cfg.dim, rng));
  store.add(prefix + "txt_proj.b", Tensor({cfg.dim}));
  for (const char* dir : {"i2t.", "t2i."}) {
    for (const char* m : {"wq", "wk", "wv"})
      store.add(prefix + dir + m, xavier_uniform(cfg.dim, cfg.dim, rng));
  }
  store.add(prefix + "cls.w", xavier_uniform(2 * cfg.dim, 1, rng));
  store.add(prefix + "cls.b", Tensor({1}));
}

FusionLeaves fusion_leaves(Graph& g, const ParamStore& store, const std::string& prefix) {
  FusionLeaves l;
  l.img_w = g.param(store, prefix + "img_proj.w");
  l.img_b = g.param(store, prefix + "img_proj.b");
  l.txt_w = g.param(store, prefix + "txt_proj.w");
  l.txt_b = g.param(store, prefix + "txt_proj.b");
  l.i2t_wq = g.param(store, prefix + "i2t.wq");
  l.i2t_wk = g.param(store, prefix + "i2t.wk");
  l.i2t_wv = g.param(store, prefix + "i2t.wv");
  l.t2i_wq = g.param(store, prefix + "t2i.wq");
  l.t2i_wk = g.param(store, prefix + "t2i.wk");
  l.t2i_wv = g.param(store, prefix + "t2i.wv");
  l.cls_w = g.param(store, prefix + "cls.w");
  l.cls_b = g.param(store, prefix + "cls.b");
  return l;
}

VarId project(Graph& g, VarId x, VarId w, VarId b) { return g.linear(x, w, b); }

VarId cross_attention(Graph& g, VarId q, VarId k, VarId v) {
  bool vector_query = g.value(q).rank() == 1;
  VarId q2 = vector_query ? g.reshape(q, {1, g.value(q).size()}) : q;
  std::size_t dk = g.value(q2).cols();
  if (g.value(k).cols() != dk || !g.value(k).same_shape(g.value(v)))
    throw std::invalid_argument("cross_attention: K/V do not match query width");
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  VarId logits = g.affine(g.matmul(q2, g.transpose(k)), scale, 0.0);
  VarId attn = g.softmax(logits);
  VarId out = g.matmul(attn, v);
  return vector_query ? g.reshape(out, {dk}) : out;
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Graph g;
  return g.value(cross_attention(g, g.input(q), g.input(k), g.input(v)));
}

std::pair<VarId, VarId> enhance(Graph& g, const FusionLeaves& leaves, VarId i_p, VarId t_p) {
  std::size_t dim = g.value(i_p).size();
  if (g.value(t_p).size() != dim)
    throw std::invalid_argument("enhance: projected features disagree on D");
  VarId i_row = g.reshape(i_p, {1, dim});
  VarId t_row = g.reshape(t_p, {1, dim});
  // Both directions read the original projections; neither sees the other's
  // residual update.
  VarId i_attn = cross_attention(g, g.matmul(i_row, leaves.i2t_wq), g.matmul(t_row, leaves.i2t_wk),
                                 g.matmul(t_row, leaves.i2t_wv));
  VarId t_attn = cross_attention(g, g.matmul(t_row, leaves.t2i_wq), g.matmul(i_row, leaves.t2i_wk),
                                 g.matmul(i_row, leaves.t2i_wv));
  VarId i_enh = g.add(i_p, g.reshape(i_attn, {dim}));
  VarId t_enh = g.add(t_p, g.reshape(t_attn, {dim}));
  return {i_enh, t_enh};
}

VarId fuse_and_classify(Graph& g, const FusionLeaves& leaves, VarId i_enh, VarId t_enh) {
  VarId combined = g.concat(i_enh, t_enh);  // image half first
  VarId logit = g.linear(combined, leaves.cls_w, leaves.cls_b);
  return g.sigmoid(logit);
}

VarId bce_loss(Graph& g, VarId p_hat, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
  VarId pc = g.clamp(p_hat, kProbClamp, 1.0 - kProbClamp);
  double y = static_cast<double>(label);
  VarId pos = g.affine(g.log(pc), y, 0.0);
  VarId neg = g.affine(g.log(g.affine(pc, -1.0, 1.0)), 1.0 - y, 0.0);
  return g.affine(g.add(pos, neg), -1.0, 0.0);
}

VarId rel_loss(Graph& g, VarId sel_probs, VarId scores, int label) {
  require_same_shape(g.value(sel_probs), g.value(scores), "rel_loss");
  VarId r = g.sum(g.mul(sel_probs, g.sigmoid(scores)));
  return bce_loss(g, r, label);
}

double loss_cls(double p_hat, int label) {
  Graph g;
  return g.scalar(bce_loss(g, g.input(Tensor::scalar(p_hat)), label));
}

double loss_rel(const std::vector<double>& sel_probs, const std::vector<double>& scores,
                int label) {
  Graph g;
  return g.scalar(
      rel_loss(g, g.input(Tensor::vec(sel_probs)), g.input(Tensor::vec(scores)), label));
}

}  // namespace trace
