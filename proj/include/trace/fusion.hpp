#ifndef TRACE_FUSION_HPP
#define TRACE_FUSION_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trace/graph.hpp"
#include "trace/params.hpp"

namespace trace {

/// Projection to a shared dimension D, bidirectional single-head
/// cross-attention with residuals, concatenation, and the classifier head.
struct FusionConfig {
  std::size_t d_img = 64;  // image embedding width (from the dataset)
  std::size_t d_txt = 64;  // text feature width (encoder output)
  std::size_t dim = 1024;  // D

  void validate() const;
};

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside both
/// losses before the logs.
inline constexpr double kProbClamp = 1e-7;

void init_fusion(ParamStore& store, const FusionConfig& cfg, std::uint64_t seed,
                 const std::string& prefix = "fusion.");

struct FusionLeaves {
  VarId img_w, img_b;
  VarId txt_w, txt_b;
  VarId i2t_wq, i2t_wk, i2t_wv;  // query is image, keys/values are text
  VarId t2i_wq, t2i_wk, t2i_wv;  // query is text, keys/values are image
  VarId cls_w, cls_b;
};

FusionLeaves fusion_leaves(Graph& g, const ParamStore& store,
                           const std::string& prefix = "fusion.");

/// Affine projection x*P + b (same kernel as linear; kept as a named entry
/// point because callers treat it as a distinct stage).
VarId project(Graph& g, VarId x, VarId w, VarId b);

/// softmax(Q K^T / sqrt(D)) V for one query row against M key/value rows.
/// q may be rank-1 (length D); the result then is rank-1.
VarId cross_attention(Graph& g, VarId q, VarId k, VarId v);
Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Residual enhancement of both modalities, each computed from the original
/// projected features: I + CrossAttn(I Wq, T Wk, T Wv) and the mirror image.
std::pair<VarId, VarId> enhance(Graph& g, const FusionLeaves& leaves, VarId i_p, VarId t_p);

/// [I_enh ; T_enh] -> affine 2D -> 1 -> sigmoid.
VarId fuse_and_classify(Graph& g, const FusionLeaves& leaves, VarId i_enh, VarId t_enh);

/// Binary cross-entropy of a probability node against a fixed 0/1 label.
VarId bce_loss(Graph& g, VarId p_hat, int label);

/// Hate-relevance loss: r = sum_i sel_probs_i * sigmoid(scores_i), then
/// binary cross-entropy of r against the label.
VarId rel_loss(Graph& g, VarId sel_probs, VarId scores, int label);

// Value-level counterparts.
double loss_cls(double p_hat, int label);
double loss_rel(const std::vector<double>& sel_probs, const std::vector<double>& scores,
                int label);
inline double loss_total(double l_cls, double l_rel) { return l_cls + l_rel; }

}  // namespace trace

#endif
