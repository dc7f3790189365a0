#ifndef TRACE_ENCODER_HPP
#define TRACE_ENCODER_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trace/graph.hpp"
#include "trace/params.hpp"

namespace trace {

/// Toy transformer text encoder: token + positional embeddings, L pre-norm
/// blocks (LayerNorm / multi-head attention / feed-forward), a final
/// LayerNorm, and a masked mean-pool to a single d-vector.
struct EncoderConfig {
  std::size_t vocab_size = 4096;
  std::size_t max_len = 77;
  std::size_t width = 64;       // d
  std::size_t num_layers = 6;   // L
  std::size_t num_heads = 4;    // H
  std::size_t ffn_mult = 4;

  std::size_t head_dim() const { return width / num_heads; }
  std::size_t ffn_dim() const { return ffn_mult * width; }
  void validate() const;
};

/// Hash tokenizer: lowercase, split into alphanumeric runs and single
/// punctuation marks, FNV-1a64 each token into [2, vocab). Id 0 is padding,
/// id 1 is the prepended begin marker. Output is truncated to max_len.
std::vector<std::size_t> tokenize(const std::string& text, std::size_t max_len,
                                  std::size_t vocab_size);

/// Registers encoder parameters under `prefix`. Embeddings are registered
/// non-trainable: they are not part of the last-n block stack, mirroring an
/// encoder whose embedding tables stay frozen during fine-tuning.
void init_encoder(ParamStore& store, const EncoderConfig& cfg, std::uint64_t seed,
                  const std::string& prefix = "encoder.");

struct BlockLeaves {
  VarId ln1_gamma, ln1_beta;
  VarId wq, bq, wk, bk, wv, bv, wo, bo;
  VarId ln2_gamma, ln2_beta;
  VarId ffn_w_in, ffn_b_in, ffn_w_out, ffn_b_out;
};

struct EncoderLeaves {
  VarId tok_emb, pos_emb;
  std::vector<BlockLeaves> blocks;
  VarId final_gamma, final_beta;
};

EncoderLeaves encoder_leaves(Graph& g, const ParamStore& store, const EncoderConfig& cfg,
                             const std::string& prefix = "encoder.");

/// Bidirectional self-attention over x (T x d). key_mask marks real (non-pad)
/// positions; padded keys are excluded from every softmax.
VarId multi_head_attention(Graph& g, VarId x, const BlockLeaves& block, std::size_t heads,
                           const std::vector<std::uint8_t>& key_mask);

/// Pooled d-vector for one id sequence. Padding ids (0) are masked out of
/// attention and out of the mean-pool, so appending padding never changes the
/// result.
VarId encode(Graph& g, const EncoderLeaves& leaves, const EncoderConfig& cfg,
             const std::vector<std::size_t>& ids);

Tensor encode(const ParamStore& store, const EncoderConfig& cfg,
              const std::vector<std::size_t>& ids, const std::string& prefix = "encoder.");

/// Which encoder tensors train when only the last n blocks are tuned.
/// Blocks 1..L-n are frozen, blocks L-n+1..L train, embeddings are frozen,
/// the final LayerNorm always trains.
struct TrainabilityMask {
  std::size_t n = 0;
  std::vector<std::pair<std::string, bool>> flags;  // (name, trainable), insertion order
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
};

TrainabilityMask freeze_mask(const EncoderConfig& cfg, std::size_t n,
                             const std::string& prefix = "encoder.");

/// Applies the mask's flags to the store.
void apply_mask(ParamStore& store, const TrainabilityMask& mask);

/// Exact (total, trainable) scalar counts from the actual tensors. Throws if
/// the mask and the store disagree on the encoder tensor set.
std::pair<std::size_t, std::size_t> count_params(const ParamStore& store,
                                                 const TrainabilityMask& mask,
                                                 const std::string& prefix = "encoder.");

}  // namespace trace

#endif
