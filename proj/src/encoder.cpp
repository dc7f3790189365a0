#include "trace/encoder.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "trace/init.hpp"

namespace trace {

void EncoderConfig::validate() const {
  if (vocab_size < 3) throw std::invalid_argument("encoder vocab_size must be >= 3");
  if (max_len == 0 || width == 0 || num_heads == 0 || ffn_mult == 0)
    throw std::invalid_argument("encoder dims must be positive");
  if (width % num_heads != 0)
    throw std::invalid_argument("encoder width must be divisible by num_heads");
}

std::vector<std::size_t> tokenize(const std::string& text, std::size_t max_len,
                                  std::size_t vocab_size) {
  if (vocab_size < 3) throw std::invalid_argument("tokenize: vocab_size must be >= 3");
  std::vector<std::size_t> ids{1};  // begin marker

  auto flush = [&](const std::string& tok) {
    if (tok.empty()) return;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tok) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    ids.push_back(2 + static_cast<std::size_t>(h % (vocab_size - 2)));
  };

  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (c < 0x80 && std::isspace(c)) {
      flush(cur);
      cur.clear();
    } else if (c < 0x80 && !std::isalnum(c)) {
      // punctuation forms its own single-character token
      flush(cur);
      cur.clear();
      flush(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : raw);
    }
  }
  flush(cur);
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

namespace {
void add_ln_pair(ParamStore& store, const std::string& name, std::size_t width) {
  Tensor gamma({width});
  gamma.fill(1.0);
  store.add(name + ".gamma", std::move(gamma));
  store.add(name + ".beta", Tensor({width}));
}

std::string block_prefix(const std::string& prefix, std::size_t i) {
  return prefix + "block" + std::to_string(i) + ".";
}

// Tensor shapes per block, in registration order. Shared by init, the freeze
// mask, and the leaf builder so the three can never drift apart.
struct NamedShape {
  std::string name;
  std::vector<std::size_t> shape;
};

std::vector<NamedShape> block_shapes(const EncoderConfig& cfg, const std::string& bp) {
  std::size_t d = cfg.width, f = cfg.ffn_dim();
  return {
      {bp + "ln1.gamma", {d}},      {bp + "ln1.beta", {d}},
      {bp + "attn.wq", {d, d}},     {bp + "attn.bq", {d}},
      {bp + "attn.wk", {d, d}},     {bp + "attn.bk", {d}},
      {bp + "attn.wv", {d, d}},     {bp + "attn.bv", {d}},
      {bp + "attn.wo", {d, d}},     {bp + "attn.bo", {d}},
      {bp + "ln2.gamma", {d}},      {bp + "ln2.beta", {d}},
      {bp + "ffn.w_in", {d, f}},    {bp + "ffn.b_in", {f}},
      {bp + "ffn.w_out", {f, d}},   {bp + "ffn.b_out", {d}},
  };
}
}  // namespace

void init_encoder(ParamStore& store, const EncoderConfig& cfg, std::uint64_t seed,
                  const std::string& prefix) {
  cfg.validate();
  RngStream rng(seed);
  store.add(prefix + "tok_emb", uniform_tensor({cfg.vocab_size, cfg.width}, 0.1, rng),
            /*trainable=*/false);
  store.add(prefix + "pos_emb", uniform_tensor({cfg.max_len, cfg.width}, 0.1, rng),
            /*trainable=*/false);
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    for (const auto& [name, shape] : block_shapes(cfg, block_prefix(prefix, i))) {
      if (shape.size() == 2) {
        store.add(name, xavier_uniform(shape[0], shape[1], rng));
      } else if (name.find(".gamma") != std::string::npos) {
        Tensor t(shape);
        t.fill(1.0);
        store.add(name, std::move(t));
      } else {
        store.add(name, Tensor(shape));
      }
    }
  }
  add_ln_pair(store, prefix + "final_ln", cfg.width);
}

EncoderLeaves encoder_leaves(Graph& g, const ParamStore& store, const EncoderConfig& cfg,
                             const std::string& prefix) {
  EncoderLeaves l;
  l.tok_emb = g.param(store, prefix + "tok_emb");
  l.pos_emb = g.param(store, prefix + "pos_emb");
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    std::string bp = block_prefix(prefix, i);
    BlockLeaves b;
    b.ln1_gamma = g.param(store, bp + "ln1.gamma");
    b.ln1_beta = g.param(store, bp + "ln1.beta");
    b.wq = g.param(store, bp + "attn.wq");
    b.bq = g.param(store, bp + "attn.bq");
    b.wk = g.param(store, bp + "attn.wk");
    b.bk = g.param(store, bp + "attn.bk");
    b.wv = g.param(store, bp + "attn.wv");
    b.bv = g.param(store, bp + "attn.bv");
    b.wo = g.param(store, bp + "attn.wo");
    b.bo = g.param(store, bp + "attn.bo");
    b.ln2_gamma = g.param(store, bp + "ln2.gamma");
    b.ln2_beta = g.param(store, bp + "ln2.beta");
    b.ffn_w_in = g.param(store, bp + "ffn.w_in");
    b.ffn_b_in = g.param(store, bp + "ffn.b_in");
    b.ffn_w_out = g.param(store, bp + "ffn.w_out");
    b.ffn_b_out = g.param(store, bp + "ffn.b_out");
    l.blocks.push_back(b);
  }
  l.final_gamma = g.param(store, prefix + "final_ln.gamma");
  l.final_beta = g.param(store, prefix + "final_ln.beta");
  return l;
}

VarId multi_head_attention(Graph& g, VarId x, const BlockLeaves& block, std::size_t heads,
                           const std::vector<std::uint8_t>& key_mask) {
  const Tensor& tx = g.value(x);
  std::size_t d = tx.cols();
  if (d % heads != 0)
    throw std::invalid_argument("multi_head_attention: width not divisible by head count");
  std::size_t dh = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  VarId q = g.linear(x, block.wq, block.bq);
  VarId k = g.linear(x, block.wk, block.bk);
  VarId v = g.linear(x, block.wv, block.bv);

  VarId merged = -1;
  for (std::size_t h = 0; h < heads; ++h) {
    VarId qh = g.slice_cols(q, h * dh, dh);
    VarId kh = g.slice_cols(k, h * dh, dh);
    VarId vh = g.slice_cols(v, h * dh, dh);
    VarId logits = g.affine(g.matmul(qh, g.transpose(kh)), scale, 0.0);
    VarId attn = g.softmax_masked(logits, key_mask);
    VarId oh = g.matmul(attn, vh);
    merged = (h == 0) ? oh : g.concat(merged, oh);
  }
  return g.linear(merged, block.wo, block.bo);
}

VarId encode(Graph& g, const EncoderLeaves& leaves, const EncoderConfig& cfg,
             const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw std::invalid_argument("encode: empty id sequence");
  if (ids.size() > cfg.max_len)
    throw std::invalid_argument("encode: sequence longer than max_len");

  std::vector<std::uint8_t> real(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) real[t] = ids[t] != 0 ? 1 : 0;

  std::vector<std::size_t> positions(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) positions[t] = t;

  VarId x = g.add(g.gather_rows(leaves.tok_emb, ids), g.gather_rows(leaves.pos_emb, positions));
  for (const BlockLeaves& block : leaves.blocks) {
    VarId normed = g.layer_norm(x, block.ln1_gamma, block.ln1_beta);
    x = g.add(x, multi_head_attention(g, normed, block, cfg.num_heads, real));
    VarId normed2 = g.layer_norm(x, block.ln2_gamma, block.ln2_beta);
    VarId inner = g.gelu(g.linear(normed2, block.ffn_w_in, block.ffn_b_in));
    x = g.add(x, g.linear(inner, block.ffn_w_out, block.ffn_b_out));
  }
  x = g.layer_norm(x, leaves.final_gamma, leaves.final_beta);
  return g.masked_mean_rows(x, real);
}

Tensor encode(const ParamStore& store, const EncoderConfig& cfg,
              const std::vector<std::size_t>& ids, const std::string& prefix) {
  Graph g;
  EncoderLeaves leaves = encoder_leaves(g, store, cfg, prefix);
  return g.value(encode(g, leaves, cfg, ids));
}

TrainabilityMask freeze_mask(const EncoderConfig& cfg, std::size_t n, const std::string& prefix) {
  cfg.validate();
  if (n > cfg.num_layers)
    throw std::out_of_range("freeze_mask: n=" + std::to_string(n) + " exceeds layer count " +
                            std::to_string(cfg.num_layers));
  TrainabilityMask mask;
  mask.n = n;
  auto put = [&](const std::string& name, const std::vector<std::size_t>& shape, bool trainable) {
    std::size_t count = 1;
    for (std::size_t e : shape) count *= e;
    mask.flags.emplace_back(name, trainable);
    mask.total_params += count;
    if (trainable) mask.trainable_params += count;
  };
  put(prefix + "tok_emb", {cfg.vocab_size, cfg.width}, false);
  put(prefix + "pos_emb", {cfg.max_len, cfg.width}, false);
  std::size_t first_trainable = cfg.num_layers - n;
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    bool trainable = i >= first_trainable;
    for (const auto& [name, shape] : block_shapes(cfg, block_prefix(prefix, i)))
      put(name, shape, trainable);
  }
  put(prefix + "final_ln.gamma", {cfg.width}, true);
  put(prefix + "final_ln.beta", {cfg.width}, true);
  return mask;
}

void apply_mask(ParamStore& store, const TrainabilityMask& mask) {
  for (const auto& [name, trainable] : mask.flags) store.set_trainable(name, trainable);
}

std::pair<std::size_t, std::size_t> count_params(const ParamStore& store,
                                                 const TrainabilityMask& mask,
                                                 const std::string& prefix) {
  std::size_t total = 0, trainable = 0;
  std::size_t seen = 0;
  for (const auto& [name, flag] : mask.flags) {
    if (!store.has(name))
      throw std::invalid_argument("count_params: mask names missing tensor '" + name + "'");
    std::size_t sz = store.value(name).size();
    total += sz;
    if (flag) trainable += sz;
    ++seen;
  }
  std::size_t in_store = 0;
  for (const auto& e : store.entries())
    if (e.name.rfind(prefix, 0) == 0) ++in_store;
  if (in_store != seen)
    throw std::invalid_argument("count_params: store has " + std::to_string(in_store) +
                                " encoder tensors but mask covers " + std::to_string(seen));
  return {total, trainable};
}

}  // namespace trace
