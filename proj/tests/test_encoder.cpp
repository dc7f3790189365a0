#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "trace/encoder.hpp"
#include "trace/fusion.hpp"
#include "trace/gradcheck.hpp"

using namespace trace;

namespace {
EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.vocab_size = 64;
  cfg.max_len = 10;
  cfg.width = 8;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.ffn_mult = 2;
  return cfg;
}
}  // namespace

TEST_CASE("tokenize") {
  SUBCASE("empty string keeps only the begin marker") {
    CHECK(tokenize("", 16, 64) == std::vector<std::size_t>{1});
  }
  SUBCASE("case folding") {
    CHECK(tokenize("Hello", 16, 64) == tokenize("hello", 16, 64));
    CHECK(tokenize("HELLO WoRlD", 16, 64) == tokenize("hello world", 16, 64));
  }
  SUBCASE("deterministic across calls") {
    auto a = tokenize("the quick brown fox", 16, 4096);
    auto b = tokenize("the quick brown fox", 16, 4096);
    CHECK(a == b);
  }
  SUBCASE("punctuation splits and is kept as its own token") {
    auto ids = tokenize("a,b", 16, 4096);
    CHECK(ids.size() == 4);  // begin + a + , + b
    CHECK(ids == tokenize("a , b", 16, 4096));
  }
  SUBCASE("ids stay inside [2, vocab) and truncate to max_len") {
    auto ids = tokenize("one two three four five six seven eight", 4, 64);
    CHECK(ids.size() == 4);
    CHECK(ids[0] == 1);
    for (std::size_t i = 1; i < ids.size(); ++i) {
      CHECK(ids[i] >= 2);
      CHECK(ids[i] < 64);
    }
  }
}

TEST_CASE("multi_head_attention") {
  EncoderConfig cfg = tiny_config();
  ParamStore store;
  init_encoder(store, cfg, 11);

  SUBCASE("single token reduces to the O-projection of the V-projection") {
    Graph g;
    EncoderLeaves leaves = encoder_leaves(g, store, cfg);
    Tensor x({1, cfg.width});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i) - 0.3;
    VarId xin = g.input(x);
    VarId out = multi_head_attention(g, xin, leaves.blocks[0], cfg.num_heads, {1});
    VarId expected =
        g.linear(g.linear(xin, leaves.blocks[0].wv, leaves.blocks[0].bv), leaves.blocks[0].wo,
                 leaves.blocks[0].bo);
    for (std::size_t i = 0; i < cfg.width; ++i)
      CHECK(g.value(out)[i] == doctest::Approx(g.value(expected)[i]).epsilon(1e-12));
  }

  SUBCASE("one head with identity output projection equals the cross-attention kernel") {
    EncoderConfig cfg1 = cfg;
    cfg1.num_heads = 1;
    cfg1.num_layers = 1;
    ParamStore s1;
    init_encoder(s1, cfg1, 13);
    // identity O
    Tensor& wo = s1.value("encoder.block0.attn.wo");
    wo.fill(0.0);
    for (std::size_t i = 0; i < cfg1.width; ++i) wo.at(i, i) = 1.0;
    s1.value("encoder.block0.attn.bo").fill(0.0);

    Graph g;
    EncoderLeaves leaves = encoder_leaves(g, s1, cfg1);
    RngStream rng(5);
    Tensor x({3, cfg1.width});
    for (double& v : x.values()) v = 2.0 * rng.uniform() - 1.0;
    VarId xin = g.input(x);
    VarId mha = multi_head_attention(g, xin, leaves.blocks[0], 1, {1, 1, 1});

    VarId q = g.linear(xin, leaves.blocks[0].wq, leaves.blocks[0].bq);
    VarId k = g.linear(xin, leaves.blocks[0].wk, leaves.blocks[0].bk);
    VarId v = g.linear(xin, leaves.blocks[0].wv, leaves.blocks[0].bv);
    VarId ca = cross_attention(g, q, k, v);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(g.value(mha)[i] == doctest::Approx(g.value(ca)[i]).epsilon(1e-12));
  }

  SUBCASE("two tokens, width two, hand oracle") {
    EncoderConfig cfg2;
    cfg2.vocab_size = 8;
    cfg2.max_len = 4;
    cfg2.width = 2;
    cfg2.num_layers = 1;
    cfg2.num_heads = 1;
    cfg2.ffn_mult = 1;
    ParamStore s2;
    init_encoder(s2, cfg2, 1);
    s2.value("encoder.block0.attn.wq") = Tensor::matrix(2, 2, {1, 0, 0, 1});
    s2.value("encoder.block0.attn.wk") = Tensor::matrix(2, 2, {0, 1, 1, 0});
    s2.value("encoder.block0.attn.wv") = Tensor::matrix(2, 2, {1, 1, 0, 1});
    s2.value("encoder.block0.attn.wo") = Tensor::matrix(2, 2, {1, 0, 0, 1});
    s2.value("encoder.block0.attn.bq").fill(0.0);
    s2.value("encoder.block0.attn.bk").fill(0.0);
    s2.value("encoder.block0.attn.bv").fill(0.0);
    s2.value("encoder.block0.attn.bo").fill(0.0);

    Graph g;
    EncoderLeaves leaves = encoder_leaves(g, s2, cfg2);
    Tensor x = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    VarId out = multi_head_attention(g, g.input(x), leaves.blocks[0], 1, {1, 1});

    // by hand: q = x, k = x swapped cols, v = rows (1,1) and (0,1)
    // logits/sqrt(2): q0.k0 = 0, q0.k1 = 1, q1.k0 = 1, q1.k1 = 0
    double s = 1.0 / std::sqrt(2.0);
    double e0 = std::exp(0.0), e1 = std::exp(s);
    double a01 = e1 / (e0 + e1), a00 = e0 / (e0 + e1);
    // row 0 attends: a00*(1,1) + a01*(0,1) ; row 1: a01*(1,1) + a00*(0,1)
    CHECK(g.value(out).at(0, 0) == doctest::Approx(a00 * 1.0).epsilon(1e-12));
    CHECK(g.value(out).at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.value(out).at(1, 0) == doctest::Approx(a01 * 1.0).epsilon(1e-12));
    CHECK(g.value(out).at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("encode") {
  EncoderConfig cfg = tiny_config();
  ParamStore store;
  init_encoder(store, cfg, 19);

  SUBCASE("zero-layer config is the final norm of mean embeddings") {
    EncoderConfig cfg0 = cfg;
    cfg0.num_layers = 0;
    ParamStore s0;
    init_encoder(s0, cfg0, 3);
    auto ids = tokenize("alpha beta", cfg0.max_len, cfg0.vocab_size);
    Tensor got = encode(s0, cfg0, ids);
    CHECK(got.size() == cfg0.width);

    // oracle: token+position rows, final LayerNorm per row, then the mean
    Graph g;
    Tensor rows({ids.size(), cfg0.width});
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t c = 0; c < cfg0.width; ++c)
        rows.at(t, c) = s0.value("encoder.tok_emb").at(ids[t], c) +
                        s0.value("encoder.pos_emb").at(t, c);
    VarId normed = g.layer_norm(g.input(rows), g.param(s0, "encoder.final_ln.gamma"),
                                g.param(s0, "encoder.final_ln.beta"));
    VarId pooled = g.masked_mean_rows(normed, std::vector<std::uint8_t>(ids.size(), 1));
    for (std::size_t c = 0; c < cfg0.width; ++c)
      CHECK(got[c] == doctest::Approx(g.value(pooled)[c]).epsilon(1e-12));
  }

  SUBCASE("output length is the width for any input") {
    for (const char* text : {"x", "a b c d", "!!"}) {
      Tensor h = encode(store, cfg, tokenize(text, cfg.max_len, cfg.vocab_size));
      CHECK(h.size() == cfg.width);
      CHECK(h.all_finite());
    }
  }

  SUBCASE("word order changes the encoding across 20 seeds") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      ParamStore s;
      init_encoder(s, cfg, seed);
      Tensor ab = encode(s, cfg, tokenize("a b", cfg.max_len, cfg.vocab_size));
      Tensor ba = encode(s, cfg, tokenize("b a", cfg.max_len, cfg.vocab_size));
      double diff = 0.0;
      for (std::size_t i = 0; i < ab.size(); ++i) diff = std::max(diff, std::fabs(ab[i] - ba[i]));
      CHECK(diff > 1e-12);
    }
  }

  SUBCASE("padding invariance") {
    auto ids = tokenize("gamma delta epsilon", cfg.max_len, cfg.vocab_size);
    auto padded = ids;
    padded.push_back(0);
    padded.push_back(0);
    Tensor a = encode(store, cfg, ids);
    Tensor b = encode(store, cfg, padded);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::fabs(a[i] - b[i]) < 1e-12);
  }

  SUBCASE("empty ids are rejected") {
    CHECK_THROWS_AS(encode(store, cfg, {}), std::invalid_argument);
    std::vector<std::size_t> too_long(cfg.max_len + 1, 2);
    CHECK_THROWS_AS(encode(store, cfg, too_long), std::invalid_argument);
  }
}

TEST_CASE("freeze_mask and count_params") {
  EncoderConfig cfg;  // spec-scale default shape
  cfg.vocab_size = 256;
  cfg.max_len = 16;
  cfg.width = 64;
  cfg.num_layers = 6;
  cfg.num_heads = 4;
  cfg.ffn_mult = 4;

  ParamStore store;
  init_encoder(store, cfg, 7);

  std::size_t d = cfg.width;
  std::size_t per_block = 4 * (d * d) + 4 * d + 2 * (2 * d) + d * 4 * d + 4 * d + 4 * d * d + d;

  SUBCASE("n=0 trains only the final LayerNorm") {
    TrainabilityMask mask = freeze_mask(cfg, 0);
    CHECK(mask.trainable_params == 2 * d);
    auto [total, trainable] = count_params(store, mask);
    CHECK(total == mask.total_params);
    CHECK(trainable == 2 * d);
  }
  SUBCASE("n=L trains every block") {
    TrainabilityMask mask = freeze_mask(cfg, cfg.num_layers);
    CHECK(mask.trainable_params == cfg.num_layers * per_block + 2 * d);
  }
  SUBCASE("n=4 of 6: trainable block params equal 4 per-block counts") {
    TrainabilityMask mask = freeze_mask(cfg, 4);
    CHECK(mask.trainable_params - 2 * d == 4 * per_block);

    // independent shape-walking oracle over the actual store
    std::size_t walked = 0;
    for (const auto& e : store.entries()) {
      for (int b = 2; b < 6; ++b) {
        if (e.name.rfind("encoder.block" + std::to_string(b) + ".", 0) == 0)
          walked += e.value.size();
      }
    }
    CHECK(walked == 4 * per_block);
    auto [total, trainable] = count_params(store, mask);
    CHECK(trainable == walked + 2 * d);
    CHECK(total == store.total_scalars());
  }
  SUBCASE("trainable count is strictly increasing in n") {
    std::size_t prev = 0;
    for (std::size_t n = 0; n <= cfg.num_layers; ++n) {
      TrainabilityMask mask = freeze_mask(cfg, n);
      bool increased = mask.trainable_params > prev;
      CHECK(increased);
      prev = mask.trainable_params;
    }
  }
  SUBCASE("n beyond L is a range error") {
    CHECK_THROWS_AS(freeze_mask(cfg, cfg.num_layers + 1), std::out_of_range);
  }
  SUBCASE("mask against a mismatched store is an error") {
    EncoderConfig other = cfg;
    other.num_layers = 3;
    ParamStore store3;
    init_encoder(store3, other, 7);
    TrainabilityMask mask = freeze_mask(cfg, 2);
    CHECK_THROWS_AS(count_params(store3, mask), std::invalid_argument);
  }
  SUBCASE("mask partitions embeddings frozen, final norm trainable") {
    TrainabilityMask mask = freeze_mask(cfg, 3);
    apply_mask(store, mask);
    CHECK_FALSE(store.trainable("encoder.tok_emb"));
    CHECK_FALSE(store.trainable("encoder.pos_emb"));
    CHECK(store.trainable("encoder.final_ln.gamma"));
    CHECK_FALSE(store.trainable("encoder.block2.attn.wq"));
    CHECK(store.trainable("encoder.block3.attn.wq"));
  }
}

TEST_CASE("encode gradient passes the finite-difference check on a 3-token input") {
  EncoderConfig cfg;
  cfg.vocab_size = 32;
  cfg.max_len = 6;
  cfg.width = 4;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.ffn_mult = 2;
  ParamStore store;
  init_encoder(store, cfg, 29);
  auto ids = tokenize("one two", cfg.max_len, cfg.vocab_size);  // begin + 2 tokens
  REQUIRE(ids.size() == 3);

  LossFn fn = [&](const ParamStore& p, GradStore* gs) {
    Graph g;
    EncoderLeaves leaves = encoder_leaves(g, p, cfg);
    VarId h = encode(g, leaves, cfg, ids);
    VarId loss = g.sum(g.mul(h, h));
    if (gs) {
      g.backward(loss);
      g.accumulate_leaf_grads(*gs);
    }
    return g.scalar(loss);
  };
  GradCheckReport report = check_gradient(fn, store);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}
