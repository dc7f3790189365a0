#include "trace/model.hpp"

#include <stdexcept>

namespace trace {

void ModelConfig::link(std::size_t d_img) {
  scorer.d = encoder.width;
  fusion.d_txt = encoder.width;
  fusion.d_img = d_img;
}

void ModelConfig::validate() const {
  encoder.validate();
  scorer.validate();
  fusion.validate();
  if (scorer.d != encoder.width)
    throw std::invalid_argument("model: scorer.d must equal encoder width");
  if (fusion.d_txt != encoder.width)
    throw std::invalid_argument("model: fusion.d_txt must equal encoder width");
  if (tau <= 0.0) throw std::invalid_argument("model: tau must be positive");
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("model: threshold must be in (0, 1)");
}

TraceModel TraceModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TraceModel m;
  m.config = cfg;
  init_encoder(m.params, cfg.encoder, derive_seed(seed, "encoder"));
  init_scorer(m.params, cfg.scorer, derive_seed(seed, "scorer"));
  init_fusion(m.params, cfg.fusion, derive_seed(seed, "fusion"));
  return m;
}

void TraceModel::set_trainable_layers(std::size_t n) {
  apply_mask(params, freeze_mask(config.encoder, n));
}

namespace {
struct CaptionPass {
  std::vector<VarId> features;  // K rank-1 d-vectors
  std::vector<VarId> scores;    // K rank-1 scalars
  VarId feature_matrix;         // K x d
  VarId score_vec;              // rank-1 length K
};

CaptionPass run_captions(Graph& g, const TraceModel& model, const Example& ex, RunMode mode,
                         RngStream& dropout_rng) {
  if (ex.captions.empty()) throw std::invalid_argument("model: example has no captions");
  if (ex.image_embedding.size() != model.config.fusion.d_img)
    throw std::invalid_argument("model: image embedding length " +
                                std::to_string(ex.image_embedding.size()) +
                                " does not match configured d_img " +
                                std::to_string(model.config.fusion.d_img));
  EncoderLeaves enc = encoder_leaves(g, model.params, model.config.encoder);
  ScorerLeaves sc = scorer_leaves(g, model.params);

  CaptionPass pass;
  for (const std::string& caption : ex.captions) {
    auto ids = tokenize(caption, model.config.encoder.max_len, model.config.encoder.vocab_size);
    VarId h = encode(g, enc, model.config.encoder, ids);
    pass.features.push_back(h);
    pass.scores.push_back(scorer_score(g, sc, model.config.scorer, h, mode, dropout_rng));
  }

  VarId flat = pass.features[0];
  for (std::size_t i = 1; i < pass.features.size(); ++i) flat = g.concat(flat, pass.features[i]);
  pass.feature_matrix =
      g.reshape(flat, {pass.features.size(), model.config.encoder.width});

  VarId svec = pass.scores[0];
  for (std::size_t i = 1; i < pass.scores.size(); ++i) svec = g.concat(svec, pass.scores[i]);
  pass.score_vec = svec;
  return pass;
}

VarId classify(Graph& g, const TraceModel& model, const Example& ex, VarId selected_feature) {
  FusionLeaves fl = fusion_leaves(g, model.params);
  VarId img = g.input(Tensor::vec(ex.image_embedding));
  VarId i_p = project(g, img, fl.img_w, fl.img_b);
  VarId t_p = project(g, selected_feature, fl.txt_w, fl.txt_b);
  auto [i_enh, t_enh] = enhance(g, fl, i_p, t_p);
  return fuse_and_classify(g, fl, i_enh, t_enh);
}
}  // namespace

TrainForward model_forward_train(Graph& g, const TraceModel& model, const Example& ex,
                                 RngStream& dropout_rng, RngStream& gumbel_rng) {
  CaptionPass pass = run_captions(g, model, ex, RunMode::train, dropout_rng);
  std::size_t k = ex.captions.size();

  std::vector<double> noise = sample_gumbel(k, gumbel_rng);
  VarId probs = g.softmax(
      g.affine(g.add(pass.score_vec, g.input(Tensor::vec(noise))), 1.0 / model.config.tau, 0.0));

  VarId selected = model.config.selection == SelectionMode::hard_st
                       ? g.select_st(pass.feature_matrix, probs)
                       : g.reshape(g.matmul(g.reshape(probs, {1, k}), pass.feature_matrix),
                                   {model.config.encoder.width});

  TrainForward out;
  out.p_hat = classify(g, model, ex, selected);
  out.loss_cls = bce_loss(g, out.p_hat, ex.label);
  out.loss_rel = rel_loss(g, probs, pass.score_vec, ex.label);
  out.loss_total = g.add(out.loss_cls, out.loss_rel);
  out.selection =
      train_select(g.value(pass.score_vec).values(), noise, model.config.tau);
  return out;
}

GradCheckReport model_gradient_check(const TraceModel& model, const std::vector<Example>& batch,
                                     std::uint64_t noise_seed, double fd_step) {
  if (batch.empty()) throw std::invalid_argument("model_gradient_check: empty batch");
  ParamStore work = model.params;
  LossFn fn = [&](const ParamStore& p, GradStore* gs) {
    TraceModel tmp;
    tmp.config = model.config;
    tmp.config.scorer.dropout_p = 0.0;
    tmp.params = p;
    Graph g;
    RngStream dropout(0);
    RngStream gumbel(noise_seed);
    VarId total = -1;
    for (const Example& ex : batch) {
      TrainForward fwd = model_forward_train(g, tmp, ex, dropout, gumbel);
      total = total < 0 ? fwd.loss_total : g.add(total, fwd.loss_total);
    }
    VarId loss = g.affine(total, 1.0 / static_cast<double>(batch.size()), 0.0);
    double value = g.scalar(loss);
    if (gs) {
      g.backward(loss);
      g.accumulate_leaf_grads(*gs);
    }
    return value;
  };
  return check_gradient(fn, work, fd_step);
}

EvalForward model_forward_eval(const TraceModel& model, const Example& ex) {
  Graph g;
  RngStream unused(0);
  CaptionPass pass = run_captions(g, model, ex, RunMode::eval, unused);

  EvalForward out;
  out.selection = eval_select(g.value(pass.score_vec).values());
  VarId selected = g.reshape(
      g.gather_rows(pass.feature_matrix, {out.selection.selected_index - 1}),
      {model.config.encoder.width});
  out.p_hat = g.scalar(classify(g, model, ex, selected));
  out.predicted = out.p_hat >= model.config.threshold ? 1 : 0;
  return out;
}

}  // namespace trace
