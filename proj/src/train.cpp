#include "trace/train.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "trace/graph.hpp"

namespace trace {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (accum_target == 0 || accum_target % batch_size != 0)
    throw std::invalid_argument("train: accum_target must be a positive multiple of batch_size");
  if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be positive");
  if (min_delta < 0.0) throw std::invalid_argument("train: min_delta must be nonnegative");
  if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be positive");
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params, const GradStore& grads) {
  if (slots_.empty()) {
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      slots_.push_back(e.name);
      m_.push_back(Tensor::zeros_like(e.value));
      v_.push_back(Tensor::zeros_like(e.value));
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    Tensor& value = params.value(slots_[s]);
    const Tensor* g = grads.find(slots_[s]);
    for (std::size_t i = 0; i < value.size(); ++i) {
      double gi = g ? (*g)[i] : 0.0;
      m_[s][i] = beta1_ * m_[s][i] + (1.0 - beta1_) * gi;
      v_[s][i] = beta2_ * v_[s][i] + (1.0 - beta2_) * gi * gi;
      double mhat = m_[s][i] / bc1;
      double vhat = v_[s][i] / bc2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {
std::string param_norm_summary(const ParamStore& params) {
  double total = 0.0, worst = -1.0;
  std::string worst_name;
  for (const auto& e : params.entries()) {
    double n2 = 0.0;
    for (double v : e.value.values()) n2 += v * v;
    total += n2;
    if (n2 > worst) {
      worst = n2;
      worst_name = e.name;
    }
  }
  return "total parameter L2 norm " + std::to_string(std::sqrt(total)) + ", largest tensor " +
         worst_name + " (" + std::to_string(std::sqrt(std::max(worst, 0.0))) + ")";
}

std::uint64_t fingerprint_encoder_blocks(const TraceModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : model.params.entries()) {
    if (e.name.rfind("encoder.block", 0) != 0) continue;
    for (double v : e.value.values()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}
}  // namespace

TrainRun train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
               const Dataset& val_set) {
  cfg.validate();
  if (train_set.examples.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.examples.empty()) throw std::invalid_argument("train: empty validation set");

  TrainRun run;
  run.config = cfg;
  run.model = TraceModel::init(model_cfg, derive_seed(cfg.seed, "init"));
  if (cfg.encoder_n) run.model.set_trainable_layers(*cfg.encoder_n);

  RngStream data_rng(derive_seed(cfg.seed, "data"));
  RngStream dropout_rng(derive_seed(cfg.seed, "dropout"));
  RngStream gumbel_rng(derive_seed(cfg.seed, "gumbel"));

  Adam opt(cfg.learning_rate);
  ParamStore best_params = run.model.params;

  double best_f1 = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;

  std::vector<std::size_t> order(train_set.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(data_rng.uniform() * static_cast<double>(i));
        std::swap(order[i - 1], order[j]);
      }
    }

    GradStore grads;
    std::size_t accumulated = 0;
    double sum_total = 0.0, sum_cls = 0.0, sum_rel = 0.0;

    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const Example& ex = train_set.examples[order[pos]];
      Graph g;
      TrainForward fwd = model_forward_train(g, run.model, ex, dropout_rng, gumbel_rng);
      double l_total = g.scalar(fwd.loss_total);
      if (!std::isfinite(l_total))
        throw TrainDivergedError(epoch, pos / cfg.batch_size,
                                 "loss " + std::to_string(l_total) + "; " +
                                     param_norm_summary(run.model.params));
      sum_total += l_total;
      sum_cls += g.scalar(fwd.loss_cls);
      sum_rel += g.scalar(fwd.loss_rel);

      g.backward(cfg.use_rel_loss ? fwd.loss_total : fwd.loss_cls);
      g.accumulate_leaf_grads(grads);
      ++accumulated;

      bool flush = accumulated == cfg.accum_target || pos + 1 == order.size();
      if (flush) {
        grads.scale(1.0 / static_cast<double>(accumulated));
        opt.step(run.model.params, grads);
        grads.clear();
        accumulated = 0;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    double n = static_cast<double>(order.size());
    stats.train_loss_total = sum_total / n;
    stats.train_loss_cls = sum_cls / n;
    stats.train_loss_rel = sum_rel / n;
    stats.val = evaluate(run.model, val_set, run.model.config.threshold);

    if (stats.val.macro_f1 > best_f1 + cfg.min_delta) {
      best_f1 = stats.val.macro_f1;
      run.best_epoch = epoch;
      best_params = run.model.params;
      epochs_since_best = 0;
      stats.is_best = true;
    } else {
      ++epochs_since_best;
    }
    run.history.push_back(stats);

    if (epochs_since_best >= cfg.patience) {
      run.early_stopped = true;
      break;
    }
  }

  run.best_val_f1 = best_f1;
  run.model.params = best_params;
  return run;
}

std::vector<SweepRow> layer_sweep(const ModelConfig& model_cfg, const TrainConfig& base,
                                  const std::vector<std::size_t>& n_values,
                                  const Dataset& train_set, const Dataset& val_set,
                                  const Dataset* test_set) {
  std::vector<SweepRow> rows;
  for (std::size_t n : n_values) {
    SweepRow row;
    row.n = n;
    try {
      TrainConfig cfg = base;
      cfg.encoder_n = n;
      row.init_fingerprint =
          fingerprint_encoder_blocks(TraceModel::init(model_cfg, derive_seed(cfg.seed, "init")));
      TrainRun run = train(model_cfg, cfg, train_set, val_set);
      row.macro_f1 = test_set ? evaluate(run.model, *test_set, run.model.config.threshold).macro_f1
                              : run.best_val_f1;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace trace
