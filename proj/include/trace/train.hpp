#ifndef TRACE_TRAIN_HPP
#define TRACE_TRAIN_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trace/dataset.hpp"
#include "trace/metrics.hpp"
#include "trace/model.hpp"

namespace trace {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t accum_target = 512;  // examples per optimizer step; multiple of batch_size
  double learning_rate = 1e-4;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  std::uint64_t seed = 42;
  // Trainable trailing encoder blocks; nullopt trains with no mask at all
  // (equivalent to n = L by construction, asserted in tests).
  std::optional<std::size_t> encoder_n = 4;
  bool use_rel_loss = true;  // false = classification-loss-only ablation
  bool shuffle = true;

  void validate() const;
};

/// Thrown when the training loss goes non-finite; carries the diagnostics the
/// abort contract requires.
class TrainDivergedError : public std::runtime_error {
 public:
  TrainDivergedError(std::size_t epoch, std::size_t batch, const std::string& detail)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + detail),
        epoch(epoch),
        batch(batch) {}
  std::size_t epoch, batch;
};

/// Adam over the trainable entries of a ParamStore. State is laid out in
/// store insertion order; missing gradients count as zero.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params, const GradStore& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
  std::vector<std::string> slots_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss_total = 0.0;
  double train_loss_cls = 0.0;
  double train_loss_rel = 0.0;
  Metrics val;
  bool is_best = false;
};

struct TrainRun {
  TrainConfig config;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_f1 = 0.0;
  bool early_stopped = false;
  TraceModel model;  // parameters restored to the best epoch
};

/// Deterministic training loop: data order, init, dropout, and Gumbel noise
/// all derive from config.seed. Gradients accumulate over
/// accum_target/batch_size micro-batches (mean over the accumulated
/// examples) before each Adam step. Early stopping watches validation
/// macro-F1 with the configured patience and min-delta.
TrainRun train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
               const Dataset& val_set);

struct SweepRow {
  std::size_t n = 0;
  double macro_f1 = 0.0;
  bool ok = false;
  std::string error;
  std::uint64_t init_fingerprint = 0;  // hash of the shared initial encoder blocks
};

/// One training run per n with identical seeds and data. macro_f1 is measured
/// on test_set when given, else on the best validation epoch. A failed cell
/// carries its error and the sweep continues.
std::vector<SweepRow> layer_sweep(const ModelConfig& model_cfg, const TrainConfig& base,
                                  const std::vector<std::size_t>& n_values,
                                  const Dataset& train_set, const Dataset& val_set,
                                  const Dataset* test_set = nullptr);

}  // namespace trace

#endif
