// Command-line surface for the caption-aware classifier: synthetic data,
// training, evaluation, explanation reports, gradient checking, paired
// significance tests, and the layer sweep. Machine-readable output goes to
// stdout, diagnostics to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trace/checkpoint.hpp"
#include "trace/dataset.hpp"
#include "trace/explain.hpp"
#include "trace/metrics.hpp"
#include "trace/model.hpp"
#include "trace/train.hpp"

namespace {

using namespace trace;

// ---------------------------------------------------------------------------
// Flat key = value configuration file, '#' comments, unknown keys rejected.
// Precedence: command-line flag > config file > built-in default.
// ---------------------------------------------------------------------------

const std::vector<std::string> kKnownKeys = {
    "seed",          "batch_size",     "accum_target",   "learning_rate", "max_epochs",
    "patience",      "min_delta",      "tau",            "selection",     "dropout",
    "threshold",     "use_rel_loss",   "encoder.n",      "encoder.vocab_size",
    "encoder.max_len", "encoder.width", "encoder.layers", "encoder.heads", "encoder.ffn_mult",
    "scorer.h1",     "scorer.h2",      "fusion.dim"};

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = line.substr(0, line.find('#'));
    auto first = stripped.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" +
                                  key + "'");
    kv[key] = value;
  }
  return kv;
}

struct Settings {
  ModelConfig model;
  TrainConfig train;

  void apply(const std::map<std::string, std::string>& kv) {
    auto u64 = [&](const char* k, auto& dst) {
      auto it = kv.find(k);
      if (it != kv.end()) dst = static_cast<std::decay_t<decltype(dst)>>(std::stoull(it->second));
    };
    auto f64 = [&](const char* k, auto& dst) {
      auto it = kv.find(k);
      if (it != kv.end()) dst = std::stod(it->second);
    };
    u64("seed", train.seed);
    u64("batch_size", train.batch_size);
    u64("accum_target", train.accum_target);
    f64("learning_rate", train.learning_rate);
    u64("max_epochs", train.max_epochs);
    u64("patience", train.patience);
    f64("min_delta", train.min_delta);
    f64("tau", model.tau);
    f64("dropout", model.scorer.dropout_p);
    f64("threshold", model.threshold);
    if (auto it = kv.find("selection"); it != kv.end()) {
      if (it->second == "soft") model.selection = SelectionMode::soft;
      else if (it->second == "hard_st") model.selection = SelectionMode::hard_st;
      else throw std::invalid_argument("selection must be 'soft' or 'hard_st'");
    }
    if (auto it = kv.find("use_rel_loss"); it != kv.end())
      train.use_rel_loss = it->second == "true" || it->second == "1";
    if (auto it = kv.find("encoder.n"); it != kv.end())
      train.encoder_n = static_cast<std::size_t>(std::stoull(it->second));
    u64("encoder.vocab_size", model.encoder.vocab_size);
    u64("encoder.max_len", model.encoder.max_len);
    u64("encoder.width", model.encoder.width);
    u64("encoder.layers", model.encoder.num_layers);
    u64("encoder.heads", model.encoder.num_heads);
    u64("encoder.ffn_mult", model.encoder.ffn_mult);
    u64("scorer.h1", model.scorer.h1);
    u64("scorer.h2", model.scorer.h2);
    u64("fusion.dim", model.fusion.dim);
  }
};

// Train-config flags shared by train and sweep. Each override applies only
// when the user passed it, preserving precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size, accum_target, max_epochs, patience, encoder_n;
  std::optional<double> learning_rate, min_delta, tau, dropout, threshold;
  std::optional<std::string> selection;
  bool rel_on = false, rel_off = false;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "master seed fanned out to all sub-streams");
    cmd->add_option("--batch-size", batch_size, "micro-batch size");
    cmd->add_option("--accum-target", accum_target, "examples accumulated per optimizer step");
    cmd->add_option("--learning-rate", learning_rate, "Adam learning rate");
    cmd->add_option("--max-epochs", max_epochs, "maximum training epochs");
    cmd->add_option("--patience", patience, "early-stop patience (epochs)");
    cmd->add_option("--min-delta", min_delta, "early-stop minimum improvement");
    cmd->add_option("--tau", tau, "Gumbel-softmax temperature");
    cmd->add_option("--selection", selection, "caption selection: soft | hard_st");
    cmd->add_option("--dropout", dropout, "scorer dropout rate");
    cmd->add_option("--threshold", threshold, "decision threshold");
    cmd->add_option("--encoder-n", encoder_n, "trainable trailing encoder blocks");
    cmd->add_flag("--rel-loss", rel_on, "optimize classification + relevance loss (default)");
    cmd->add_flag("--no-rel-loss", rel_off, "optimize the classification loss only");
  }

  void apply(Settings& s) const {
    if (seed) s.train.seed = *seed;
    if (batch_size) s.train.batch_size = *batch_size;
    if (accum_target) s.train.accum_target = *accum_target;
    if (learning_rate) s.train.learning_rate = *learning_rate;
    if (max_epochs) s.train.max_epochs = *max_epochs;
    if (patience) s.train.patience = *patience;
    if (min_delta) s.train.min_delta = *min_delta;
    if (tau) s.model.tau = *tau;
    if (dropout) s.model.scorer.dropout_p = *dropout;
    if (threshold) s.model.threshold = *threshold;
    if (encoder_n) s.train.encoder_n = *encoder_n;
    if (selection) {
      if (*selection == "soft") s.model.selection = SelectionMode::soft;
      else if (*selection == "hard_st") s.model.selection = SelectionMode::hard_st;
      else throw std::invalid_argument("selection must be 'soft' or 'hard_st'");
    }
    if (rel_off) s.train.use_rel_loss = false;
    else if (rel_on) s.train.use_rel_loss = true;
  }
};

Settings make_settings(const std::string& config_path, const Overrides& over) {
  Settings s;
  if (!config_path.empty()) s.apply(read_config_file(config_path));
  over.apply(s);
  return s;
}

std::string metrics_csv(const Metrics& m, const std::optional<double>& sel_acc) {
  std::ostringstream os;
  os << "accuracy,macro_precision,macro_recall,macro_f1,tp,fp,fn,tn,threshold,selection_accuracy\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu,%zu,%.4f,", m.accuracy,
                m.macro_precision, m.macro_recall, m.macro_f1, m.tp, m.fp, m.fn, m.tn,
                m.threshold);
  os << buf;
  if (sel_acc) {
    std::snprintf(buf, sizeof(buf), "%.6f", *sel_acc);
    os << buf;
  }
  os << '\n';
  return os.str();
}

std::string history_csv(const TrainRun& run) {
  std::ostringstream os;
  os << "epoch,train_loss_total,train_loss_cls,train_loss_rel,val_accuracy,val_macro_precision,"
        "val_macro_recall,val_macro_f1,is_best\n";
  for (const EpochStats& e : run.history) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.6f,%.6f,%.6f,%.6f,%d\n", e.epoch,
                  e.train_loss_total, e.train_loss_cls, e.train_loss_rel, e.val.accuracy,
                  e.val.macro_precision, e.val.macro_recall, e.val.macro_f1, e.is_best ? 1 : 0);
    os << buf;
  }
  return os.str();
}

int run_synth(std::size_t count, std::size_t d_img, std::size_t k, double alpha,
              std::uint64_t seed, const std::string& out, const std::string& split) {
  SyntheticSpec spec;
  spec.count = count;
  spec.d_img = d_img;
  spec.k = k;
  spec.alpha = alpha;
  spec.seed = seed;
  Dataset ds = gen_synthetic(spec);
  if (split.empty()) {
    save_dataset(ds, out);
    std::cerr << "wrote " << ds.examples.size() << " examples to " << out << "\n";
    return 0;
  }
  std::vector<std::size_t> sizes;
  std::stringstream ss(split);
  std::string part;
  while (std::getline(ss, part, ',')) sizes.push_back(std::stoull(part));
  auto parts = split_dataset(ds, sizes);
  const char* suffix[] = {"train", "val", "test"};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::string name = out + "-" + (i < 3 ? suffix[i] : std::to_string(i)) + ".jsonl";
    save_dataset(parts[i], name);
    std::cerr << "wrote " << parts[i].examples.size() << " examples to " << name << "\n";
  }
  return 0;
}

int run_train(const Settings& s, const std::string& dataset, const std::string& val_dataset,
              const std::string& checkpoint, const std::string& out) {
  Dataset train_set = load_dataset(dataset);
  Dataset val_set = load_dataset(val_dataset);
  ModelConfig mc = s.model;
  mc.link(train_set.d_img);
  TrainRun run = train(mc, s.train, train_set, val_set);
  std::cerr << "trained " << run.history.size() << " epochs, best epoch " << run.best_epoch
            << " (val macro-F1 " << run.best_val_f1 << ")"
            << (run.early_stopped ? ", early-stopped" : "") << "\n";
  if (!checkpoint.empty()) {
    save_checkpoint(run.model, checkpoint, s.train.seed);
    std::cerr << "checkpoint written to " << checkpoint << "\n";
  }
  std::string table = history_csv(run);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot write history file: " + out);
    f << table;
  }
  std::cout << table;
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset, double threshold,
             bool threshold_set) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  Dataset ds = load_dataset(dataset);
  double thr = threshold_set ? threshold : loaded.model.config.threshold;
  Metrics m = evaluate(loaded.model, ds, thr);
  std::optional<double> sel_acc;
  bool has_signal = false;
  for (const Example& ex : ds.examples)
    if (ex.label == 1 && ex.signal_index > 0) has_signal = true;
  if (has_signal) sel_acc = selection_accuracy(loaded.model, ds);
  std::cout << metrics_csv(m, sel_acc);
  return 0;
}

int run_explain(const std::string& checkpoint, const std::string& dataset, const std::string& id,
                bool render) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  Dataset ds = load_dataset(dataset);
  bool found = false;
  for (const Example& ex : ds.examples) {
    if (!id.empty() && ex.id != id) continue;
    found = true;
    Explanation e = explain(loaded.model, ex);
    if (render) {
      std::cout << "Image " << e.id << ":\n" << render_text(e) << "\n";
    } else {
      std::cout << explanation_to_json(e) << "\n";
    }
  }
  if (!found) throw std::invalid_argument(id.empty() ? "dataset is empty"
                                                     : "no example with id '" + id + "'");
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  // Default toy model: small enough that central differences over every
  // trainable scalar finish in seconds.
  ModelConfig mc;
  mc.encoder = {/*vocab_size=*/64, /*max_len=*/16, /*width=*/8, /*num_layers=*/1,
                /*num_heads=*/2, /*ffn_mult=*/2};
  mc.scorer.h1 = 8;
  mc.scorer.h2 = 4;
  mc.fusion.dim = 8;
  SyntheticSpec spec;
  spec.count = 2;
  spec.d_img = 6;
  spec.k = 3;
  spec.alpha = 1.0;
  spec.seed = seed;
  Dataset ds = gen_synthetic(spec);
  mc.link(ds.d_img);
  TraceModel model = TraceModel::init(mc, derive_seed(seed, "init"));
  GradCheckReport report =
      model_gradient_check(model, ds.examples, derive_seed(seed, "gumbel"));
  char buf[256];
  std::snprintf(buf, sizeof(buf), "max relative error: %.3e (parameter %s[%zu], analytic %.6e, "
                                  "central difference %.6e, %zu scalars checked)\n",
                report.max_rel_error, report.worst_param.c_str(), report.worst_index,
                report.worst_analytic, report.worst_numeric, report.checked);
  std::cout << buf;
  return report.ok(1e-4) ? 0 : 1;
}

int run_mcnemar(std::size_t n10, std::size_t n01) {
  McNemarResult r = mcnemar(n10, n01);
  std::cout << "n10,n01,statistic,p_value\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.4f,%.6g\n", r.n10, r.n01, r.statistic, r.p_value);
  std::cout << buf;
  return 0;
}

int run_sweep(const Settings& s, const std::string& dataset, const std::string& val_dataset,
              const std::string& test_dataset, const std::string& n_list,
              const std::string& out) {
  Dataset train_set = load_dataset(dataset);
  Dataset val_set = load_dataset(val_dataset);
  std::optional<Dataset> test_set;
  if (!test_dataset.empty()) test_set = load_dataset(test_dataset);

  std::vector<std::size_t> n_values;
  std::stringstream ss(n_list);
  std::string part;
  while (std::getline(ss, part, ',')) n_values.push_back(std::stoull(part));
  if (n_values.empty()) throw std::invalid_argument("sweep: --n-list is empty");

  ModelConfig mc = s.model;
  mc.link(train_set.d_img);
  auto rows = layer_sweep(mc, s.train, n_values, train_set, val_set,
                          test_set ? &*test_set : nullptr);
  std::ostringstream table;
  table << "n,macro_f1\n";
  for (const SweepRow& row : rows) {
    if (row.ok) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", row.n, row.macro_f1);
      table << buf;
    } else {
      std::cerr << "sweep cell n=" << row.n << " failed: " << row.error << "\n";
      table << row.n << ",\n";
    }
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot write sweep file: " + out);
    f << table.str();
  }
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caption-aware hateful-meme classification head"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "flat key = value configuration file")
      ->configurable(false);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::size_t sy_count = 400, sy_dimg = 64, sy_k = 3;
  double sy_alpha = 2.0;
  std::uint64_t sy_seed = 42;
  std::string sy_out, sy_split;
  synth->add_option("--count", sy_count, "number of examples (even)");
  synth->add_option("--d-img", sy_dimg, "image embedding width");
  synth->add_option("--k", sy_k, "captions per example");
  synth->add_option("--alpha", sy_alpha, "image signal strength");
  synth->add_option("--seed", sy_seed, "generator seed");
  synth->add_option("--out", sy_out, "output path (or prefix with --split)")->required();
  synth->add_option("--split", sy_split, "comma-separated split sizes, e.g. 400,100,100");

  // train
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string tr_dataset, tr_val, tr_ckpt, tr_out;
  Overrides tr_over;
  tr->add_option("--dataset", tr_dataset, "training dataset")->required();
  tr->add_option("--val-dataset", tr_val, "validation dataset")->required();
  tr->add_option("--checkpoint", tr_ckpt, "checkpoint output path");
  tr->add_option("--out", tr_out, "history table output path (CSV)");
  tr_over.add_flags(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_dataset;
  double ev_threshold = 0.5;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--dataset", ev_dataset, "dataset to evaluate")->required();
  auto* ev_thr_opt = ev->add_option("--threshold", ev_threshold, "decision threshold");

  // explain
  auto* ex = app.add_subcommand("explain", "per-example caption score reports");
  std::string ex_ckpt, ex_dataset, ex_id;
  bool ex_render = false;
  ex->add_option("--checkpoint", ex_ckpt, "checkpoint path")->required();
  ex->add_option("--dataset", ex_dataset, "dataset with examples to explain")->required();
  ex->add_option("--id", ex_id, "only the example with this id");
  ex->add_flag("--render", ex_render, "human-readable rendering instead of JSON");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full gradient");
  std::uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "toy model seed");

  // mcnemar
  auto* mc = app.add_subcommand("mcnemar", "paired significance test from disagreement counts");
  std::size_t mc_n10 = 0, mc_n01 = 0;
  mc->add_option("--n10", mc_n10, "model 1 right, model 2 wrong")->required();
  mc->add_option("--n01", mc_n01, "model 1 wrong, model 2 right")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "train once per n and tabulate macro-F1");
  std::string sw_dataset, sw_val, sw_test, sw_nlist = "0,1,2,4,6", sw_out;
  Overrides sw_over;
  sw->add_option("--dataset", sw_dataset, "training dataset")->required();
  sw->add_option("--val-dataset", sw_val, "validation dataset")->required();
  sw->add_option("--test-dataset", sw_test, "test dataset (sweep metric when given)");
  sw->add_option("--n-list", sw_nlist, "comma-separated n values");
  sw->add_option("--out", sw_out, "sweep table output path (CSV)");
  sw_over.add_flags(sw);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return run_synth(sy_count, sy_dimg, sy_k, sy_alpha, sy_seed, sy_out,
                                          sy_split);
    if (tr->parsed()) return run_train(make_settings(config_path, tr_over), tr_dataset, tr_val,
                                       tr_ckpt, tr_out);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_dataset, ev_threshold, ev_thr_opt->count() > 0);
    if (ex->parsed()) return run_explain(ex_ckpt, ex_dataset, ex_id, ex_render);
    if (gc->parsed()) return run_gradcheck(gc_seed);
    if (mc->parsed()) return run_mcnemar(mc_n10, mc_n01);
    if (sw->parsed()) return run_sweep(make_settings(config_path, sw_over), sw_dataset, sw_val,
                                       sw_test, sw_nlist, sw_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
