#ifndef TRACE_DATASET_HPP
#define TRACE_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace trace {

/// One meme instance. Caption 1 is the original meme text; captions 2..K are
/// generated candidates, in file order. signal_index is the 1-based hidden
/// ground-truth caption for synthetic data (0 when absent).
struct Example {
  std::string id;
  int label = 0;  // 1 = hateful
  std::vector<double> image_embedding;
  std::vector<std::string> captions;
  int signal_index = 0;
};

struct Dataset {
  std::size_t d_img = 0;
  std::vector<Example> examples;
};

/// Line-delimited JSON: a {"version":1,"d_img":N} header line, then one
/// object per example. Each malformed-input class raises a distinct
/// diagnostic naming the offending line.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

struct SyntheticSpec {
  std::size_t count = 400;  // must be even; labels alternate 0/1
  std::size_t d_img = 64;
  std::size_t k = 3;          // captions per example, >= 2
  double alpha = 2.0;         // image signal strength for label-1 examples
  std::uint64_t seed = 42;
};

/// Deterministic synthetic corpus. Image embeddings are standard normal, with
/// alpha times a fixed unit direction added for label-1 examples. Captions are
/// 6-12 benign words; each label-1 example hides 3 signal-list words inside
/// exactly one caption and records that caption in signal_index.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Word lists used by gen_synthetic, exposed for the scanning oracle in tests.
const std::vector<std::string>& benign_words();
const std::vector<std::string>& signal_words();

/// Contiguous split preserving order; sizes must sum to <= examples.size().
std::vector<Dataset> split_dataset(const Dataset& ds, const std::vector<std::size_t>& sizes);

}  // namespace trace

#endif
