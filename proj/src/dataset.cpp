#include "trace/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "trace/rng.hpp"

namespace trace {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::invalid_argument("dataset line " + std::to_string(line) + ": " + what);
}

json parse_line(std::size_t line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    fail(line_no, std::string("parse error: ") + e.what());
  }
}

const json& need(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(line_no, std::string("missing field '") + key + "'");
  return *it;
}
}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file: " + path);

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj = parse_line(line_no, line);

    if (line_no == 1) {
      if (!obj.is_object()) fail(line_no, "header must be an object");
      int version = need(obj, "version", line_no).get<int>();
      if (version != 1) fail(line_no, "unsupported version " + std::to_string(version));
      std::size_t d = need(obj, "d_img", line_no).get<std::size_t>();
      if (d == 0) fail(line_no, "d_img must be positive");
      ds.d_img = d;
      continue;
    }

    Example ex;
    ex.id = need(obj, "id", line_no).get<std::string>();
    const json& jlabel = need(obj, "label", line_no);
    if (!jlabel.is_number_integer() || (jlabel.get<int>() != 0 && jlabel.get<int>() != 1))
      fail(line_no, "label must be 0 or 1 (got " + jlabel.dump() + ")");
    ex.label = jlabel.get<int>();

    const json& jemb = need(obj, "image_embedding", line_no);
    if (!jemb.is_array()) fail(line_no, "image_embedding must be an array");
    ex.image_embedding = jemb.get<std::vector<double>>();
    if (ex.image_embedding.size() != ds.d_img)
      fail(line_no, "image_embedding length " + std::to_string(ex.image_embedding.size()) +
                        " differs from header d_img " + std::to_string(ds.d_img));

    const json& jcaps = need(obj, "captions", line_no);
    if (!jcaps.is_array() || jcaps.empty()) fail(line_no, "captions must be a non-empty array");
    ex.captions = jcaps.get<std::vector<std::string>>();

    if (obj.contains("signal_index")) ex.signal_index = obj["signal_index"].get<int>();
    ds.examples.push_back(std::move(ex));
  }
  if (line_no == 0) throw std::invalid_argument("dataset file is empty: " + path);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write dataset file: " + path);
  ordered_json header{{"version", 1}, {"d_img", ds.d_img}};
  out << header.dump() << '\n';
  for (const Example& ex : ds.examples) {
    ordered_json obj;
    obj["id"] = ex.id;
    obj["label"] = ex.label;
    obj["image_embedding"] = ex.image_embedding;
    obj["captions"] = ex.captions;
    if (ex.signal_index > 0) obj["signal_index"] = ex.signal_index;
    out << obj.dump() << '\n';
  }
}

const std::vector<std::string>& benign_words() {
  static const std::vector<std::string> words = {
      "river",  "table",   "garden",  "window", "coffee", "mountain", "bicycle", "yellow",
      "quiet",  "paper",   "cloud",   "bridge", "market", "evening",  "stone",   "forest",
      "mirror", "candle",  "harbor",  "meadow", "violin", "pocket",   "lantern", "orchard",
      "pebble", "saddle",  "teapot",  "willow", "breeze", "copper",   "dusty",   "gentle",
      "hollow", "ivory",   "jacket",  "kettle", "ladder", "marble",   "napkin",  "oak",
      "plum",   "quilt",   "ribbon",  "sunset", "timber", "umbrella", "velvet",  "wagon"};
  return words;
}

const std::vector<std::string>& signal_words() {
  static const std::vector<std::string> words = {"vexlor",  "drazmic", "quolth",  "murnex",
                                                 "blivane", "skarnel", "trogule", "phantic",
                                                 "grellow", "zindrel", "crovax",  "wumpet"};
  return words;
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.count == 0 || spec.count % 2 != 0)
    throw std::invalid_argument("gen_synthetic: count must be even and positive");
  if (spec.k < 2) throw std::invalid_argument("gen_synthetic: K must be >= 2");
  if (spec.d_img == 0) throw std::invalid_argument("gen_synthetic: d_img must be positive");

  RngStream rng(derive_seed(spec.seed, "synthetic"));
  const auto& benign = benign_words();
  const auto& signal = signal_words();

  // Fixed unit direction for the label-1 image shift.
  std::vector<double> direction(spec.d_img);
  double norm2 = 0.0;
  for (double& v : direction) {
    v = rng.normal();
    norm2 += v * v;
  }
  double inv = 1.0 / std::sqrt(norm2);
  for (double& v : direction) v *= inv;

  Dataset ds;
  ds.d_img = spec.d_img;
  for (std::size_t i = 0; i < spec.count; ++i) {
    Example ex;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%05zu", i);
    ex.id = buf;
    ex.label = static_cast<int>(i % 2);

    ex.image_embedding.resize(spec.d_img);
    for (double& v : ex.image_embedding) v = rng.normal();
    if (ex.label == 1)
      for (std::size_t j = 0; j < spec.d_img; ++j)
        ex.image_embedding[j] += spec.alpha * direction[j];

    std::vector<std::vector<std::string>> caption_words(spec.k);
    for (auto& words : caption_words) {
      std::size_t len = 6 + static_cast<std::size_t>(rng.uniform() * 7.0);  // 6..12
      words.resize(len);
      for (auto& w : words)
        w = benign[static_cast<std::size_t>(rng.uniform() * benign.size())];
    }

    if (ex.label == 1) {
      std::size_t pos = static_cast<std::size_t>(rng.uniform() * spec.k);
      auto& words = caption_words[pos];
      // three distinct word slots replaced with signal words
      std::vector<std::size_t> slots(words.size());
      for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = s;
      for (std::size_t s = 0; s < 3; ++s) {
        std::size_t pick = s + static_cast<std::size_t>(rng.uniform() * (slots.size() - s));
        std::swap(slots[s], slots[pick]);
        words[slots[s]] = signal[static_cast<std::size_t>(rng.uniform() * signal.size())];
      }
      ex.signal_index = static_cast<int>(pos) + 1;
    }

    for (const auto& words : caption_words) {
      std::string text;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w) text += ' ';
        text += words[w];
      }
      ex.captions.push_back(std::move(text));
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::vector<Dataset> split_dataset(const Dataset& ds, const std::vector<std::size_t>& sizes) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total > ds.examples.size())
    throw std::invalid_argument("split_dataset: sizes exceed dataset size");
  std::vector<Dataset> parts;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    Dataset part;
    part.d_img = ds.d_img;
    part.examples.assign(ds.examples.begin() + static_cast<std::ptrdiff_t>(offset),
                         ds.examples.begin() + static_cast<std::ptrdiff_t>(offset + s));
    parts.push_back(std::move(part));
    offset += s;
  }
  return parts;
}

}  // namespace trace
