#include "trace/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace trace {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
constexpr char kMagic[] = "TRACEHDv1";
constexpr std::size_t kMagicLen = 9;

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

ordered_json config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["encoder"] = {{"vocab_size", c.encoder.vocab_size}, {"max_len", c.encoder.max_len},
                  {"width", c.encoder.width},           {"num_layers", c.encoder.num_layers},
                  {"num_heads", c.encoder.num_heads},   {"ffn_mult", c.encoder.ffn_mult}};
  j["scorer"] = {{"d", c.scorer.d},
                 {"h1", c.scorer.h1},
                 {"h2", c.scorer.h2},
                 {"dropout_p", c.scorer.dropout_p}};
  j["fusion"] = {{"d_img", c.fusion.d_img}, {"d_txt", c.fusion.d_txt}, {"dim", c.fusion.dim}};
  j["tau"] = c.tau;
  j["selection"] = c.selection == SelectionMode::hard_st ? "hard_st" : "soft";
  j["threshold"] = c.threshold;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  const json& e = j.at("encoder");
  c.encoder.vocab_size = e.at("vocab_size").get<std::size_t>();
  c.encoder.max_len = e.at("max_len").get<std::size_t>();
  c.encoder.width = e.at("width").get<std::size_t>();
  c.encoder.num_layers = e.at("num_layers").get<std::size_t>();
  c.encoder.num_heads = e.at("num_heads").get<std::size_t>();
  c.encoder.ffn_mult = e.at("ffn_mult").get<std::size_t>();
  const json& s = j.at("scorer");
  c.scorer.d = s.at("d").get<std::size_t>();
  c.scorer.h1 = s.at("h1").get<std::size_t>();
  c.scorer.h2 = s.at("h2").get<std::size_t>();
  c.scorer.dropout_p = s.at("dropout_p").get<double>();
  const json& f = j.at("fusion");
  c.fusion.d_img = f.at("d_img").get<std::size_t>();
  c.fusion.d_txt = f.at("d_txt").get<std::size_t>();
  c.fusion.dim = f.at("dim").get<std::size_t>();
  c.tau = j.at("tau").get<double>();
  c.selection =
      j.at("selection").get<std::string>() == "hard_st" ? SelectionMode::hard_st
                                                        : SelectionMode::soft;
  c.threshold = j.at("threshold").get<double>();
  return c;
}
}  // namespace

void save_checkpoint(const TraceModel& model, const std::string& path, std::uint64_t seed) {
  ordered_json manifest;
  manifest["config"] = config_to_json(model.config);
  manifest["seed"] = seed;

  ordered_json dir = ordered_json::array();
  std::string payload;
  std::uint64_t offset = 0;
  for (const auto& e : model.params.entries()) {
    ordered_json t;
    t["name"] = e.name;
    t["shape"] = e.value.shape();
    t["offset"] = offset;
    t["trainable"] = e.trainable;
    dir.push_back(std::move(t));
    for (double v : e.value.values()) put_f32_le(payload, static_cast<float>(v));
    offset += 4 * e.value.size();
  }
  manifest["tensors"] = std::move(dir);

  std::string manifest_text = manifest.dump();
  std::string out;
  out.append(kMagic, kMagicLen);
  out.push_back('\n');
  put_u64_le(out, manifest_text.size());
  out += manifest_text;
  out += payload;

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::invalid_argument("cannot write checkpoint file: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::invalid_argument("cannot open checkpoint file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  if (bytes.size() < kMagicLen + 1 + 8)
    throw std::runtime_error("truncated checkpoint file: " + path);
  if (std::memcmp(bytes.data(), kMagic, kMagicLen) != 0 || bytes[kMagicLen] != '\n')
    throw std::runtime_error("checkpoint format mismatch: expected magic " + std::string(kMagic));

  const unsigned char* base = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint64_t manifest_len = get_u64_le(base + kMagicLen + 1);
  std::size_t manifest_start = kMagicLen + 1 + 8;
  if (bytes.size() < manifest_start + manifest_len)
    throw std::runtime_error("truncated checkpoint manifest: " + path);

  json manifest;
  try {
    manifest = json::parse(bytes.substr(manifest_start, manifest_len));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("corrupt checkpoint manifest: ") + e.what());
  }

  LoadedCheckpoint out;
  out.seed = manifest.at("seed").get<std::uint64_t>();
  ModelConfig cfg = config_from_json(manifest.at("config"));
  out.model = TraceModel::init(cfg, 0);  // structure only; values overwritten below

  std::size_t payload_start = manifest_start + manifest_len;
  std::size_t named = 0;
  for (const json& t : manifest.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    if (!out.model.params.has(name))
      throw std::runtime_error("unknown tensor name '" + name + "' in checkpoint");
    Tensor& dst = out.model.params.value(name);
    auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != dst.shape())
      throw std::runtime_error("checkpoint tensor '" + name + "' has unexpected shape");
    std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    std::size_t need = payload_start + offset + 4 * dst.size();
    if (bytes.size() < need) throw std::runtime_error("truncated checkpoint payload: " + path);
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<double>(get_f32_le(base + payload_start + offset + 4 * i));
    out.model.params.set_trainable(name, t.at("trainable").get<bool>());
    ++named;
  }
  if (named != out.model.params.entries().size())
    throw std::runtime_error("checkpoint is missing tensors: directory lists " +
                             std::to_string(named) + " of " +
                             std::to_string(out.model.params.entries().size()));
  return out;
}

}  // namespace trace
