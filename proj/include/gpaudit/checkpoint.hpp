#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpaudit/encoder.hpp"
#include "gpaudit/error.hpp"
#include "gpaudit/numcore.hpp"
#include "gpaudit/prompt.hpp"

namespace gpaudit {

inline constexpr char kCheckpointMagic[8] = {'G', 'T', 'H', 'E', 'F', 'T', '0', '1'};

struct CheckpointMeta {
  std::string method;
  uint64_t config_hash = 0;
  nlohmann::json extra;  // optional trailer fields beyond method/config_hash
};

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::string& buf, size_t& pos) {
  check(pos + 4 <= buf.size(), "checkpoint: truncated u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
  return v;
}

inline double get_f64(const std::string& buf, size_t& pos) {
  check(pos + 8 <= buf.size(), "checkpoint: truncated f64");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline std::string checkpoint_bytes(const ParamSet& ps, const CheckpointMeta& meta) {
  std::string out(kCheckpointMagic, 8);
  for (const std::string& name : ps.names()) {
    const Tensor2& t = ps.value(name);
    detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<uint32_t>(t.rows));
    detail::put_u32(out, static_cast<uint32_t>(t.cols));
    for (double d : t.v) detail::put_f64(out, d);
  }
  detail::put_u32(out, 0);  // sentinel: end of tensor records
  nlohmann::json trailer = meta.extra;
  trailer["method"] = meta.method;
  trailer["config_hash"] = std::to_string(meta.config_hash);  // u64-safe
  out += trailer.dump();
  return out;
}

inline void save_checkpoint(const std::string& path, const ParamSet& ps,
                            const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "checkpoint: cannot open '" + path + "' for writing");
  std::string bytes = checkpoint_bytes(ps, meta);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(f.good(), "checkpoint: write to '" + path + "' failed");
}

inline std::pair<ParamSet, CheckpointMeta> load_checkpoint_bytes(const std::string& buf) {
  check(buf.size() >= 8 && std::memcmp(buf.data(), kCheckpointMagic, 8) == 0,
        "checkpoint: bad magic (not a GTHEFT01 file)");
  ParamSet ps;
  size_t pos = 8;
  for (;;) {
    uint32_t name_len = detail::get_u32(buf, pos);
    if (name_len == 0) break;
    check(name_len <= 1u << 16, "checkpoint: implausible name length");
    check(pos + name_len <= buf.size(), "checkpoint: truncated name");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    uint32_t rows = detail::get_u32(buf, pos);
    uint32_t cols = detail::get_u32(buf, pos);
    check(rows > 0 && cols > 0 && static_cast<uint64_t>(rows) * cols <= (1u << 28),
          "checkpoint: implausible shape for '" + name + "'");
    Tensor2 t(static_cast<int>(rows), static_cast<int>(cols));
    for (double& d : t.v) d = detail::get_f64(buf, pos);
    ps.add(name, std::move(t));
  }
  check(pos < buf.size(), "checkpoint: missing trailer");
  nlohmann::json trailer = nlohmann::json::parse(buf.substr(pos), nullptr, false);
  check(!trailer.is_discarded() && trailer.is_object(), "checkpoint: malformed trailer");
  check(trailer.contains("method") && trailer.contains("config_hash"),
        "checkpoint: trailer missing method/config_hash");
  CheckpointMeta meta;
  meta.method = trailer["method"].get<std::string>();
  meta.config_hash = std::stoull(trailer["config_hash"].get<std::string>());
  trailer.erase("method");
  trailer.erase("config_hash");
  meta.extra = std::move(trailer);
  return {std::move(ps), std::move(meta)};
}

inline std::pair<ParamSet, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load_checkpoint_bytes(buf);
}

// --- Encoder wrappers ------------------------------------------------------------

inline CheckpointMeta encoder_checkpoint_meta(const EncoderParams& enc,
                                              const std::string& method,
                                              uint64_t config_hash) {
  CheckpointMeta meta;
  meta.method = method;
  meta.config_hash = config_hash;
  meta.extra["encoder"] = {{"layers", enc.cfg.layers},
                           {"hidden", enc.cfg.hidden},
                           {"aggregator", aggregator_name(enc.cfg.aggregator)},
                           {"in_dim", enc.in_dim},
                           {"frozen", enc.frozen}};
  return meta;
}

inline void save_encoder(const std::string& path, const EncoderParams& enc,
                         const std::string& method, uint64_t config_hash) {
  save_checkpoint(path, enc.ps, encoder_checkpoint_meta(enc, method, config_hash));
}

inline std::pair<EncoderParams, CheckpointMeta> load_encoder(const std::string& path) {
  auto [ps, meta] = load_checkpoint(path);
  check(meta.extra.contains("encoder"), "checkpoint: '" + path + "' is not an encoder checkpoint");
  const nlohmann::json& e = meta.extra["encoder"];
  EncoderParams enc;
  enc.cfg.layers = e.at("layers").get<int>();
  enc.cfg.hidden = e.at("hidden").get<int>();
  enc.cfg.aggregator = parse_aggregator(e.at("aggregator").get<std::string>());
  enc.in_dim = e.at("in_dim").get<int>();
  enc.frozen = e.at("frozen").get<bool>();
  validate(enc.cfg);
  for (int l = 0; l < enc.cfg.layers; ++l)
    for (const char* which : {"w_self", "w_neigh", "bias"})
      check(ps.has(enc_pname(l, which)),
            "checkpoint: encoder tensor '" + enc_pname(l, which) + "' missing");
  enc.ps = std::move(ps);
  return {std::move(enc), std::move(meta)};
}

// --- Prompt-state wrappers ---------------------------------------------------------

// One file holds the frozen encoder tensors ("l<layer>/...") and the prompt +
// head tensors side by side; their name prefixes never collide.
inline void save_prompt_state(const std::string& path, const PromptState& st,
                              uint64_t config_hash) {
  CheckpointMeta meta = encoder_checkpoint_meta(st.enc, prompt_method_name(st.method),
                                                config_hash);
  meta.extra["prompt"] = {{"method", prompt_method_name(st.method)},
                          {"epochs", st.cfg.epochs},
                          {"lr", st.cfg.lr},
                          {"num_tokens", st.cfg.num_tokens},
                          {"cross_threshold", st.cfg.cross_threshold},
                          {"num_classes", st.num_classes},
                          {"seed", std::to_string(st.seed)},
                          {"train_nodes", st.train_nodes}};
  ParamSet merged;
  for (const std::string& name : st.enc.ps.names()) merged.add(name, st.enc.ps.value(name));
  for (const std::string& name : st.params.names()) merged.add(name, st.params.value(name));
  save_checkpoint(path, merged, meta);
}

inline std::pair<PromptState, CheckpointMeta> load_prompt_state(const std::string& path) {
  auto [ps, meta] = load_checkpoint(path);
  check(meta.extra.contains("encoder") && meta.extra.contains("prompt"),
        "checkpoint: '" + path + "' is not a prompt-state checkpoint");
  const nlohmann::json& e = meta.extra["encoder"];
  const nlohmann::json& p = meta.extra["prompt"];
  PromptState st;
  st.method = parse_prompt_method(p.at("method").get<std::string>());
  st.cfg.epochs = p.at("epochs").get<int>();
  st.cfg.lr = p.at("lr").get<double>();
  st.cfg.num_tokens = p.at("num_tokens").get<int>();
  st.cfg.cross_threshold = p.at("cross_threshold").get<double>();
  st.num_classes = p.at("num_classes").get<int>();
  st.seed = std::stoull(p.at("seed").get<std::string>());
  st.train_nodes = p.at("train_nodes").get<std::vector<int>>();
  st.enc.cfg.layers = e.at("layers").get<int>();
  st.enc.cfg.hidden = e.at("hidden").get<int>();
  st.enc.cfg.aggregator = parse_aggregator(e.at("aggregator").get<std::string>());
  st.enc.in_dim = e.at("in_dim").get<int>();
  st.enc.frozen = e.at("frozen").get<bool>();
  validate(st.enc.cfg);
  for (const std::string& name : ps.names()) {
    bool is_encoder = false;
    for (int l = 0; l < st.enc.cfg.layers && !is_encoder; ++l)
      for (const char* which : {"w_self", "w_neigh", "bias"})
        if (name == enc_pname(l, which)) { is_encoder = true; break; }
    (is_encoder ? st.enc.ps : st.params).add(name, ps.value(name));
  }
  return {std::move(st), std::move(meta)};
}

}  // namespace gpaudit
