// Checkpoint file: versioned JSON manifest (config echo, scheme, seed, step)
// followed by named tensors (canonical key string, dtype, shape, raw
// little-endian values). Canonical keys make checkpoints portable between
// sharing-aware and copied-weight models.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mitas/config.hpp"
#include "mitas/registry.hpp"

namespace mitas {

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'T', 'A', 'S', 'C', 'K', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
struct Checkpoint {
  ModelConfig config;
  uint64_t seed = 0;
  int step = 0;
  std::shared_ptr<ParameterStore<S>> store;
  bool has_optimizer = false;
  std::vector<std::vector<S>> adam_m, adam_v;  // aligned with store->canonical()
};

namespace ckpt_detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"encoder_channels", c.encoder_channels},
      {"encoder_window", c.encoder_window},
      {"encoder_stride", c.encoder_stride},
      {"bottleneck_channels", c.bottleneck_channels},
      {"block_hidden", c.block_hidden},
      {"skip_channels", c.skip_channels},
      {"depthwise_kernel", c.depthwise_kernel},
      {"blocks_per_stack", c.blocks_per_stack},
      {"stacks", c.stacks},
      {"sources", c.sources},
      {"mask_activation", c.mask_activation == MaskActivation::Sigmoid ? "sigmoid" : "softmax"},
      {"skip_connections", c.skip_connections},
      {"scheme", c.sharing.label()},
  };
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_channels = j.at("encoder_channels").get<int>();
  c.encoder_window = j.at("encoder_window").get<int>();
  c.encoder_stride = j.at("encoder_stride").get<int>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  c.block_hidden = j.at("block_hidden").get<int>();
  c.skip_channels = j.at("skip_channels").get<int>();
  c.depthwise_kernel = j.at("depthwise_kernel").get<int>();
  c.blocks_per_stack = j.at("blocks_per_stack").get<int>();
  c.stacks = j.at("stacks").get<int>();
  c.sources = j.at("sources").get<int>();
  c.mask_activation = j.at("mask_activation").get<std::string>() == "sigmoid"
                          ? MaskActivation::Sigmoid
                          : MaskActivation::SoftmaxOverSources;
  c.skip_connections = j.at("skip_connections").get<bool>();
  c.sharing = parse_scheme(j.at("scheme").get<std::string>());
  c.validate();
  return c;
}

inline void put_u16(std::ostream& f, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  f.write(b, 2);
}
inline void put_u32(std::ostream& f, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 4);
}
inline void put_u64(std::ostream& f, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 8);
}
inline uint16_t get_u16(std::istream& f) {
  unsigned char b[2];
  f.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
inline uint32_t get_u32(std::istream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}
inline uint64_t get_u64(std::istream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

template <typename S>
void put_tensor(std::ostream& f, const std::string& name, const std::vector<int>& shape,
                const std::vector<S>& data) {
  put_u16(f, static_cast<uint16_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  f.put(static_cast<char>(sizeof(S)));
  f.put(static_cast<char>(shape.size()));
  for (int d : shape) put_u32(f, static_cast<uint32_t>(d));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(S)));
}

}  // namespace ckpt_detail

template <typename S>
void save_checkpoint(const std::string& path, const ModelConfig& cfg, uint64_t seed, int step,
                     const ParameterStore<S>& store,
                     const std::vector<std::vector<S>>* adam_m = nullptr,
                     const std::vector<std::vector<S>>* adam_v = nullptr) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path + " for writing");
  f.write(kCheckpointMagic, 8);
  ckpt_detail::put_u32(f, kCheckpointVersion);

  const bool has_opt = adam_m && adam_v;
  nlohmann::json manifest{
      {"format", "mitas-checkpoint"},
      {"dtype", dtype_name<S>()},
      {"seed", seed},
      {"step", step},
      {"has_optimizer", has_opt},
      {"config", ckpt_detail::config_to_json(cfg)},
  };
  const std::string mtext = manifest.dump();
  ckpt_detail::put_u64(f, mtext.size());
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));

  const auto& params = store.canonical();
  const uint32_t per = has_opt ? 3 : 1;
  ckpt_detail::put_u32(f, static_cast<uint32_t>(params.size()) * per);
  size_t idx = 0;
  for (const auto& [key, t] : params) {
    const std::string name = key.str();
    ckpt_detail::put_tensor(f, name, t->shape, t->data);
    if (has_opt) {
      ckpt_detail::put_tensor(f, "adam.m:" + name, t->shape, (*adam_m)[idx]);
      ckpt_detail::put_tensor(f, "adam.v:" + name, t->shape, (*adam_v)[idx]);
    }
    ++idx;
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
  const uint32_t version = ckpt_detail::get_u32(f);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  const uint64_t mlen = ckpt_detail::get_u64(f);
  std::string mtext(mlen, '\0');
  f.read(mtext.data(), static_cast<std::streamsize>(mlen));
  const nlohmann::json manifest = nlohmann::json::parse(mtext);
  if (manifest.at("dtype").get<std::string>() != dtype_name<S>())
    throw std::runtime_error("load_checkpoint: dtype mismatch (file has " +
                             manifest.at("dtype").get<std::string>() + ")");

  Checkpoint<S> ck;
  ck.config = ckpt_detail::config_from_json(manifest.at("config"));
  ck.seed = manifest.at("seed").get<uint64_t>();
  ck.step = manifest.at("step").get<int>();
  ck.has_optimizer = manifest.at("has_optimizer").get<bool>();
  ck.store = build_parameter_store<S>(ck.config, ck.seed);

  std::map<std::string, TensorPtr<S>> by_name;
  std::map<std::string, size_t> index_of;
  size_t idx = 0;
  for (const auto& [key, t] : ck.store->canonical()) {
    by_name[key.str()] = t;
    index_of[key.str()] = idx++;
  }
  if (ck.has_optimizer) {
    ck.adam_m.resize(by_name.size());
    ck.adam_v.resize(by_name.size());
  }

  std::set<std::string> filled;
  const uint32_t n_tensors = ckpt_detail::get_u32(f);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const uint16_t name_len = ckpt_detail::get_u16(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const int scalar_size = f.get();
    const int rank = f.get();
    std::vector<int> shape(static_cast<size_t>(rank));
    int64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      shape[static_cast<size_t>(d)] = static_cast<int>(ckpt_detail::get_u32(f));
      numel *= shape[static_cast<size_t>(d)];
    }
    if (scalar_size != static_cast<int>(sizeof(S)))
      throw std::runtime_error("load_checkpoint: tensor " + name + " has wrong scalar size");
    std::vector<S> data(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(S)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file at tensor " + name);

    std::string base = name;
    int kind = 0;  // 0 param, 1 adam.m, 2 adam.v
    if (name.rfind("adam.m:", 0) == 0) {
      base = name.substr(7);
      kind = 1;
    } else if (name.rfind("adam.v:", 0) == 0) {
      base = name.substr(7);
      kind = 2;
    }
    auto it = by_name.find(base);
    if (it == by_name.end())
      throw std::runtime_error("load_checkpoint: unknown parameter \"" + name +
                               "\" for this config/scheme");
    if (kind == 0) {
      if (it->second->shape != shape)
        throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
      it->second->data = std::move(data);
      filled.insert(base);
    } else if (ck.has_optimizer) {
      auto& slot = (kind == 1 ? ck.adam_m : ck.adam_v)[index_of[base]];
      slot = std::move(data);
    }
  }
  if (filled.size() != by_name.size())
    throw std::runtime_error("load_checkpoint: file is missing parameters (" +
                             std::to_string(filled.size()) + "/" +
                             std::to_string(by_name.size()) + " present)");
  if (ck.has_optimizer) {
    size_t idx2 = 0;
    for (const auto& [key, t] : ck.store->canonical()) {
      if (ck.adam_m[idx2].size() != t->data.size() || ck.adam_v[idx2].size() != t->data.size())
        throw std::runtime_error("load_checkpoint: optimizer state missing for " + key.str());
      ++idx2;
    }
  }
  return ck;
}

}  // namespace mitas
