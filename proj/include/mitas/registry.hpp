// Parameter registry: the single source of truth for weight tying and
// parameter counting.
//
// Every trainable tensor is addressed by a ParamKey; the store maps
// canonical keys (post-sharing) to tensors, so tied sites resolve to the
// same object. The audit counts each distinct canonical tensor exactly once
// and reports size and compression against an unshared baseline.
#pragma once

#include <cstdint>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mitas/config.hpp"
#include "mitas/sharing.hpp"
#include "mitas/tensor.hpp"

namespace mitas {

struct ParamSpec {
  ParamKey key;
  std::vector<int> shape;
};

// Every parameter site of the model, in forward order, with its shape.
// The separable component owns the depthwise conv, the activation/norm that
// follow it, and the residual-output 1x1; the pointwise component owns the
// input 1x1, its activation/norm, and the skip-output 1x1 when present.
inline std::vector<ParamSpec> parameter_sites(const ModelConfig& cfg) {
  cfg.validate();
  const int N = cfg.encoder_channels, L = cfg.encoder_window, B = cfg.bottleneck_channels;
  const int H = cfg.block_hidden, Sc = cfg.skip_channels, P = cfg.depthwise_kernel;
  const int CN = cfg.sources * N;

  std::vector<ParamSpec> specs;
  specs.push_back({site_key(Site::Encoder, Role::Weight), {N, 1, L}});
  specs.push_back({site_key(Site::Bottleneck, Role::NormGain), {N}});
  specs.push_back({site_key(Site::Bottleneck, Role::NormBias), {N}});
  specs.push_back({site_key(Site::Bottleneck, Role::Weight), {B, N, 1}});
  specs.push_back({site_key(Site::Bottleneck, Role::Bias), {B}});
  for (int r = 0; r < cfg.stacks; ++r) {
    for (int x = 0; x < cfg.blocks_per_stack; ++x) {
      const auto pw = BlockComponent::Pointwise;
      const auto sep = BlockComponent::Separable;
      specs.push_back({block_key(pw, r, x, Role::InputWeight), {H, B, 1}});
      specs.push_back({block_key(pw, r, x, Role::InputBias), {H}});
      specs.push_back({block_key(pw, r, x, Role::PreluSlope), {1}});
      specs.push_back({block_key(pw, r, x, Role::NormGain), {H}});
      specs.push_back({block_key(pw, r, x, Role::NormBias), {H}});
      specs.push_back({block_key(sep, r, x, Role::DepthwiseWeight), {H, 1, P}});
      specs.push_back({block_key(sep, r, x, Role::DepthwiseBias), {H}});
      specs.push_back({block_key(sep, r, x, Role::PreluSlope), {1}});
      specs.push_back({block_key(sep, r, x, Role::NormGain), {H}});
      specs.push_back({block_key(sep, r, x, Role::NormBias), {H}});
      specs.push_back({block_key(sep, r, x, Role::ResidualWeight), {B, H, 1}});
      specs.push_back({block_key(sep, r, x, Role::ResidualBias), {B}});
      if (cfg.skip_connections) {
        specs.push_back({block_key(pw, r, x, Role::SkipWeight), {Sc, H, 1}});
        specs.push_back({block_key(pw, r, x, Role::SkipBias), {Sc}});
      }
    }
  }
  specs.push_back({site_key(Site::MaskHead, Role::PreluSlope), {1}});
  specs.push_back({site_key(Site::MaskHead, Role::Weight), {CN, cfg.mask_input_channels(), 1}});
  specs.push_back({site_key(Site::MaskHead, Role::Bias), {CN}});
  specs.push_back({site_key(Site::Decoder, Role::Weight), {N, 1, L}});
  return specs;
}

template <typename S>
class ParameterStore {
 public:
  explicit ParameterStore(SharingConfig sharing) : sharing_(sharing) {}

  const SharingConfig& sharing() const { return sharing_; }

  // Resolves a site key through canonicalization. Throws if absent.
  const TensorPtr<S>& lookup(const ParamKey& key) const {
    const ParamKey ck = canonicalize(key, sharing_);
    auto it = params_.find(ck);
    if (it == params_.end())
      throw std::out_of_range("parameter store: missing canonical key " + ck.str());
    return it->second;
  }

  void insert(const ParamKey& canonical_key, TensorPtr<S> tensor) {
    params_[canonical_key] = std::move(tensor);
  }

  void bump_site_count(const ParamKey& canonical_key) { ++site_counts_[canonical_key]; }

  int site_count(const ParamKey& canonical_key) const {
    auto it = site_counts_.find(canonical_key);
    return it == site_counts_.end() ? 0 : it->second;
  }

  // Canonical key -> tensor, ordered (deterministic iteration for the
  // optimizer and for checkpoints).
  const std::map<ParamKey, TensorPtr<S>>& canonical() const { return params_; }
  std::map<ParamKey, TensorPtr<S>>& canonical() { return params_; }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& [k, t] : params_) n += t->numel();
    return n;
  }

  void zero_grad() {
    for (auto& [k, t] : params_) t->zero_grad();
  }

 private:
  SharingConfig sharing_;
  std::map<ParamKey, TensorPtr<S>> params_;
  std::map<ParamKey, int> site_counts_;
};

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Fan-in-scaled uniform for conv weights, zeros for biases, ones for norm
// gains, 0.25 for PReLU slopes. Each canonical tensor draws from an RNG
// seeded by (seed, key string), so sites that remain unshared across schemes
// get identical initial values for a given seed.
template <typename S>
TensorPtr<S> init_parameter(const ParamKey& key, const std::vector<int>& shape, uint64_t seed) {
  switch (key.role) {
    case Role::Weight:
    case Role::InputWeight:
    case Role::DepthwiseWeight:
    case Role::ResidualWeight:
    case Role::SkipWeight: {
      std::mt19937_64 rng(detail::mix_seed(seed, detail::fnv1a(key.str())));
      const double fan_in = static_cast<double>(shape[1]) * static_cast<double>(shape[2]);
      const S bound = static_cast<S>(1.0 / std::sqrt(fan_in));
      return uniform_tensor<S>(shape, -bound, bound, rng);
    }
    case Role::NormGain:
      return full<S>(shape, S(1));
    case Role::PreluSlope:
      return full<S>(shape, S(0.25));
    default:
      return zeros<S>(shape);
  }
}

template <typename S>
std::shared_ptr<ParameterStore<S>> build_parameter_store(const ModelConfig& cfg, uint64_t seed) {
  auto store = std::make_shared<ParameterStore<S>>(cfg.sharing);
  for (const auto& spec : parameter_sites(cfg)) {
    const ParamKey ck = canonicalize(spec.key, cfg.sharing);
    if (!store->canonical().contains(ck)) {
      auto t = init_parameter<S>(ck, spec.shape, seed);
      t->ensure_grad();
      store->insert(ck, std::move(t));
    }
    store->bump_site_count(ck);
  }
  return store;
}

// Unshared store whose every site holds a copy of the tensor the shared
// store resolves that site to. Used by the tying-equivalence oracles.
template <typename S>
std::shared_ptr<ParameterStore<S>> clone_unshared(const ParameterStore<S>& shared,
                                                  const ModelConfig& cfg) {
  auto store = std::make_shared<ParameterStore<S>>(SharingConfig{});
  for (const auto& spec : parameter_sites(cfg)) {
    auto t = clone(shared.lookup(spec.key));
    t->ensure_grad();
    store->insert(spec.key, std::move(t));
    store->bump_site_count(spec.key);
  }
  return store;
}

// ---------------------------------------------------------------------------
// Parameter audit
// ---------------------------------------------------------------------------

struct ParamReportRow {
  std::string module;
  int64_t count = 0;
};

struct ParamReport {
  std::vector<ParamReportRow> rows;
  int64_t total = 0;
  int64_t baseline_total = 0;
  double compression_pct = 100.0;

  std::string text_table() const {
    size_t w = 12;
    for (const auto& r : rows) w = std::max(w, r.module.size());
    std::ostringstream os;
    for (const auto& r : rows)
      os << std::left << std::setw(static_cast<int>(w) + 2) << r.module << std::right
         << std::setw(12) << r.count << "\n";
    os << std::left << std::setw(static_cast<int>(w) + 2) << "total" << std::right
       << std::setw(12) << total << "\n";
    os << std::left << std::setw(static_cast<int>(w) + 2) << "baseline" << std::right
       << std::setw(12) << baseline_total << "\n";
    os << std::left << std::setw(static_cast<int>(w) + 2) << "compression" << std::right
       << std::setw(11) << std::fixed << std::setprecision(2) << compression_pct << "%\n";
    return os.str();
  }
};

namespace detail {

inline std::string audit_module_of(const ParamKey& k) {
  switch (k.site) {
    case Site::Encoder: return "encoder";
    case Site::Bottleneck: return "bottleneck";
    case Site::MaskHead: return "mask_head";
    case Site::Decoder: return "decoder";
    case Site::Block:
      return k.component == BlockComponent::Separable ? "blocks.separable" : "blocks.pointwise";
  }
  throw std::logic_error("audit_module_of: bad site");
}

inline int64_t distinct_scalar_count(const ModelConfig& cfg,
                                     std::map<std::string, int64_t>* by_module) {
  std::set<ParamKey> seen;
  int64_t total = 0;
  for (const auto& spec : parameter_sites(cfg)) {
    const ParamKey ck = canonicalize(spec.key, cfg.sharing);
    if (!seen.insert(ck).second) continue;
    int64_t n = 1;
    for (int d : spec.shape) n *= d;
    total += n;
    if (by_module) (*by_module)[audit_module_of(ck)] += n;
  }
  return total;
}

}  // namespace detail

// Audit against an explicit baseline config (audited unshared). The ablation
// tables use the family base model here, so structural controls like the
// one-stack model report their ratio against the family base, not 100%.
inline ParamReport audit(const ModelConfig& cfg, const ModelConfig& baseline_cfg) {
  std::map<std::string, int64_t> by_module;
  ParamReport report;
  report.total = detail::distinct_scalar_count(cfg, &by_module);
  ModelConfig base = baseline_cfg;
  base.sharing = SharingConfig{};
  report.baseline_total = detail::distinct_scalar_count(base, nullptr);
  static const char* order[] = {"encoder", "bottleneck", "blocks.pointwise",
                                "blocks.separable", "mask_head", "decoder"};
  for (const char* m : order) {
    auto it = by_module.find(m);
    if (it != by_module.end()) report.rows.push_back({m, it->second});
  }
  report.compression_pct = 100.0 * static_cast<double>(report.total) /
                           static_cast<double>(report.baseline_total);
  return report;
}

// Baseline defaults to the same architecture with scheme (n,n).
inline ParamReport audit(const ModelConfig& cfg) { return audit(cfg, cfg); }

}  // namespace mitas
