// Cross-layer parameter sharing: scheme enumeration and parameter-key
// canonicalization.
//
// A block parameter is addressed by (component, stack r, dilation index x,
// role). Sharing erases grid coordinates from the key: "share through
// stacks" ties sites with equal dilation index across stacks (erases r),
// "share through dilations" ties all dilation sites within a stack
// (erases x). Schemes serialize as the letter codes n/s/d/a.
#pragma once

#include <compare>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mitas {

enum class SharingScheme { NoShare, Stack, Dilation, All };

inline char scheme_letter(SharingScheme s) {
  switch (s) {
    case SharingScheme::NoShare: return 'n';
    case SharingScheme::Stack: return 's';
    case SharingScheme::Dilation: return 'd';
    case SharingScheme::All: return 'a';
  }
  throw std::logic_error("scheme_letter: bad enum");
}

inline SharingScheme scheme_from_letter(char c) {
  switch (c) {
    case 'n': return SharingScheme::NoShare;
    case 's': return SharingScheme::Stack;
    case 'd': return SharingScheme::Dilation;
    case 'a': return SharingScheme::All;
    default: {
      std::ostringstream os;
      os << "unknown sharing letter '" << c << "' (expected one of n/s/d/a)";
      throw std::invalid_argument(os.str());
    }
  }
}

// Per-component scheme; first letter = separable conv., second = point-wise.
struct SharingConfig {
  SharingScheme separable = SharingScheme::NoShare;
  SharingScheme pointwise = SharingScheme::NoShare;

  bool operator==(const SharingConfig&) const = default;

  std::string label() const {
    return std::string{scheme_letter(separable), scheme_letter(pointwise)};
  }
  bool unshared() const {
    return separable == SharingScheme::NoShare && pointwise == SharingScheme::NoShare;
  }
};

inline SharingConfig parse_scheme(const std::string& s) {
  if (s.size() != 2) {
    throw std::invalid_argument("scheme must be two letters (separable, pointwise), e.g. \"ss\"; got \"" + s + "\"");
  }
  return SharingConfig{scheme_from_letter(s[0]), scheme_from_letter(s[1])};
}

// All 16 (separable, pointwise) combinations; separable-major order n,s,d,a.
inline std::vector<SharingConfig> enumerate_ablation_grid() {
  static constexpr SharingScheme order[4] = {SharingScheme::NoShare, SharingScheme::Stack,
                                             SharingScheme::Dilation, SharingScheme::All};
  std::vector<SharingConfig> grid;
  grid.reserve(16);
  for (SharingScheme sep : order)
    for (SharingScheme pw : order) grid.push_back(SharingConfig{sep, pw});
  return grid;
}

// Number of distinct parameter sites an X-by-R block grid collapses to.
inline int unique_site_count(int X, int R, SharingScheme scheme) {
  if (X < 1 || R < 1) throw std::invalid_argument("unique_site_count: X and R must be >= 1");
  switch (scheme) {
    case SharingScheme::NoShare: return X * R;
    case SharingScheme::Stack: return X;
    case SharingScheme::Dilation: return R;
    case SharingScheme::All: return 1;
  }
  throw std::logic_error("unique_site_count: bad enum");
}

enum class Site { Encoder, Decoder, Bottleneck, MaskHead, Block };
enum class BlockComponent { Separable, Pointwise };

enum class Role {
  Weight,
  Bias,
  NormGain,
  NormBias,
  PreluSlope,
  InputWeight,
  InputBias,
  DepthwiseWeight,
  DepthwiseBias,
  ResidualWeight,
  ResidualBias,
  SkipWeight,
  SkipBias,
};

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Weight: return "weight";
    case Role::Bias: return "bias";
    case Role::NormGain: return "norm_gain";
    case Role::NormBias: return "norm_bias";
    case Role::PreluSlope: return "prelu_slope";
    case Role::InputWeight: return "input_weight";
    case Role::InputBias: return "input_bias";
    case Role::DepthwiseWeight: return "depthwise_weight";
    case Role::DepthwiseBias: return "depthwise_bias";
    case Role::ResidualWeight: return "residual_weight";
    case Role::ResidualBias: return "residual_bias";
    case Role::SkipWeight: return "skip_weight";
    case Role::SkipBias: return "skip_bias";
  }
  throw std::logic_error("role_name: bad enum");
}

// Identity of one parameter tensor. For block sites, stack/dilation_index of
// -1 mean "erased by sharing" (printed as *); non-block sites leave both -1.
struct ParamKey {
  Site site = Site::Encoder;
  BlockComponent component = BlockComponent::Separable;  // block sites only
  int stack = -1;
  int dilation_index = -1;
  Role role = Role::Weight;

  auto operator<=>(const ParamKey&) const = default;

  std::string str() const {
    std::ostringstream os;
    switch (site) {
      case Site::Encoder: os << "encoder"; break;
      case Site::Decoder: os << "decoder"; break;
      case Site::Bottleneck: os << "bottleneck"; break;
      case Site::MaskHead: os << "mask_head"; break;
      case Site::Block:
        os << "block." << (component == BlockComponent::Separable ? "sep" : "pw") << ".r";
        if (stack < 0) os << "*"; else os << stack;
        os << ".x";
        if (dilation_index < 0) os << "*"; else os << dilation_index;
        break;
    }
    os << "." << role_name(role);
    return os.str();
  }
};

inline ParamKey block_key(BlockComponent comp, int r, int x, Role role) {
  ParamKey k;
  k.site = Site::Block;
  k.component = comp;
  k.stack = r;
  k.dilation_index = x;
  k.role = role;
  return k;
}

inline ParamKey site_key(Site site, Role role) {
  ParamKey k;
  k.site = site;
  k.role = role;
  return k;
}

// Collapses a site key to the tensor that backs it under `config`. Non-block
// keys pass through; idempotent (erasing an erased coordinate is a no-op).
inline ParamKey canonicalize(ParamKey key, const SharingConfig& config) {
  if (key.site != Site::Block) return key;
  const SharingScheme scheme =
      key.component == BlockComponent::Separable ? config.separable : config.pointwise;
  switch (scheme) {
    case SharingScheme::NoShare:
      break;
    case SharingScheme::Stack:
      key.stack = -1;
      break;
    case SharingScheme::Dilation:
      key.dilation_index = -1;
      break;
    case SharingScheme::All:
      key.stack = -1;
      key.dilation_index = -1;
      break;
  }
  return key;
}

}  // namespace mitas
