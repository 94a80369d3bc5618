// Encoder -> masking TCN separator -> decoder, parameterized entirely
// through the parameter registry.
//
// Block internals (input 1x1 -> PReLU -> gLN -> dilated depthwise -> PReLU
// -> gLN -> residual 1x1 [+ skip 1x1]) follow the Conv-TasNet block; the
// dilation of block x is 2^x and the stack is repeated R times. All
// parameters are resolved at construction time, so a missing canonical key
// fails before any forward pass.
#pragma once

#include <memory>
#include <vector>

#include "mitas/config.hpp"
#include "mitas/ops.hpp"
#include "mitas/registry.hpp"

namespace mitas {

inline constexpr double kNormEps = 1e-8;

template <typename S>
struct SeparatorOutput {
  TensorPtr<S> sources;  // [C, T']
  TensorPtr<S> masks;    // [C, N, frames]
  int frames = 0;
  int analyzed_len = 0;  // T' = (frames-1)*stride + L
};

template <typename S>
class SeparationModel {
 public:
  SeparationModel(const ModelConfig& cfg, std::shared_ptr<ParameterStore<S>> store)
      : cfg_(cfg), store_(std::move(store)) {
    cfg_.validate();
    enc_w_ = store_->lookup(site_key(Site::Encoder, Role::Weight));
    ln_gain_ = store_->lookup(site_key(Site::Bottleneck, Role::NormGain));
    ln_bias_ = store_->lookup(site_key(Site::Bottleneck, Role::NormBias));
    bn_w_ = store_->lookup(site_key(Site::Bottleneck, Role::Weight));
    bn_b_ = store_->lookup(site_key(Site::Bottleneck, Role::Bias));
    for (int r = 0; r < cfg_.stacks; ++r) {
      for (int x = 0; x < cfg_.blocks_per_stack; ++x) {
        Block b;
        b.dilation = cfg_.dilation_of(x);
        const auto pw = BlockComponent::Pointwise;
        const auto sep = BlockComponent::Separable;
        b.in_w = store_->lookup(block_key(pw, r, x, Role::InputWeight));
        b.in_b = store_->lookup(block_key(pw, r, x, Role::InputBias));
        b.pw_slope = store_->lookup(block_key(pw, r, x, Role::PreluSlope));
        b.pw_gain = store_->lookup(block_key(pw, r, x, Role::NormGain));
        b.pw_bias = store_->lookup(block_key(pw, r, x, Role::NormBias));
        b.dw_w = store_->lookup(block_key(sep, r, x, Role::DepthwiseWeight));
        b.dw_b = store_->lookup(block_key(sep, r, x, Role::DepthwiseBias));
        b.sep_slope = store_->lookup(block_key(sep, r, x, Role::PreluSlope));
        b.sep_gain = store_->lookup(block_key(sep, r, x, Role::NormGain));
        b.sep_bias = store_->lookup(block_key(sep, r, x, Role::NormBias));
        b.res_w = store_->lookup(block_key(sep, r, x, Role::ResidualWeight));
        b.res_b = store_->lookup(block_key(sep, r, x, Role::ResidualBias));
        if (cfg_.skip_connections) {
          b.skip_w = store_->lookup(block_key(pw, r, x, Role::SkipWeight));
          b.skip_b = store_->lookup(block_key(pw, r, x, Role::SkipBias));
        }
        blocks_.push_back(std::move(b));
      }
    }
    mask_slope_ = store_->lookup(site_key(Site::MaskHead, Role::PreluSlope));
    mask_w_ = store_->lookup(site_key(Site::MaskHead, Role::Weight));
    mask_b_ = store_->lookup(site_key(Site::MaskHead, Role::Bias));
    dec_w_ = store_->lookup(site_key(Site::Decoder, Role::Weight));
  }

  static SeparationModel random(const ModelConfig& cfg, uint64_t seed) {
    return SeparationModel(cfg, build_parameter_store<S>(cfg, seed));
  }

  const ModelConfig& config() const { return cfg_; }
  const std::shared_ptr<ParameterStore<S>>& store() const { return store_; }

  int frames_for(int input_len) const {
    return (input_len - cfg_.encoder_window) / cfg_.encoder_stride + 1;
  }
  // Input trimmed to a whole number of hops; this is the reconstructed length.
  int analyzed_len(int input_len) const {
    return (frames_for(input_len) - 1) * cfg_.encoder_stride + cfg_.encoder_window;
  }

  // mixture [T] (or [1, T]) -> nonnegative representation [N, frames]
  TensorPtr<S> encode(const TensorPtr<S>& mixture, Tape<S>* tape = nullptr) const {
    TensorPtr<S> x = mixture;
    if (x->rank() == 1) x = reshape(x, {1, x->dim(0)}, tape);
    detail::require_rank(x, 2, "encode", "mixture");
    if (x->dim(0) != 1)
      throw std::invalid_argument("encode: expected single-channel input, got " + x->shape_str());
    if (x->dim(1) < cfg_.encoder_window) {
      std::ostringstream os;
      os << "encode: input length " << x->dim(1) << " below required minimum "
         << cfg_.encoder_window << " (encoder window)";
      throw std::invalid_argument(os.str());
    }
    ConvOpts opts;
    opts.stride = cfg_.encoder_stride;
    return relu(conv1d(x, enc_w_, TensorPtr<S>{}, opts, tape), tape);
  }

  // features [N, frames] -> mask logits path -> masks [C*N, frames]
  TensorPtr<S> separate(const TensorPtr<S>& features, Tape<S>* tape = nullptr) const {
    const S eps = static_cast<S>(kNormEps);
    auto h = global_layer_norm(features, ln_gain_, ln_bias_, eps, tape);
    auto stream = conv1d(h, bn_w_, bn_b_, ConvOpts{}, tape);
    TensorPtr<S> skip_sum;
    for (const auto& b : blocks_) {
      auto z = conv1d(stream, b.in_w, b.in_b, ConvOpts{}, tape);
      z = prelu(z, b.pw_slope, tape);
      z = global_layer_norm(z, b.pw_gain, b.pw_bias, eps, tape);
      ConvOpts dw;
      dw.dilation = b.dilation;
      dw.padding = b.dilation * (cfg_.depthwise_kernel - 1) / 2;
      dw.groups = cfg_.block_hidden;
      z = conv1d(z, b.dw_w, b.dw_b, dw, tape);
      z = prelu(z, b.sep_slope, tape);
      z = global_layer_norm(z, b.sep_gain, b.sep_bias, eps, tape);
      stream = add(stream, conv1d(z, b.res_w, b.res_b, ConvOpts{}, tape), tape);
      if (cfg_.skip_connections) {
        auto sk = conv1d(z, b.skip_w, b.skip_b, ConvOpts{}, tape);
        skip_sum = skip_sum ? add(skip_sum, sk, tape) : sk;
      }
    }
    auto head = prelu(cfg_.skip_connections ? skip_sum : stream, mask_slope_, tape);
    auto logits = conv1d(head, mask_w_, mask_b_, ConvOpts{}, tape);
    if (cfg_.mask_activation == MaskActivation::Sigmoid) return sigmoid(logits, tape);
    return softmax_sources(logits, cfg_.sources, tape);
  }

  // masked features [N, frames] -> waveform [1, T'] by overlap-add
  TensorPtr<S> decode(const TensorPtr<S>& masked, Tape<S>* tape = nullptr) const {
    return conv_transpose1d(masked, dec_w_, cfg_.encoder_stride, tape);
  }

  SeparatorOutput<S> forward(const TensorPtr<S>& mixture, Tape<S>* tape = nullptr) const {
    auto features = encode(mixture, tape);
    auto masks = separate(features, tape);
    const int N = cfg_.encoder_channels;
    std::vector<TensorPtr<S>> waves;
    waves.reserve(cfg_.sources);
    for (int c = 0; c < cfg_.sources; ++c) {
      auto m = slice_rows(masks, c * N, (c + 1) * N, tape);
      waves.push_back(decode(mul(m, features, tape), tape));
    }
    SeparatorOutput<S> out;
    out.sources = stack_rows(waves, tape);
    out.frames = features->dim(1);
    out.analyzed_len = out.sources->dim(1);
    masks->shape = {cfg_.sources, N, out.frames};  // flat layout is identical
    out.masks = masks;
    return out;
  }

 private:
  struct Block {
    int dilation = 1;
    TensorPtr<S> in_w, in_b, pw_slope, pw_gain, pw_bias;
    TensorPtr<S> dw_w, dw_b, sep_slope, sep_gain, sep_bias, res_w, res_b;
    TensorPtr<S> skip_w, skip_b;
  };

  ModelConfig cfg_;
  std::shared_ptr<ParameterStore<S>> store_;
  TensorPtr<S> enc_w_, ln_gain_, ln_bias_, bn_w_, bn_b_;
  std::vector<Block> blocks_;
  TensorPtr<S> mask_slope_, mask_w_, mask_b_, dec_w_;
};

}  // namespace mitas
