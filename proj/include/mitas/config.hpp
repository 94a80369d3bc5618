// Model hyperparameters and the named presets.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

#include "mitas/sharing.hpp"

namespace mitas {

enum class MaskActivation { Sigmoid, SoftmaxOverSources };

struct ModelConfig {
  int encoder_channels = 512;   // N
  int encoder_window = 16;      // L, samples
  int encoder_stride = 8;       // samples, must divide L
  int bottleneck_channels = 128;  // B
  int block_hidden = 512;       // H
  int skip_channels = 128;      // Sc; 0 disables the skip path
  int depthwise_kernel = 3;     // P, odd (symmetric same padding)
  int blocks_per_stack = 8;     // X; block x runs at dilation 2^x
  int stacks = 3;               // R
  int sources = 2;              // C
  MaskActivation mask_activation = MaskActivation::Sigmoid;
  bool skip_connections = true;
  SharingConfig sharing;

  int dilation_of(int x) const { return 1 << x; }
  int mask_input_channels() const { return skip_connections ? skip_channels : bottleneck_channels; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
    if (encoder_channels < 1 || encoder_window < 1 || encoder_stride < 1 ||
        bottleneck_channels < 1 || block_hidden < 1 || depthwise_kernel < 1)
      fail("all extents must be positive");
    if (blocks_per_stack < 1) fail("blocks_per_stack (X) must be >= 1");
    if (stacks < 1) fail("stacks (R) must be >= 1");
    if (encoder_window % encoder_stride != 0) {
      std::ostringstream os;
      os << "encoder stride " << encoder_stride << " must divide window " << encoder_window;
      fail(os.str());
    }
    if (depthwise_kernel % 2 == 0) fail("depthwise kernel (P) must be odd for symmetric padding");
    if (sources < 2 || sources > 3) fail("sources (C) must be 2 or 3");
    if (skip_connections && skip_channels < 1) fail("skip path enabled but skip_channels (Sc) is 0");
    if (!skip_connections && skip_channels != 0) fail("skip path disabled but skip_channels (Sc) nonzero");
  }
};

// Named presets. tasnet_base is calibrated to land near the 8.9M family
// size; convtasnet_base lands near 5.1M. simplified1/2 are the structural
// controls (one stack / one block per stack) of the Conv-TasNet base.
inline ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "tasnet_base") {
    c.encoder_channels = 512;
    c.encoder_window = 40;
    c.encoder_stride = 20;
    c.bottleneck_channels = 256;
    c.block_hidden = 512;
    c.skip_channels = 0;
    c.skip_connections = false;
    c.depthwise_kernel = 3;
    c.blocks_per_stack = 8;
    c.stacks = 4;
    c.mask_activation = MaskActivation::SoftmaxOverSources;
  } else if (name == "convtasnet_base") {
    c.encoder_channels = 512;
    c.encoder_window = 16;
    c.encoder_stride = 8;
    c.bottleneck_channels = 128;
    c.block_hidden = 512;
    c.skip_channels = 128;
    c.skip_connections = true;
    c.depthwise_kernel = 3;
    c.blocks_per_stack = 8;
    c.stacks = 3;
    c.mask_activation = MaskActivation::Sigmoid;
  } else if (name == "simplified1") {
    c = preset("convtasnet_base");
    c.stacks = 1;
  } else if (name == "simplified2") {
    c = preset("convtasnet_base");
    c.blocks_per_stack = 1;
  } else if (name == "tiny") {
    c.encoder_channels = 16;
    c.encoder_window = 4;
    c.encoder_stride = 2;
    c.bottleneck_channels = 8;
    c.block_hidden = 16;
    c.skip_channels = 8;
    c.skip_connections = true;
    c.depthwise_kernel = 3;
    c.blocks_per_stack = 3;
    c.stacks = 2;
    c.mask_activation = MaskActivation::Sigmoid;
  } else {
    throw std::invalid_argument("unknown preset \"" + name +
                                "\" (expected tasnet_base, convtasnet_base, simplified1, simplified2, tiny)");
  }
  c.sources = 2;
  c.validate();
  return c;
}

}  // namespace mitas
