#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gw/core/grid.hpp"
#include "gw/nn/layers.hpp"

namespace gw::model {

enum class Variant { unet, attention_unet };

std::string variant_name(Variant v);
// Accepts "unet", "attention_unet" and "attention-unet".
Variant parse_variant(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::attention_unet;
  int in_channels = 3;
  int out_channels = 1;
  std::vector<int> encoder_widths{64, 128, 256, 512};
  double dropout_rate = 0.5;
  double leaky_slope = 0.3;
  // Per-gate intermediate width, ordered deepest gate first; empty means the
  // gated skip's channel count.
  std::vector<int> attention_inter_channels;

  int levels() const { return static_cast<int>(encoder_widths.size()); }
  int divisor() const { return 1 << levels(); }
  int inter_channels(int gate) const;

  void validate() const;
  // Throws ConfigError unless both grid dims are divisible by divisor().
  void validate_grid(const GridSpec& grid) const;

  // Every encoder and gate width divided by `divisor` (desk-scale uses 2).
  ModelConfig with_widths_divided_by(int divisor) const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerTrace {
  std::string block;
  std::vector<nn::Shape4> inputs;
  nn::Shape4 output;
};

struct BlockParameters {
  std::string block;
  std::size_t total = 0;
  std::size_t trainable = 0;
};

struct ParameterTable {
  std::vector<BlockParameters> rows;
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;

  const BlockParameters& row(const std::string& block) const;
  std::string to_text() const;
};

template <typename T>
struct ForwardResult {
  nn::Tensor4<T> output;
  // Attention coefficients per gate, deepest first; each (N, 1, H_skip, W_skip).
  std::vector<nn::Tensor4<T>> attention;
  // Set when attention maps were requested from a model without gates.
  bool attention_unavailable = false;
};

// Encoder-decoder with skip connections.
//   down_i : conv k4 s2 p1 (no bias) [-> batch norm -> dropout] -> leaky relu;
//            the first block has neither batch norm nor dropout.
//   up_i   : nearest x4 upsample -> conv k4 s2 p1 -> batch norm
//            [-> dropout, first block only] -> relu, then concatenation
//            [gated skip, up output].
//   head   : transposed conv k4 s2 p1 with bias -> sigmoid.
// The attention variant gates each skip with the decoder tensor one level
// deeper (the tensor the up block consumes).
template <typename T>
class UNet {
 public:
  UNet(const ModelConfig& config, const GridSpec& grid, std::uint64_t seed);

  // x: (N, in_channels, H, W) with H, W divisible by config().divisor().
  ForwardResult<T> forward(const nn::Tensor4<T>& x, nn::RunMode mode,
                           std::mt19937_64* rng = nullptr, bool capture_attention = false);
  // Accumulates parameter gradients for the last forward; returns dL/dx when
  // requested.
  nn::Tensor4<T> backward(const nn::Tensor4<T>& d_output, bool need_input_grad = false);

  std::vector<nn::Param<T>*> parameters();
  std::vector<const nn::Param<T>*> parameters() const;
  nn::Param<T>* find_parameter(const std::string& name);
  void zero_grad();

  ParameterTable count_parameters() const;
  const std::vector<LayerTrace>& trace() const { return trace_; }

  const ModelConfig& config() const { return config_; }
  const GridSpec& grid() const { return grid_; }
  bool has_dropout() const { return config_.dropout_rate > 0.0; }
  // Switches up blocks between the folded kernel and literal upsample + conv.
  void set_folded_upsampling(bool folded);

 private:
  struct DownBlock {
    nn::Conv2d<T> conv;
    bool use_bn = false;
    nn::BatchNorm2d<T> bn;
    bool use_dropout = false;
    nn::Dropout<T> dropout;
    nn::Activation<T> act;
  };
  struct UpBlock {
    nn::UpsampleConv2d<T> conv;
    nn::BatchNorm2d<T> bn;
    bool use_dropout = false;
    nn::Dropout<T> dropout;
    nn::Activation<T> act;
  };

  ModelConfig config_;
  GridSpec grid_;
  std::vector<DownBlock> down_;
  std::vector<nn::AttentionGate<T>> gates_;
  std::vector<UpBlock> up_;
  nn::ConvTranspose2d<T> head_;
  nn::Activation<T> out_act_{nn::ActivationKind::sigmoid};
  std::vector<int> skip_channels_;
  std::vector<LayerTrace> trace_;
};

using Model = UNet<float>;

inline Model build_model(const ModelConfig& config, const GridSpec& grid, std::uint64_t seed) {
  return Model(config, grid, seed);
}

}  // namespace gw::model
