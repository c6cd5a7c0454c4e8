#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semnn/bitstream.h"
#include "semnn/channel.h"
#include "semnn/checkpoint.h"
#include "semnn/layers.h"
#include "semnn/quantizer.h"
#include "semnn/xai.h"

namespace semnn::codec {

enum class GateMode { kChannel, kSpatial, kFixed };

struct CodecConfig {
  std::size_t in_channels = 8, height = 16, width = 16;  // split-point feature shape
  std::size_t code_channels = 4;
  int stride = 2;
  std::size_t blocks = 3;
  std::size_t levels = 8;
  bool per_channel_centers = false;
  GateMode gate = GateMode::kChannel;
  bool ber_log_feature = true;  // feed log10(ber + 1e-6) next to the raw BER
  std::size_t gate_hidden = 16;

  Shape split_shape() const { return {in_channels, height, width}; }
  Shape latent_shape() const;
  void validate() const;
};

struct EncoderModel {
  nn::Conv2d conv;
  nn::GdnParams gdn;
  nn::PreluParams prelu;
  Shape input_shape;

  EncoderModel() = default;
  EncoderModel(const CodecConfig& c, nn::Rng& rng);
  // features [C,H,W] or [N,C,H,W] -> pre-quantization latent
  Tensor operator()(const Tensor& features) const;
  nn::ParamList params() const;
};

// Sigmoid gate conditioned on the feature map and the channel BER.
struct AttentionGate {
  GateMode mode = GateMode::kChannel;
  bool log_feature = true;
  nn::Mlp mlp;           // kChannel: [C + ber feats] -> C
  Tensor spatial_weight; // kSpatial: [1, C, 1, 1]
  nn::Linear ber_bias;   // kSpatial: ber feats -> 1

  AttentionGate() = default;
  AttentionGate(std::size_t channels, const CodecConfig& c, nn::Rng& rng);
  std::size_t ber_features() const { return log_feature ? 2 : 1; }
  // Gate values: [N, C] for kChannel, [N, 1, H, W] for kSpatial.
  Tensor gate(const Tensor& x, std::span<const double> ber) const;
  Tensor operator()(const Tensor& x, std::span<const double> ber) const;
  nn::ParamList params() const;
};

struct DecoderBlock {
  nn::TransposeConv2d up;
  nn::GdnParams igdn;
  nn::PreluParams prelu;
  AttentionGate gate;
};

struct DecoderModel {
  std::vector<DecoderBlock> blocks;
  nn::Conv2d proj;  // 1x1 to the split-point channel count
  Shape output_shape;

  DecoderModel() = default;
  DecoderModel(const CodecConfig& c, nn::Rng& rng);
  // z_hat [N,Cc,h,w] (or unbatched) and one BER per sample.
  Tensor operator()(const Tensor& z_hat, std::span<const double> ber) const;
  nn::ParamList params() const;
};

std::size_t param_count(const nn::ParamList& p);

struct SemanticCodec {
  CodecConfig config;
  EncoderModel encoder;
  quant::QuantizerState quantizer;
  DecoderModel decoder;

  SemanticCodec() = default;
  SemanticCodec(const CodecConfig& c, std::uint64_t seed);

  nn::ParamList params() const;  // encoder, quantizer centers, decoder
  void reproject();
  double asymmetry_ratio() const;  // decoder params / encoder params

  std::vector<NamedTensor> to_tensors() const;
  void load_tensors(const std::vector<NamedTensor>& tensors);
  // Independent copy (plain copies share parameter storage).
  SemanticCodec clone() const;
};

Tensor encode(const Tensor& features, const EncoderModel& e);
Tensor decode(const Tensor& z_hat, std::span<const double> ber, const DecoderModel& d);

enum class BerSide { kTrue, kEstimated, kZero };

struct OffloadOptions {
  double slice_ratio = 1.0;
  xai::Fill fill = xai::Fill::kReflect;
  BerSide ber_side = BerSide::kTrue;
  std::size_t pilot_bits = 1024;
};

// Indices through pack -> transmit -> unpack.
struct LinkResult {
  std::vector<int> received;
  double ber_used = 0.0;
  std::size_t flips = 0;
  std::size_t wire_bits = 0;
};
LinkResult send_indices(std::span<const int> indices, int width, const channel::ChannelConfig& c,
                        channel::RngState& rng);

// Side-information BER handed to the decoder.
double side_ber(double ber_used, const OffloadOptions& o, channel::RngState& rng);

struct OffloadResult {
  Tensor reconstructed;
  std::size_t wire_bits = 0;  // per sample
  double ber_used = 0.0;
  double ber_side = 0.0;
  xai::SliceSpec spec;
  std::vector<int> sent, received;
};

// encode -> hard quantize -> (slice) -> pack -> transmit -> unpack -> dequantize
// -> (recover) -> decode. Evaluation path: no gradient is recorded.
OffloadResult offload(const Tensor& features, const SemanticCodec& codec, const channel::ChannelConfig& c,
                      channel::RngState& rng, const OffloadOptions& o = {});

// Bits on the wire per sample for a latent of `symbols` elements.
std::size_t wire_bits(const CodecConfig& c, const quant::QuantizerState& q, double slice_ratio);
double compression_ratio_vs_float(const quant::QuantizerState& q);

std::string gate_mode_name(GateMode m);
GateMode parse_gate_mode(const std::string& s);

}  // namespace semnn::codec
