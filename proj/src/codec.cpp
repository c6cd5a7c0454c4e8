#include "semnn/codec.h"

#include <cmath>
#include <map>
#include <stdexcept>

#include "semnn/ops.h"

namespace semnn::codec {

Shape CodecConfig::latent_shape() const {
  return {code_channels, height / std::size_t(stride), width / std::size_t(stride)};
}

void CodecConfig::validate() const {
  if (in_channels == 0 || height == 0 || width == 0 || code_channels == 0) {
    throw std::invalid_argument("codec: channel and spatial extents must be positive");
  }
  if (stride < 1 || height % std::size_t(stride) || width % std::size_t(stride)) {
    throw std::invalid_argument("codec: stride " + std::to_string(stride) +
                                " must divide the split-point extents " + shape_str(split_shape()));
  }
  if (blocks < 1) throw std::invalid_argument("codec: decoder needs at least one block");
  if (gate_hidden < 1) throw std::invalid_argument("codec: gate_hidden must be positive");
}

namespace {

Tensor batched(const Tensor& x, bool& squeezed) {
  squeezed = x.rank() == 3;
  if (!squeezed) return x;
  Shape s{1};
  s.insert(s.end(), x.shape().begin(), x.shape().end());
  return reshape(x, s);
}

Tensor unbatched(const Tensor& x, bool squeezed) {
  if (!squeezed) return x;
  return reshape(x, Shape(x.shape().begin() + 1, x.shape().end()));
}

// Same-size transpose conv geometry for stride s: k = s + 2p gives output = s * input.
int up_padding(int s) { return (s + 1) / 2; }
std::size_t up_kernel(int s) { return std::size_t(s + 2 * up_padding(s)); }

}  // namespace

EncoderModel::EncoderModel(const CodecConfig& c, nn::Rng& rng)
    : conv(c.in_channels, c.code_channels, 3, c.stride, 1, rng),
      gdn(c.code_channels),
      prelu(c.code_channels),
      input_shape(c.split_shape()) {}

Tensor EncoderModel::operator()(const Tensor& features) const {
  bool sq = false;
  Tensor x = batched(features, sq);
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != input_shape) {
    throw ShapeError("encode: expected features " + shape_str(input_shape) + ", got " +
                     shape_str(features.shape()));
  }
  Tensor z = nn::prelu(nn::gdn(conv(x), gdn.beta, gdn.gamma), prelu.slope);
  return unbatched(z, sq);
}

nn::ParamList EncoderModel::params() const {
  nn::ParamList out;
  nn::append_params(out, "conv", conv.params());
  nn::append_params(out, "gdn", gdn.params());
  nn::append_params(out, "prelu", prelu.params());
  return out;
}

AttentionGate::AttentionGate(std::size_t channels, const CodecConfig& c, nn::Rng& rng)
    : mode(c.gate), log_feature(c.ber_log_feature) {
  if (mode == GateMode::kChannel) {
    mlp = nn::Mlp(channels + ber_features(), c.gate_hidden, channels, rng);
  } else if (mode == GateMode::kSpatial) {
    const double bound = 1.0 / std::sqrt(double(channels));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(channels);
    for (auto& v : w) v = u(rng);
    spatial_weight = Tensor({1, channels, 1, 1}, std::move(w), true);
    ber_bias = nn::Linear(ber_features(), 1, rng);
  }
}

Tensor AttentionGate::gate(const Tensor& x, std::span<const double> ber) const {
  const std::size_t n = x.dim(0);
  if (ber.size() != n) {
    throw ShapeError("attention gate: " + std::to_string(ber.size()) + " BER values for batch of " +
                     std::to_string(n));
  }
  const std::size_t nb = ber_features();
  std::vector<double> feats(n * nb);
  for (std::size_t i = 0; i < n; ++i) {
    if (ber[i] < 0.0 || ber[i] > 1.0) throw std::invalid_argument("decode: ber must be in [0,1]");
    feats[i * nb] = ber[i];
    if (log_feature) feats[i * nb + 1] = std::log10(ber[i] + 1e-6);
  }
  Tensor b({n, nb}, std::move(feats));
  if (mode == GateMode::kChannel) return nn::sigmoid(mlp(concat_cols(global_avg_pool(x), b)));
  if (mode == GateMode::kSpatial) {
    Tensor s = conv2d(x, spatial_weight, Tensor(), 1, 0);
    return nn::sigmoid(shift_channels(s, ber_bias(b)));
  }
  throw std::logic_error("attention gate: fixed gates have no gate tensor");
}

Tensor AttentionGate::operator()(const Tensor& x, std::span<const double> ber) const {
  if (mode == GateMode::kFixed) return x;
  Tensor g = gate(x, ber);
  return mode == GateMode::kChannel ? scale_channels(x, g) : scale_spatial(x, g);
}

nn::ParamList AttentionGate::params() const {
  if (mode == GateMode::kChannel) return mlp.params();
  if (mode == GateMode::kSpatial) {
    nn::ParamList out{{"spatial_weight", spatial_weight}};
    nn::append_params(out, "ber_bias", ber_bias.params());
    return out;
  }
  return {};
}

DecoderModel::DecoderModel(const CodecConfig& c, nn::Rng& rng) : output_shape(c.split_shape()) {
  std::size_t prev = c.code_channels;
  const double ratio = double(c.in_channels) / double(c.code_channels);
  for (std::size_t b = 1; b <= c.blocks; ++b) {
    std::size_t width = std::size_t(std::lround(double(c.code_channels) *
                                                std::pow(ratio, double(b) / double(c.blocks))));
    width = std::max<std::size_t>(width, 1);
    DecoderBlock blk;
    if (b == 1) blk.up = nn::TransposeConv2d(prev, width, up_kernel(c.stride), c.stride, up_padding(c.stride), rng);
    else blk.up = nn::TransposeConv2d(prev, width, 3, 1, 1, rng);
    blk.igdn = nn::GdnParams(width);
    blk.prelu = nn::PreluParams(width);
    blk.gate = AttentionGate(width, c, rng);
    blocks.push_back(std::move(blk));
    prev = width;
  }
  proj = nn::Conv2d(prev, c.in_channels, 1, 1, 0, rng);
}

Tensor DecoderModel::operator()(const Tensor& z_hat, std::span<const double> ber) const {
  bool sq = false;
  Tensor x = batched(z_hat, sq);
  for (const auto& blk : blocks) {
    x = blk.up(x);
    x = nn::igdn(x, blk.igdn.beta, blk.igdn.gamma);
    x = nn::prelu(x, blk.prelu.slope);
    x = blk.gate(x, ber);
  }
  x = proj(x);
  if (Shape(x.shape().begin() + 1, x.shape().end()) != output_shape) {
    throw ShapeError("decode: produced " + shape_str(x.shape()) + ", split point is " +
                     shape_str(output_shape));
  }
  return unbatched(x, sq);
}

nn::ParamList DecoderModel::params() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    nn::append_params(out, p + ".up", blocks[i].up.params());
    nn::append_params(out, p + ".igdn", blocks[i].igdn.params());
    nn::append_params(out, p + ".prelu", blocks[i].prelu.params());
    nn::append_params(out, p + ".gate", blocks[i].gate.params());
  }
  nn::append_params(out, "proj", proj.params());
  return out;
}

std::size_t param_count(const nn::ParamList& p) {
  std::size_t n = 0;
  for (const auto& [name, t] : p) n += t.size();
  return n;
}

SemanticCodec::SemanticCodec(const CodecConfig& c, std::uint64_t seed) : config(c) {
  c.validate();
  nn::Rng rng(seed);
  encoder = EncoderModel(c, rng);
  quantizer = quant::make_quantizer(c.levels, c.per_channel_centers ? c.code_channels : 1,
                                    c.per_channel_centers);
  decoder = DecoderModel(c, rng);
}

nn::ParamList SemanticCodec::params() const {
  nn::ParamList out;
  nn::append_params(out, "encoder", encoder.params());
  out.emplace_back("quantizer.centers", quantizer.centers);
  nn::append_params(out, "decoder", decoder.params());
  return out;
}

void SemanticCodec::reproject() {
  encoder.gdn.reproject();
  for (auto& b : decoder.blocks) b.igdn.reproject();
}

double SemanticCodec::asymmetry_ratio() const {
  return double(param_count(decoder.params())) / double(param_count(encoder.params()));
}

std::vector<NamedTensor> SemanticCodec::to_tensors() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params()) {
    out.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  }
  out.push_back({"quantizer.sigma", {1}, {quantizer.sigma}});
  return out;
}

void SemanticCodec::load_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (auto& [name, t] : params()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint is missing tensor " + name);
    if (it->second->shape != t.shape()) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(it->second->shape) +
                    ", model expects " + shape_str(t.shape()));
    }
    Tensor handle = t;
    handle.mutable_values() = it->second->values;
  }
  if (auto it = by_name.find("quantizer.sigma"); it != by_name.end()) quantizer.sigma = it->second->values.at(0);
}

SemanticCodec SemanticCodec::clone() const {
  SemanticCodec c(config, 0);
  c.load_tensors(to_tensors());
  c.quantizer.usage = quantizer.usage;
  return c;
}

Tensor encode(const Tensor& features, const EncoderModel& e) { return e(features); }

Tensor decode(const Tensor& z_hat, std::span<const double> ber, const DecoderModel& d) {
  return d(z_hat, ber);
}

LinkResult send_indices(std::span<const int> indices, int width, const channel::ChannelConfig& c,
                        channel::RngState& rng) {
  auto stream = bits::pack_fixed(indices, width);
  auto tx = channel::transmit(stream, c, rng);
  LinkResult r;
  r.received = bits::unpack_fixed(tx.stream);
  r.ber_used = tx.ber_used;
  r.flips = tx.flips;
  r.wire_bits = stream.bit_length();
  return r;
}

double side_ber(double ber_used, const OffloadOptions& o, channel::RngState& rng) {
  switch (o.ber_side) {
    case BerSide::kTrue: return ber_used;
    case BerSide::kZero: return 0.0;
    case BerSide::kEstimated: return channel::estimate_ber(ber_used, o.pilot_bits, rng);
  }
  return ber_used;
}

OffloadResult offload(const Tensor& features, const SemanticCodec& codec, const channel::ChannelConfig& c,
                      channel::RngState& rng, const OffloadOptions& o) {
  NoGradGuard no_grad;
  bool sq = false;
  Tensor x = batched(features, sq);
  const std::size_t n = x.dim(0);
  const auto& q = codec.quantizer;

  Tensor z = codec.encoder(x);
  auto idx = quant::hard_quantize(z, q);
  Tensor zq(z.shape(), quant::dequantize(idx, z.shape(), q));
  auto sliced = xai::slice(zq, o.slice_ratio);

  // Crop indices in the same layout as the cropped latent.
  Tensor idx_t(z.shape(), std::vector<double>(idx.begin(), idx.end()));
  auto kept = xai::slice(idx_t, o.slice_ratio).crop;
  std::vector<int> sent(kept.size());
  for (std::size_t i = 0; i < sent.size(); ++i) sent[i] = int(kept[i]);

  auto link = send_indices(sent, q.bits_per_symbol(), c, rng);
  Tensor rx(kept.shape(), quant::dequantize(link.received, kept.shape(), q));
  Tensor z_hat = xai::recover(rx, sliced.spec, o.fill);

  OffloadResult r;
  r.ber_used = link.ber_used;
  r.ber_side = side_ber(link.ber_used, o, rng);
  std::vector<double> ber(n, r.ber_side);
  r.reconstructed = unbatched(codec.decoder(z_hat, ber), sq);
  r.wire_bits = link.wire_bits / n;
  r.spec = sliced.spec;
  r.sent = std::move(sent);
  r.received = std::move(link.received);
  return r;
}

std::size_t wire_bits(const CodecConfig& c, const quant::QuantizerState& q, double slice_ratio) {
  const auto ls = c.latent_shape();
  const auto spec = xai::slice_spec(ls[1], ls[2], slice_ratio);
  return ls[0] * spec.kept() * std::size_t(q.bits_per_symbol());
}

double compression_ratio_vs_float(const quant::QuantizerState& q) {
  return 64.0 / double(q.bits_per_symbol());
}

std::string gate_mode_name(GateMode m) {
  switch (m) {
    case GateMode::kChannel: return "channel";
    case GateMode::kSpatial: return "spatial";
    case GateMode::kFixed: return "fixed";
  }
  return "channel";
}

GateMode parse_gate_mode(const std::string& s) {
  if (s == "channel") return GateMode::kChannel;
  if (s == "spatial") return GateMode::kSpatial;
  if (s == "fixed") return GateMode::kFixed;
  throw std::invalid_argument("unknown gate mode '" + s + "' (channel, spatial, fixed)");
}

}  // namespace semnn::codec
