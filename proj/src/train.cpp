#include "semnn/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

#include "semnn/ops.h"
#include "semnn/optim.h"
#include "semnn/quantizer.h"

namespace semnn::train {

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, lambda, r, xai_cap}) {
    if (!std::isfinite(v)) throw std::invalid_argument("loss weights must be finite");
  }
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("loss weights alpha, beta, gamma must be >= 0");
  }
}

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (task_epochs == 0 || stage1_epochs == 0 || stage2_epochs == 0) {
    throw std::invalid_argument("epochs must be positive");
  }
  if (!(task_lr > 0.0) || !(codec_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(sigma_start > 0.0) || !(sigma_end > 0.0)) throw std::invalid_argument("sigma must be positive");
  channel.validate();
  weights.validate();
}

Tensor FeatureSet::batch(std::span<const std::size_t> idx) const {
  const std::size_t m = numel(shape);
  std::vector<double> v(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(values.begin() + long(idx[i] * m), m, v.begin() + long(i * m));
  Shape s{idx.size()};
  s.insert(s.end(), shape.begin(), shape.end());
  return Tensor(s, std::move(v));
}

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

std::size_t correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto v = logits.values();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * k, k);
    ok += std::size_t(std::max_element(row.begin(), row.end()) - row.begin()) == std::size_t(labels[i]);
  }
  return ok;
}

void check_finite(double loss, const char* where, std::uint64_t seed, std::size_t step) {
  if (!std::isfinite(loss)) throw optim::DivergenceError(where, seed, step);
}

std::uint64_t ber_key(double ber) {
  std::uint64_t k;
  std::memcpy(&k, &ber, sizeof k);
  return k;
}

enum StageTag : std::uint64_t { kTaskTag = 11, kStage1Tag = 21, kStage2Tag = 31, kEvalTag = 41 };

// Pack -> channel -> unpack for a batch, one BER draw per batch or per sample.
struct BatchLink {
  std::vector<int> received;
  std::vector<double> ber_used;  // per sample
  std::size_t wire_bits = 0;     // per sample
};

BatchLink transmit_batch(std::span<const int> idx, std::size_t n, int width, const TrainConfig& cfg,
                         channel::RngState& rng) {
  BatchLink out;
  const std::size_t m = idx.size() / n;
  if (!cfg.per_sample_ber) {
    auto link = codec::send_indices(idx, width, cfg.channel, rng);
    out.received = std::move(link.received);
    out.ber_used.assign(n, link.ber_used);
  } else {
    out.received.resize(idx.size());
    out.ber_used.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto link = codec::send_indices(idx.subspan(i * m, m), width, cfg.channel, rng);
      std::copy(link.received.begin(), link.received.end(), out.received.begin() + long(i * m));
      out.ber_used[i] = link.ber_used;
    }
  }
  out.wire_bits = m * std::size_t(width);
  return out;
}

std::vector<double> side_info(const std::vector<double>& ber_used, const TrainConfig& cfg,
                              channel::RngState& rng) {
  codec::OffloadOptions o;
  o.ber_side = cfg.ber_side;
  o.pilot_bits = cfg.pilot_bits;
  std::vector<double> out(ber_used.size());
  for (std::size_t i = 0; i < ber_used.size(); ++i) out[i] = codec::side_ber(ber_used[i], o, rng);
  return out;
}

void warm_up_centers(codec::SemanticCodec& codec, const FeatureSet& fs, std::span<const std::size_t> idx) {
  NoGradGuard ng;
  Tensor z = codec.encoder(fs.batch(idx));
  auto v = z.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  quant::init_centers_uniform(codec.quantizer, *lo, *hi);
}

double anneal(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  if (total <= 1) return cfg.sigma_end;
  const double t = double(step) / double(total - 1);
  return cfg.sigma_start * std::pow(cfg.sigma_end / cfg.sigma_start, t);
}

void scale_grads(const nn::ParamList& params, double s) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    auto& g = t.node()->grad;
    for (auto& v : g) v *= s;
  }
}

std::vector<double> dequantize_hard(const Tensor& z, const std::vector<int>& idx, const quant::QuantizerState& q) {
  return quant::dequantize(idx, z.shape(), q);
}

// Cropped layout of integer indices, matching xai::slice on the latent.
std::vector<int> crop_indices(const std::vector<int>& idx, const Shape& shape, double ratio) {
  if (ratio >= 1.0) return idx;
  Tensor t(shape, std::vector<double>(idx.begin(), idx.end()));
  auto c = xai::slice(t, ratio).crop;
  std::vector<int> out(c.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = int(c[i]);
  return out;
}

}  // namespace

FeatureSet cache_features(const task::TaskModel& model, const data::Dataset& d, std::size_t batch) {
  NoGradGuard ng;
  FeatureSet fs;
  fs.shape = model.split_shape();
  fs.labels = d.labels;
  fs.values.reserve(d.size() * numel(fs.shape));
  for (std::size_t b = 0; b < d.size(); b += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(d.size(), b + batch); ++i) idx.push_back(i);
    Tensor f = model.device(d.images(idx));
    fs.values.insert(fs.values.end(), f.values().begin(), f.values().end());
  }
  return fs;
}

double task_accuracy(const task::TaskModel& model, const data::Dataset& d) {
  NoGradGuard ng;
  std::size_t ok = 0;
  for (std::size_t b = 0; b < d.size(); b += 100) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(d.size(), b + 100); ++i) idx.push_back(i);
    ok += correct(model.forward(d.images(idx)), gather_labels(d.labels, idx));
  }
  return double(ok) / double(d.size());
}

TaskTrainResult train_task_model(task::TaskModel& model, const data::Dataset& train_set,
                                 const data::Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  model.set_frozen(false);
  optim::Sgd opt(model.params(), cfg.task_momentum);
  std::mt19937_64 rng(channel::derive_seed(cfg.seed, kTaskTag));
  auto order = iota(train_set.size());
  TaskTrainResult res;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.task_epochs; ++epoch) {
    const double lr = optim::step_lr(cfg.task_lr, epoch, cfg.task_epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t ok = 0, batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch, order.size() - b));
      auto labels = gather_labels(train_set.labels, idx);
      opt.zero_grad();
      Tensor logits = model.forward(train_set.images(idx));
      Tensor loss = nn::cross_entropy_loss(logits, labels);
      check_finite(loss.item(), "task training", cfg.seed, step);
      ok += correct(logits, labels);
      loss_sum += loss.item();
      loss.backward();
      opt.step(lr);
      ++step;
      ++batches;
    }
    EpochLog e;
    e.stage = "task";
    e.epoch = epoch;
    e.accuracy = double(ok) / double(order.size());
    e.loss_cls = e.loss_total = loss_sum / double(batches);
    res.epochs.push_back(e);
  }
  model.set_frozen(true);
  res.val_accuracy = task_accuracy(model, val_set);
  return res;
}

StageResult stage1_denoise(codec::SemanticCodec& codec, const FeatureSet& train_set, const TrainConfig& cfg) {
  cfg.validate();
  auto params = codec.params();
  optim::Adam opt(params);
  std::mt19937_64 order_rng(channel::derive_seed(cfg.seed, kStage1Tag, 0));
  channel::RngState ch_rng(channel::derive_seed(cfg.seed, kStage1Tag, 1));
  auto order = iota(train_set.size());
  auto& q = codec.quantizer;
  const int width = q.bits_per_symbol();
  const std::size_t per_epoch = (order.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total = per_epoch * cfg.stage1_epochs;

  std::shuffle(order.begin(), order.end(), order_rng);
  warm_up_centers(codec, train_set, std::span(order).first(std::min(order.size(), cfg.batch)));

  StageResult res;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    const double lr = optim::step_lr(cfg.codec_lr, epoch, cfg.stage1_epochs);
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0, ber_sum = 0.0;
    std::vector<double> usage(q.levels(), 0.0);
    std::size_t batches = 0, wire = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch, order.size() - b));
      const std::size_t n = idx.size();
      q.sigma = anneal(cfg, step, total);
      opt.zero_grad();
      Tensor f = train_set.batch(idx);
      Tensor z = codec.encoder(f);
      auto soft = quant::soft_quantize(z, q);
      auto hard_idx = quant::hard_quantize(z, q);
      for (int i : hard_idx) usage[std::size_t(i)] += 1.0;
      auto hard = dequantize_hard(z, hard_idx, q);
      auto link = transmit_batch(hard_idx, n, width, cfg, ch_rng);
      auto rx = quant::dequantize(link.received, z.shape(), q);
      // Channel error enters as a constant offset on the soft latent.
      std::vector<double> err(rx.size());
      for (std::size_t i = 0; i < rx.size(); ++i) err[i] = rx[i] - hard[i];
      Tensor z_in = soft.z_soft + Tensor(z.shape(), std::move(err));
      auto side = side_info(link.ber_used, cfg, ch_rng);
      Tensor out = codec.decoder(z_in, side);
      Tensor loss = nn::mse_loss(out, f);
      check_finite(loss.item(), "stage 1", cfg.seed, step);
      loss.backward();
      opt.step(lr);
      codec.reproject();
      loss_sum += loss.item();
      for (double v : link.ber_used) ber_sum += v / double(n);
      wire = link.wire_bits;
      res.steps.push_back({loss.item(), 0.0, 0.0, 0.0});
      ++step;
      ++batches;
    }
    const double tot = std::accumulate(usage.begin(), usage.end(), 0.0);
    for (auto& u : usage) u /= tot;
    EpochLog e;
    e.stage = "stage1";
    e.epoch = epoch;
    e.ber = ber_sum / double(batches);
    e.wire_bits = wire;
    e.entropy_bits = quant::entropy_bits(usage);
    e.loss_total = loss_sum / double(batches);
    res.epochs.push_back(e);
  }
  q.sigma = cfg.sigma_end;
  return res;
}

StageResult stage2_semantic(codec::SemanticCodec& codec, const task::TaskModel& model,
                            const FeatureSet& train_set, const TrainConfig& cfg) {
  cfg.validate();
  if (!model.frozen()) throw std::logic_error("stage 2: the task model must be frozen");
  const auto& w = cfg.weights;
  const auto xcfg = w.xai();
  auto params = codec.params();
  auto dec_params = codec.decoder.params();
  optim::Adam opt(params);
  std::mt19937_64 order_rng(channel::derive_seed(cfg.seed, kStage2Tag, 0));
  channel::RngState ch_rng(channel::derive_seed(cfg.seed, kStage2Tag, 1));
  auto order = iota(train_set.size());
  auto& q = codec.quantizer;
  const int width = q.bits_per_symbol();
  const std::size_t per_epoch = (order.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total = per_epoch * cfg.stage2_epochs;

  if (cfg.one_stage) {
    std::shuffle(order.begin(), order.end(), order_rng);
    warm_up_centers(codec, train_set, std::span(order).first(std::min(order.size(), cfg.batch)));
  }

  StageResult res;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    const double lr = optim::step_lr(cfg.codec_lr, epoch, cfg.stage2_epochs);
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog e;
    e.stage = "stage2";
    e.epoch = epoch;
    std::vector<double> usage(q.levels(), 0.0);
    std::size_t batches = 0, ok = 0, pos = 0, elems = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch, order.size() - b));
      const std::size_t n = idx.size();
      if (cfg.one_stage) q.sigma = anneal(cfg, step, total);
      auto labels = gather_labels(train_set.labels, idx);
      opt.zero_grad();

      Tensor z = codec.encoder(train_set.batch(idx));
      auto soft = quant::soft_quantize(z, q);
      auto hard_idx = quant::hard_quantize(z, q);
      for (int i : hard_idx) usage[std::size_t(i)] += 1.0;
      auto sl = xai::slice(soft.z_soft, cfg.slice_ratio);
      auto sent = crop_indices(hard_idx, z.shape(), cfg.slice_ratio);
      auto link = transmit_batch(sent, n, width, cfg, ch_rng);
      Tensor z_hat = semnn::straight_through(sl.crop, quant::dequantize(link.received, sl.crop.shape(), q));
      Tensor z_dec = xai::recover(z_hat, sl.spec, cfg.fill);
      auto side = side_info(link.ber_used, cfg, ch_rng);

      // Receiver side on a leaf: decoder and edge gradients, plus dCE/dz for attribution.
      Tensor leaf(z_dec.shape(), std::vector<double>(z_dec.values().begin(), z_dec.values().end()), true);
      Tensor logits = model.edge(codec.decoder(leaf, side));
      Tensor ce = nn::cross_entropy_loss(logits, labels);
      ok += correct(logits, labels);
      ce.backward();
      scale_grads(dec_params, w.beta);
      std::vector<double> g(leaf.size(), 0.0);
      if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), g.begin());

      // Sender side: beta * CE through the recorded receiver gradient, then div and XAI.
      std::vector<double> g_cls(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) g_cls[i] = w.beta * g[i];
      Tensor up = dot_const(z_dec, g_cls);
      Tensor div = quant::div_loss(quant::usage_distribution(soft.assign));
      if (w.alpha > 0.0) up = up + div * w.alpha;
      // Attribution of the true-class log-likelihood: phi = z * d(-CE)/dz.
      std::vector<double> g_score(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) g_score[i] = -g[i];
      Tensor phi = z_dec * Tensor(z_dec.shape(), std::move(g_score));
      Tensor lx = xai::xai_loss(phi, xcfg);
      if (w.gamma > 0.0) up = up + lx * w.gamma;
      up.backward();

      const double l_div = div.item(), l_cls = ce.item(), l_xai = lx.item();
      const double l_tot = w.alpha * l_div + w.beta * l_cls + w.gamma * l_xai;
      check_finite(l_tot, "stage 2", cfg.seed, step);
      opt.step(lr);
      codec.reproject();

      for (double v : phi.values()) pos += v > 0.0;
      elems += phi.size();
      for (double v : link.ber_used) e.ber += v / double(n);
      e.wire_bits = link.wire_bits;
      e.loss_div += l_div;
      e.loss_cls += l_cls;
      e.loss_xai += l_xai;
      e.loss_total += l_tot;
      res.steps.push_back({l_tot, l_div, l_cls, l_xai});
      ++step;
      ++batches;
    }
    const double tot = std::accumulate(usage.begin(), usage.end(), 0.0);
    for (auto& u : usage) u /= tot;
    e.ber /= double(batches);
    e.accuracy = double(ok) / double(order.size());
    e.entropy_bits = quant::entropy_bits(usage);
    e.pos_fraction = double(pos) / double(elems);
    e.loss_div /= double(batches);
    e.loss_cls /= double(batches);
    e.loss_xai /= double(batches);
    e.loss_total /= double(batches);
    res.epochs.push_back(e);
  }
  if (cfg.one_stage) q.sigma = cfg.sigma_end;
  return res;
}

double reconstruction_mse(const codec::SemanticCodec& codec, const FeatureSet& fs,
                          const channel::ChannelConfig& c, std::uint64_t seed) {
  channel::RngState rng(seed);
  double se = 0.0;
  for (std::size_t b = 0; b < fs.size(); b += 100) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(fs.size(), b + 100); ++i) idx.push_back(i);
    Tensor f = fs.batch(idx);
    auto r = codec::offload(f, codec, c, rng);
    auto a = f.values(), o = r.reconstructed.values();
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - o[i]) * (a[i] - o[i]);
  }
  return se / double(fs.values.size());
}

double usage_entropy(const codec::SemanticCodec& codec, const FeatureSet& fs) {
  NoGradGuard ng;
  std::vector<double> counts(codec.quantizer.levels(), 0.0);
  for (std::size_t b = 0; b < fs.size(); b += 100) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(fs.size(), b + 100); ++i) idx.push_back(i);
    for (int i : quant::hard_quantize(codec.encoder(fs.batch(idx)), codec.quantizer)) counts[std::size_t(i)] += 1.0;
  }
  const double tot = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (auto& c : counts) c /= tot;
  return quant::entropy_bits(counts);
}

double MetricsTable::mean_at(double ber) const {
  for (const auto& s : summary)
    if (s.ber == ber) return s.mean;
  throw std::out_of_range("no evaluation at BER " + std::to_string(ber));
}

MetricsTable evaluate(const codec::SemanticCodec& codec, const task::TaskModel& model,
                      const FeatureSet& val_set, const EvalConfig& cfg) {
  MetricsTable t;
  auto bers = cfg.bers;
  std::sort(bers.begin(), bers.end());
  auto seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  NoGradGuard ng;
  for (double ber : bers) {
    const auto ch = channel::ChannelConfig::fixed(ber);
    EvalSummary s;
    s.ber = ber;
    std::vector<double> accs;
    for (auto seed : seeds) {
      for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
        channel::RngState rng(channel::derive_seed(seed ^ kEvalTag, ber_key(ber), rep));
        std::size_t ok = 0, wire = 0;
        for (std::size_t b = 0; b < val_set.size(); b += cfg.batch) {
          std::vector<std::size_t> idx;
          for (std::size_t i = b; i < std::min(val_set.size(), b + cfg.batch); ++i) idx.push_back(i);
          auto r = codec::offload(val_set.batch(idx), codec, ch, rng, cfg.offload);
          ok += correct(model.edge(r.reconstructed), gather_labels(val_set.labels, idx));
          wire = r.wire_bits;
        }
        const double acc = double(ok) / double(val_set.size());
        t.rows.push_back({ber, seed, rep, acc, wire});
        accs.push_back(acc);
      }
    }
    s.runs = accs.size();
    s.mean = std::accumulate(accs.begin(), accs.end(), 0.0) / double(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - s.mean) * (a - s.mean);
    s.stddev = accs.size() > 1 ? std::sqrt(var / double(accs.size() - 1)) : 0.0;
    t.summary.push_back(s);
  }
  return t;
}

std::string csv_header() {
  return "stage,epoch,ber,seed,accuracy,wire_bits,entropy_bits,pos_fraction,loss_total,loss_div,loss_cls,loss_xai";
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

std::string csv_line(const EpochLog& e, std::uint64_t seed) {
  return e.stage + "," + std::to_string(e.epoch) + "," + fmt(e.ber) + "," + std::to_string(seed) + "," +
         fmt(e.accuracy) + "," + std::to_string(e.wire_bits) + "," + fmt(e.entropy_bits) + "," +
         fmt(e.pos_fraction) + "," + fmt(e.loss_total) + "," + fmt(e.loss_div) + "," + fmt(e.loss_cls) + "," +
         fmt(e.loss_xai);
}

std::string csv_line(const EvalRow& r, double entropy_bits) {
  return "eval," + std::to_string(r.rep) + "," + fmt(r.ber) + "," + std::to_string(r.seed) + "," +
         fmt(r.accuracy) + "," + std::to_string(r.wire_bits) + "," + fmt(entropy_bits) + ",0,0,0,0,0";
}

}  // namespace semnn::train
