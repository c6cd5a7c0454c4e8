#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semnn/channel.h"
#include "semnn/codec.h"
#include "semnn/data.h"
#include "semnn/task.h"
#include "semnn/xai.h"

namespace semnn::train {

struct LossWeights {
  double alpha = 2.0;  // distribution regularizer
  double beta = 1.0;   // task loss
  double gamma = 1.0;  // attribution loss
  double lambda = 0.5;
  double r = 1.0;
  double xai_cap = 1e4;

  void validate() const;
  xai::XaiLossConfig xai() const { return {lambda, r, xai_cap}; }
};

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t task_epochs = 20;
  double task_lr = 0.1;
  double task_momentum = 0.9;
  std::size_t stage1_epochs = 10;
  std::size_t stage2_epochs = 30;
  double codec_lr = 0.005;
  double sigma_start = 1.0, sigma_end = 300.0;
  channel::ChannelConfig channel;  // training-time BER schedule
  bool per_sample_ber = false;
  bool one_stage = false;  // skip stage 1; anneal sigma during stage 2 instead
  codec::BerSide ber_side = codec::BerSide::kTrue;
  std::size_t pilot_bits = 1024;
  double slice_ratio = 1.0;
  xai::Fill fill = xai::Fill::kReflect;
  xai::Method xai_method = xai::Method::kGradInput;
  int ig_steps = 8;
  LossWeights weights;
  std::uint64_t seed = 1;

  void validate() const;
};

// Split-point features of a frozen task model, computed once.
struct FeatureSet {
  Shape shape;  // per sample
  std::vector<double> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor batch(std::span<const std::size_t> idx) const;
};

FeatureSet cache_features(const task::TaskModel& model, const data::Dataset& d, std::size_t batch = 100);

struct EpochLog {
  std::string stage;
  std::size_t epoch = 0;
  double ber = 0.0;  // mean BER seen during the epoch
  double accuracy = 0.0;
  std::size_t wire_bits = 0;
  double entropy_bits = 0.0;
  double pos_fraction = 0.0;
  double loss_total = 0.0, loss_div = 0.0, loss_cls = 0.0, loss_xai = 0.0;
};

struct StepLog {
  double total = 0.0, div = 0.0, cls = 0.0, xai = 0.0;
};

struct StageResult {
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
};

struct TaskTrainResult {
  double val_accuracy = 0.0;
  std::vector<EpochLog> epochs;
};

// SGD with momentum; leaves the model frozen.
TaskTrainResult train_task_model(task::TaskModel& model, const data::Dataset& train_set,
                                 const data::Dataset& val_set, const TrainConfig& cfg);

double task_accuracy(const task::TaskModel& model, const data::Dataset& d);

// Reconstruction of split features through the channel (MSE objective).
StageResult stage1_denoise(codec::SemanticCodec& codec, const FeatureSet& train_set, const TrainConfig& cfg);

// alpha * div + beta * CE + gamma * L_XAI through the full offload path.
StageResult stage2_semantic(codec::SemanticCodec& codec, const task::TaskModel& model,
                            const FeatureSet& train_set, const TrainConfig& cfg);

// Mean squared reconstruction error of offloaded features.
double reconstruction_mse(const codec::SemanticCodec& codec, const FeatureSet& fs,
                          const channel::ChannelConfig& c, std::uint64_t seed);

// Entropy (bits) of hard-index usage over a feature set.
double usage_entropy(const codec::SemanticCodec& codec, const FeatureSet& fs);

struct EvalConfig {
  std::vector<double> bers{1e-4, 2.5e-3, 2.5e-2, 5e-2};
  std::size_t reps = 6;
  std::vector<std::uint64_t> seeds{1};
  codec::OffloadOptions offload;
  std::size_t batch = 100;
};

struct EvalRow {
  double ber = 0.0;
  std::uint64_t seed = 0;
  std::size_t rep = 0;
  double accuracy = 0.0;
  std::size_t wire_bits = 0;
};

struct EvalSummary {
  double ber = 0.0;
  double mean = 0.0, stddev = 0.0;
  std::size_t runs = 0;
};

struct MetricsTable {
  std::vector<EvalRow> rows;
  std::vector<EvalSummary> summary;  // sorted by BER
  double mean_at(double ber) const;
};

// Channel draws for (seed, ber, rep) come from an independent derived stream.
MetricsTable evaluate(const codec::SemanticCodec& codec, const task::TaskModel& model,
                      const FeatureSet& val_set, const EvalConfig& cfg);

// Metrics CSV with the fixed column set.
std::string csv_header();
std::string csv_line(const EpochLog& e, std::uint64_t seed);
std::string csv_line(const EvalRow& r, double entropy_bits);

}  // namespace semnn::train
