#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semnn/checkpoint.h"
#include "semnn/layers.h"

namespace semnn::task {

struct TaskConfig {
  std::size_t classes = 4;
  std::size_t width = 8;  // channels of the first convolution
  std::size_t split = 1;  // number of stages run on the device, 1..3
};

// Tiny CNN: three stride-2 conv+ReLU stages, global average pooling and a
// linear head. The device part runs the first `split` stages.
class TaskModel {
 public:
  TaskModel() = default;
  TaskModel(const TaskConfig& c, std::uint64_t seed);

  const TaskConfig& config() const { return config_; }
  Tensor device(const Tensor& images) const;
  Tensor edge(const Tensor& features) const;
  Tensor forward(const Tensor& images) const { return edge(device(images)); }
  // Per-sample feature shape at the split point for 3x32x32 inputs.
  Shape split_shape() const;

  nn::ParamList params() const;
  // Frozen parameters stop accumulating gradients; inputs still receive them.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  std::uint64_t param_hash() const;

  std::vector<NamedTensor> to_tensors() const;
  void load_tensors(const std::vector<NamedTensor>& tensors);

 private:
  Tensor stage(std::size_t i, const Tensor& x) const;

  TaskConfig config_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear head_;
  bool frozen_ = false;
};

}  // namespace semnn::task
