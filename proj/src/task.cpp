#include "semnn/task.h"

#include <map>
#include <stdexcept>

#include "semnn/ops.h"

namespace semnn::task {

TaskModel::TaskModel(const TaskConfig& c, std::uint64_t seed) : config_(c) {
  if (c.split < 1 || c.split > 3) {
    throw std::invalid_argument("task model: split must be in [1, 3], got " + std::to_string(c.split));
  }
  if (c.classes < 2 || c.width == 0) throw std::invalid_argument("task model: bad classes or width");
  nn::Rng rng(seed);
  const std::size_t w = c.width;
  convs_.emplace_back(3, w, 3, 2, 1, rng);
  convs_.emplace_back(w, 2 * w, 3, 2, 1, rng);
  convs_.emplace_back(2 * w, 2 * w, 3, 2, 1, rng);
  head_ = nn::Linear(2 * w, c.classes, rng);
}

Tensor TaskModel::stage(std::size_t i, const Tensor& x) const { return relu(convs_[i](x)); }

Tensor TaskModel::device(const Tensor& images) const {
  Tensor x = images;
  for (std::size_t i = 0; i < config_.split; ++i) x = stage(i, x);
  return x;
}

Tensor TaskModel::edge(const Tensor& features) const {
  Tensor x = features;
  for (std::size_t i = config_.split; i < convs_.size(); ++i) x = stage(i, x);
  return head_(global_avg_pool(x));
}

Shape TaskModel::split_shape() const {
  const std::size_t side = 32 >> config_.split;
  return {config_.split == 1 ? config_.width : 2 * config_.width, side, side};
}

nn::ParamList TaskModel::params() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) nn::append_params(out, "conv" + std::to_string(i), convs_[i].params());
  nn::append_params(out, "head", head_.params());
  return out;
}

void TaskModel::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& [name, t] : params()) {
    Tensor h = t;
    h.set_requires_grad(!frozen);
    h.zero_grad();
  }
}

std::uint64_t TaskModel::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params()) h = fnv1a(t.values().data(), t.size() * sizeof(double), h);
  return h;
}

std::vector<NamedTensor> TaskModel::to_tensors() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params()) out.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  return out;
}

void TaskModel::load_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (auto& [name, t] : params()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("task checkpoint is missing tensor " + name);
    if (it->second->shape != t.shape()) throw IoError("task checkpoint tensor " + name + " has wrong shape");
    Tensor h = t;
    h.mutable_values() = it->second->values;
  }
}

}  // namespace semnn::task
