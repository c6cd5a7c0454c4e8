#pragma once

#include <functional>
#include <string>
#include <vector>

#include "semnn/tensor.h"

namespace semnn::gradcheck {

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over
// all entries of `wrt`, with central differences of step h.
double fd_relative_error(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, double h = 1e-5);

struct GradCase {
  std::string name;
  std::size_t instances = 0;
  double max_rel = 0.0;
};

// Every differentiable layer and loss, `instances` random instances each.
std::vector<GradCase> gradient_suite(std::size_t instances = 20, std::uint64_t seed = 2024);

}  // namespace semnn::gradcheck
