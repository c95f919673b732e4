#pragma once

#include <cstdint>
#include <vector>

#include "spherecorr/tensor.hpp"

namespace spherecorr {

struct AdamState {
  std::vector<Tensor> m;  // first moments
  std::vector<Tensor> v;  // second moments
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Moments are zero-initialized on the
// first call. Throws on shape mismatch or non-finite gradients.
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state);
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state);

double global_norm(const std::vector<Tensor>& grads);

// Rescales grads in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace spherecorr
