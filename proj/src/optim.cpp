#include "spherecorr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace spherecorr {

void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& st) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]))
      throw std::invalid_argument("adam: shape mismatch at parameter " + std::to_string(i));
    if (!grads[i].all_finite())
      throw std::domain_error("adam: non-finite gradient at parameter " + std::to_string(i));
  }
  if (st.m.empty()) {
    for (const Tensor* p : params) {
      st.m.emplace_back(p->shape(), 0.0);
      st.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam: state holds a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!st.m[i].same_shape(*params[i]))
      throw std::invalid_argument("adam: state shape mismatch at parameter " + std::to_string(i));

  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    double* m = st.m[i].data();
    double* v = st.v[i].data();
    const double* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] -= st.lr * mh / (std::sqrt(vh) + st.eps);
    }
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& st) {
  std::vector<Tensor*> ptrs;
  ptrs.reserve(params.size());
  for (Tensor& p : params) ptrs.push_back(&p);
  adam_step(ptrs, grads, st);
}

double global_norm(const std::vector<Tensor>& grads) {
  double ss = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) ss += v * v;
  return std::sqrt(ss);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm && n > 0.0) {
    const double s = max_norm / n;
    for (Tensor& g : grads)
      for (double& v : g.values()) v *= s;
  }
  return n;
}

}  // namespace spherecorr
