#include "spherecorr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "spherecorr/kernels.hpp"

namespace spherecorr {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("graph: " + msg);
}

// g += x, allocating g on first use.
void accum(Tensor& g, const Tensor& x) {
  if (g.empty()) {
    g = x;
    return;
  }
  double* gp = g.data();
  const double* xp = x.data();
  for (std::size_t i = 0; i < g.size(); ++i) gp[i] += xp[i];
}

Tensor& ensure(Tensor& g, std::size_t r, std::size_t c) {
  if (g.empty()) g = Tensor::matrix(r, c);
  return g;
}

}  // namespace

std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::scale: return "scale";
    case OpKind::sum_all: return "sum";
    case OpKind::sum_rows: return "sum_rows";
    case OpKind::sum_cols: return "sum_cols";
    case OpKind::mean: return "mean";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::layer_norm_rows: return "layer_norm_rows";
    case OpKind::l2_normalize_rows: return "l2_normalize_rows";
    case OpKind::dot_rows: return "dot_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::broadcast_rows: return "broadcast_rows";
    case OpKind::broadcast_cols: return "broadcast_cols";
  }
  return "?";
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  require(v.valid() && v.id < nodes_.size(), "unknown node");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
OpKind Graph::kind(Var v) const { return node(v).op; }

Var Graph::leaf(Tensor value) {
  require(!value.empty() && value.rank() <= 2, "leaf must be a non-empty rank-1/2 tensor");
  if (value.rank() == 1) value = Tensor({1, value.size()}, value.values());
  Node n{OpKind::leaf, {}, std::move(value)};
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require(x.same_shape(y), "add shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return push(Node{OpKind::add, {a.id, b.id}, std::move(out)});
}

Var Graph::sub(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require(x.same_shape(y), "sub shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return push(Node{OpKind::sub, {a.id, b.id}, std::move(out)});
}

Var Graph::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require(x.same_shape(y), "mul shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return push(Node{OpKind::mul, {a.id, b.id}, std::move(out)});
}

Var Graph::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  const std::size_t m = trans_a ? x.cols() : x.rows();
  const std::size_t k = trans_a ? x.rows() : x.cols();
  const std::size_t kb = trans_b ? y.cols() : y.rows();
  const std::size_t n = trans_b ? y.rows() : y.cols();
  require(k == kb, "matmul inner mismatch " + x.shape_str() + " * " + y.shape_str());
  Tensor out = Tensor::matrix(m, n);
  kernels::active().gemm(m, n, k, x.data(), trans_a, y.data(), trans_b, out.data(), false);
  Node nd{OpKind::matmul, {a.id, b.id}, std::move(out)};
  nd.t0 = trans_a;
  nd.t1 = trans_b;
  return push(std::move(nd));
}

Var Graph::scale(Var a, double s) {
  Tensor out = value(a);
  for (double& v : out.values()) v *= s;
  Node nd{OpKind::scale, {a.id}, std::move(out)};
  nd.s = s;
  return push(std::move(nd));
}

Var Graph::sum(Var a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (double v : x.values()) s += v;
  return push(Node{OpKind::sum_all, {a.id}, Tensor::scalar(s)});
}

Var Graph::sum_rows(Var a) {
  const Tensor& x = value(a);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j];
    out[i] = s;
  }
  return push(Node{OpKind::sum_rows, {a.id}, std::move(out)});
}

Var Graph::sum_cols(Var a) {
  const Tensor& x = value(a);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  return push(Node{OpKind::sum_cols, {a.id}, std::move(out)});
}

Var Graph::mean(Var a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (double v : x.values()) s += v;
  return push(Node{OpKind::mean, {a.id}, Tensor::scalar(s / static_cast<double>(x.size()))});
}

Var Graph::relu(Var a) {
  Tensor out = value(a);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(Node{OpKind::relu, {a.id}, std::move(out)});
}

Var Graph::softmax_rows(Var a) {
  const Tensor& x = value(a);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < r; ++i) kt.softmax_row(c, x.data() + i * c, out.data() + i * c);
  return push(Node{OpKind::softmax_rows, {a.id}, std::move(out)});
}

Var Graph::layer_norm_rows(Var a, double eps) {
  const Tensor& x = value(a);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  Tensor inv_std = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (xr[j] - mu) * is;
  }
  Node nd{OpKind::layer_norm_rows, {a.id}, std::move(out)};
  nd.aux = std::move(inv_std);
  nd.s = eps;
  return push(std::move(nd));
}

Var Graph::l2_normalize_rows(Var a, double eps) {
  const Tensor& x = value(a);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  Tensor norms = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.data() + i * c;
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xr[j] * xr[j];
    const double nrm = std::max(std::sqrt(ss), eps);
    norms[i] = nrm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xr[j] / nrm;
  }
  Node nd{OpKind::l2_normalize_rows, {a.id}, std::move(out)};
  nd.aux = std::move(norms);
  nd.s = eps;
  return push(std::move(nd));
}

Var Graph::dot_rows(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require(x.same_shape(y), "dot_rows shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * y[i * c + j];
    out[i] = s;
  }
  return push(Node{OpKind::dot_rows, {a.id, b.id}, std::move(out)});
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of nothing");
  const std::size_t r = value(parts[0]).rows();
  std::size_t c = 0;
  std::vector<std::size_t> in;
  for (Var p : parts) {
    require(value(p).rows() == r, "concat_cols row mismatch");
    c += value(p).cols();
    in.push_back(p.id);
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& x = value(p);
    const std::size_t pc = x.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(x.data() + i * pc, x.data() + (i + 1) * pc, out.data() + i * c + off);
    off += pc;
  }
  return push(Node{OpKind::concat_cols, std::move(in), std::move(out)});
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of nothing");
  const std::size_t c = value(parts[0]).cols();
  std::size_t r = 0;
  std::vector<std::size_t> in;
  for (Var p : parts) {
    require(value(p).cols() == c, "concat_rows column mismatch");
    r += value(p).rows();
    in.push_back(p.id);
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& x = value(p);
    std::copy(x.values().begin(), x.values().end(), out.data() + off);
    off += x.size();
  }
  return push(Node{OpKind::concat_rows, std::move(in), std::move(out)});
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = value(a);
  require(begin < end && end <= x.cols(), "slice_cols range out of bounds");
  const std::size_t r = x.rows(), c = x.cols(), w = end - begin;
  Tensor out = Tensor::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy(x.data() + i * c + begin, x.data() + i * c + end, out.data() + i * w);
  Node nd{OpKind::slice_cols, {a.id}, std::move(out)};
  nd.i0 = begin;
  nd.i1 = end;
  return push(std::move(nd));
}

Var Graph::gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const Tensor& x = value(a);
  require(!rows.empty(), "gather of no rows");
  const std::size_t c = x.cols();
  Tensor out = Tensor::matrix(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < x.rows(), "gather row index out of range");
    std::copy(x.data() + rows[i] * c, x.data() + (rows[i] + 1) * c, out.data() + i * c);
  }
  Node nd{OpKind::gather_rows, {a.id}, std::move(out)};
  nd.idx = rows;
  return push(std::move(nd));
}

Var Graph::broadcast_rows(Var a, std::size_t rows) {
  const Tensor& x = value(a);
  require(x.rows() == 1 && rows > 0, "broadcast_rows needs a 1 x c input");
  const std::size_t c = x.cols();
  Tensor out = Tensor::matrix(rows, c);
  for (std::size_t i = 0; i < rows; ++i) std::copy(x.data(), x.data() + c, out.data() + i * c);
  return push(Node{OpKind::broadcast_rows, {a.id}, std::move(out)});
}

Var Graph::broadcast_cols(Var a, std::size_t cols) {
  const Tensor& x = value(a);
  require(x.cols() == 1 && cols > 0, "broadcast_cols needs an r x 1 input");
  const std::size_t r = x.rows();
  Tensor out = Tensor::matrix(r, cols);
  for (std::size_t i = 0; i < r; ++i)
    std::fill(out.data() + i * cols, out.data() + (i + 1) * cols, x[i]);
  return push(Node{OpKind::broadcast_cols, {a.id}, std::move(out)});
}

std::vector<Tensor> Graph::grad(Var loss, const std::vector<Var>& params) const {
  const Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw std::invalid_argument("graph: grad needs a scalar loss, got " + ln.value.shape_str());
  for (Var p : params)
    require(node(p).op == OpKind::leaf, "grad param is not a leaf");

  // Only nodes downstream of a param carry gradient.
  std::vector<char> needs(nodes_.size(), 0);
  for (Var p : params) needs[p.id] = 1;
  for (std::size_t i = 0; i <= loss.id; ++i) {
    if (needs[i]) continue;
    for (std::size_t j : nodes_[i].in)
      if (needs[j]) {
        needs[i] = 1;
        break;
      }
  }

  std::vector<Tensor> grads(loss.id + 1);
  if (needs[loss.id]) {
    grads[loss.id] = Tensor::matrix(ln.value.rows(), ln.value.cols(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!needs[i] || grads[i].empty()) continue;
      if (nodes_[i].op != OpKind::leaf) {
        backward(nodes_[i], grads[i], grads, needs);
        // Interior gradients are no longer needed once propagated.
        bool is_param = false;
        for (Var p : params) is_param |= (p.id == i);
        if (!is_param) grads[i] = Tensor();
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Var p : params) {
    const Tensor& v = nodes_[p.id].value;
    if (p.id < grads.size() && !grads[p.id].empty())
      out.push_back(grads[p.id]);
    else
      out.push_back(Tensor(v.shape(), 0.0));
  }
  return out;
}

void Graph::backward(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                     const std::vector<char>& needs) const {
  auto in_val = [&](std::size_t k) -> const Tensor& { return nodes_[n.in[k]].value; };
  auto wants = [&](std::size_t k) { return needs[n.in[k]] != 0; };
  auto gbuf = [&](std::size_t k) -> Tensor& {
    const Tensor& v = in_val(k);
    return ensure(grads[n.in[k]], v.rows(), v.cols());
  };

  switch (n.op) {
    case OpKind::leaf:
      return;
    case OpKind::add:
      if (wants(0)) accum(grads[n.in[0]], g);
      if (wants(1)) accum(grads[n.in[1]], g);
      return;
    case OpKind::sub:
      if (wants(0)) accum(grads[n.in[0]], g);
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      return;
    case OpKind::mul: {
      const Tensor& x = in_val(0);
      const Tensor& y = in_val(1);
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
      return;
    }
    case OpKind::matmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      const bool ta = n.t0, tb = n.t1;
      const std::size_t m = ta ? a.cols() : a.rows();
      const std::size_t k = ta ? a.rows() : a.cols();
      const std::size_t nn = tb ? b.rows() : b.cols();
      const auto& kt = kernels::active();
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        if (!ta)  // dA = dC op(B)^T
          kt.gemm(m, k, nn, g.data(), false, b.data(), !tb, ga.data(), true);
        else  // dA = op(B) dC^T
          kt.gemm(k, m, nn, b.data(), tb, g.data(), true, ga.data(), true);
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        if (!tb)  // dB = op(A)^T dC
          kt.gemm(k, nn, m, a.data(), !ta, g.data(), false, gb.data(), true);
        else  // dB = dC^T op(A)
          kt.gemm(nn, k, m, g.data(), true, a.data(), ta, gb.data(), true);
      }
      return;
    }
    case OpKind::scale:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.s * g[i];
      }
      return;
    case OpKind::sum_all:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const double gv = g[0];
        for (double& v : ga.values()) v += gv;
      }
      return;
    case OpKind::mean:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const double gv = g[0] / static_cast<double>(ga.size());
        for (double& v : ga.values()) v += gv;
      }
      return;
    case OpKind::sum_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t r = ga.rows(), c = ga.cols();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
      }
      return;
    case OpKind::sum_cols:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t r = ga.rows(), c = ga.cols();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
      }
      return;
    case OpKind::relu:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const Tensor& x = in_val(0);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) ga[i] += g[i];
      }
      return;
    case OpKind::softmax_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const Tensor& y = n.value;
        const std::size_t r = y.rows(), c = y.cols();
        const auto& kt = kernels::active();
        for (std::size_t i = 0; i < r; ++i) {
          const double* yr = y.data() + i * c;
          const double* gr = g.data() + i * c;
          const double d = kt.dot(yr, gr, c);
          double* out = ga.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) out[j] += yr[j] * (gr[j] - d);
        }
      }
      return;
    case OpKind::layer_norm_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const Tensor& y = n.value;
        const std::size_t r = y.rows(), c = y.cols();
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          const double* yr = y.data() + i * c;
          const double* gr = g.data() + i * c;
          double mg = 0.0, mgy = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            mg += gr[j];
            mgy += gr[j] * yr[j];
          }
          mg *= inv_c;
          mgy *= inv_c;
          const double is = n.aux[i];
          double* out = ga.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) out[j] += is * (gr[j] - mg - yr[j] * mgy);
        }
      }
      return;
    case OpKind::l2_normalize_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const Tensor& y = n.value;
        const std::size_t r = y.rows(), c = y.cols();
        for (std::size_t i = 0; i < r; ++i) {
          const double* yr = y.data() + i * c;
          const double* gr = g.data() + i * c;
          const double nrm = n.aux[i];
          double* out = ga.data() + i * c;
          if (nrm <= n.s) {  // clamped branch: y = x / eps
            for (std::size_t j = 0; j < c; ++j) out[j] += gr[j] / nrm;
            continue;
          }
          double d = 0.0;
          for (std::size_t j = 0; j < c; ++j) d += yr[j] * gr[j];
          for (std::size_t j = 0; j < c; ++j) out[j] += (gr[j] - yr[j] * d) / nrm;
        }
      }
      return;
    case OpKind::dot_rows: {
      const Tensor& x = in_val(0);
      const Tensor& y = in_val(1);
      const std::size_t r = x.rows(), c = x.cols();
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * y[i * c + j];
      }
      if (wants(1)) {
        Tensor& gb = gbuf(1);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i] * x[i * c + j];
      }
      return;
    }
    case OpKind::concat_cols: {
      const std::size_t r = g.rows(), c = g.cols();
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const std::size_t pc = in_val(k).cols();
        if (wants(k)) {
          Tensor& gp = gbuf(k);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * c + off + j];
        }
        off += pc;
      }
      return;
    }
    case OpKind::concat_rows: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const std::size_t sz = in_val(k).size();
        if (wants(k)) {
          Tensor& gp = gbuf(k);
          for (std::size_t i = 0; i < sz; ++i) gp[i] += g[off + i];
        }
        off += sz;
      }
      return;
    }
    case OpKind::slice_cols:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t r = ga.rows(), c = ga.cols(), w = n.i1 - n.i0;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) ga[i * c + n.i0 + j] += g[i * w + j];
      }
      return;
    case OpKind::gather_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t c = ga.cols();
        for (std::size_t i = 0; i < n.idx.size(); ++i) {
          double* dst = ga.data() + n.idx[i] * c;
          const double* src = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
      }
      return;
    case OpKind::broadcast_rows:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[j] += g[i * c + j];
      }
      return;
    case OpKind::broadcast_cols:
      if (wants(0)) {
        Tensor& ga = gbuf(0);
        const std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g[i * c + j];
          ga[i] += s;
        }
      }
      return;
  }
}

std::vector<Tensor> finite_diff_grad(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  std::vector<Tensor> p = params;
  std::vector<Tensor> out;
  out.reserve(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) {
    Tensor g(p[t].shape(), 0.0);
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double orig = p[t][i];
      p[t][i] = orig + h;
      const double fp = f(p);
      p[t][i] = orig - h;
      const double fm = f(p);
      p[t][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::domain_error("finite_diff_grad: non-finite evaluation");
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace spherecorr
