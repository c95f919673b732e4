#pragma once

// Tape-based reverse-mode automatic differentiation over rank-2 tensors.
//
// Nodes are appended in creation order and every op only refers to nodes
// that already exist, so creation order is a topological order and the
// graph cannot contain a cycle.

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "spherecorr/tensor.hpp"

namespace spherecorr {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  matmul,
  scale,
  sum_all,
  sum_rows,  // r x c -> r x 1
  sum_cols,  // r x c -> 1 x c
  mean,
  relu,
  softmax_rows,
  layer_norm_rows,
  l2_normalize_rows,
  dot_rows,  // (r x c, r x c) -> r x 1
  concat_cols,
  concat_rows,
  slice_cols,
  gather_rows,
  broadcast_rows,  // 1 x c -> r x c
  broadcast_cols,  // r x 1 -> r x c
};

std::string_view op_name(OpKind k);

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value);
  Var full(std::size_t rows, std::size_t cols, double v) {
    return leaf(Tensor::matrix(rows, cols, v));
  }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var scale(Var a, double s);
  Var sum(Var a);
  Var sum_rows(Var a);
  Var sum_cols(Var a);
  Var mean(Var a);
  Var relu(Var a);
  Var max0(Var a) { return relu(a); }
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, double eps = 1e-5);
  Var l2_normalize_rows(Var a, double eps = 1e-12);
  Var dot_rows(Var a, Var b);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var gather_rows(Var a, const std::vector<std::size_t>& rows);
  Var broadcast_rows(Var a, std::size_t rows);
  Var broadcast_cols(Var a, std::size_t cols);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // d loss / d p for each p. loss must be 1x1 and every p a leaf of this
  // graph. Params that do not influence loss get zero gradients.
  std::vector<Tensor> grad(Var loss, const std::vector<Var>& params) const;

 private:
  struct Node {
    OpKind op;
    std::vector<std::size_t> in;
    Tensor value;
    Tensor aux;  // per-op saved state (norms, inverse std)
    double s = 0.0;
    std::size_t i0 = 0, i1 = 0;
    bool t0 = false, t1 = false;
    std::vector<std::size_t> idx;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  void backward(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                const std::vector<char>& needs) const;

  std::vector<Node> nodes_;
};

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every scalar
// of every tensor in params. Throws if f returns a non-finite value.
std::vector<Tensor> finite_diff_grad(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace spherecorr
