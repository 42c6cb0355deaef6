// SPDX-License-Identifier: Apache-2.0
//
// Purpose-built reverse-mode tape over a fixed tensor operation set (dense
// affine pieces, shifted softplus, gather/scatter, elementwise math,
// reductions). Values are computed eagerly; gradient() emits the adjoint
// computation as ordinary tape nodes, so emitted gradients are themselves
// differentiable. One level of nesting (gradient of a gradient) is all the
// training loss needs, but the construction supports any depth.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace nnpforge {

// Dense row-major matrix of doubles. A column vector is n×1, a row vector
// 1×m, a scalar 1×1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {}

  static Tensor scalar(double x) { return Tensor(1, 1, {x}); }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

class Tape {
 public:
  // Leaves. Only nodes reachable from a needs_grad leaf participate in
  // reverse passes.
  int leaf(Tensor value, bool needs_grad);
  int constant(Tensor value) { return leaf(std::move(value), false); }

  // Y = op(A [, B]). All builders evaluate immediately and return the node id.
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
  int add(int a, int b);                  // same shape
  int sub(int a, int b);                  // same shape
  int mul(int a, int b);                  // same shape, elementwise
  int add_row_vec(int a, int r);          // (n×m) + (1×m)
  int mul_col_vec(int a, int c);          // (n×m) ⊙ (n×1)
  int scale(int a, double s);
  int add_scalar(int a, double s);
  int ssp(int a);                         // ln(0.5·eˣ + 0.5)
  int sigmoid(int a);
  int exp(int a);
  int sqrt(int a);
  int cos(int a);
  int sin(int a);
  int reciprocal(int a);
  int row_sum(int a);                     // n×m -> n×1
  int col_sum(int a);                     // n×m -> 1×m
  int row_bcast(int a, int cols);         // n×1 -> n×cols
  int col_bcast(int a, int rows);         // 1×m -> rows×m
  int bcast(int a, int rows, int cols);   // 1×1 -> rows×cols
  int sum(int a);                         // n×m -> 1×1
  int gather(int a, std::vector<int> idx);                 // rows by index
  int scatter(int a, std::vector<int> idx, int out_rows);  // scatter-add rows

  const Tensor& value(int id) const { return vals_[static_cast<std::size_t>(id)]; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Emits adjoints of the scalar node `out` with respect to each node in
  // `wrt` and returns their node ids (-1 where out does not depend on the
  // node). The emitted nodes are differentiable in later gradient() calls.
  std::vector<int> gradient(int out, std::span<const int> wrt);

 private:
  enum class Op : std::uint8_t {
    Leaf, MatMul, Add, Sub, Mul, AddRowVec, MulColVec, Scale, AddScalar,
    Ssp, Sigmoid, Exp, Sqrt, Cos, Sin, Reciprocal,
    RowSum, ColSum, RowBcast, ColBcast, Bcast, Sum, Gather, Scatter,
  };

  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double s = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    std::shared_ptr<const std::vector<int>> idx;
    bool needs_grad = false;
  };

  int push(Node n, Tensor value);
  int unary(Op op, int a, double s = 0.0);
  void check(int id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> vals_;
};

}  // namespace nnpforge
