// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nnpforge {

namespace {

// ln(1 + eˣ) − ln 2, stable for large |x|.
inline double ssp_scalar(double x) {
  const double m = x > 0.0 ? x : 0.0;
  return m + std::log1p(std::exp(-std::abs(x))) - 0.6931471805599453094;
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Tape::check(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("tape: bad node id");
}

int Tape::push(Node n, Tensor value) {
  nodes_.push_back(std::move(n));
  vals_.push_back(std::move(value));
  return size() - 1;
}

int Tape::leaf(Tensor value, bool needs_grad) {
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = needs_grad;
  return push(std::move(n), std::move(value));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
  check(a);
  check(b);
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  const int m = trans_a ? A.cols : A.rows;
  const int k = trans_a ? A.rows : A.cols;
  const int kb = trans_b ? B.cols : B.rows;
  const int n = trans_b ? B.rows : B.cols;
  if (k != kb) throw std::invalid_argument("matmul: inner dimensions differ");

  // Materialize transposed operands; shapes here are small.
  Tensor At, Bt;
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  if (trans_a) {
    At = Tensor(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) At.at(j, i) = A.at(i, j);
    pa = &At;
  }
  if (trans_b) {
    Bt = Tensor(B.cols, B.rows);
    for (int i = 0; i < B.rows; ++i)
      for (int j = 0; j < B.cols; ++j) Bt.at(j, i) = B.at(i, j);
    pb = &Bt;
  }

  Tensor Y(m, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = pa->v.data() + static_cast<std::size_t>(i) * k;
    double* yrow = Y.v.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = pb->v.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  }

  Node nd;
  nd.op = Op::MatMul;
  nd.a = a;
  nd.b = b;
  nd.trans_a = trans_a;
  nd.trans_b = trans_b;
  nd.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(nd), std::move(Y));
}

int Tape::add(int a, int b) {
  check(a);
  check(b);
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
  Tensor Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.v[i] += B.v[i];
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n), std::move(Y));
}

int Tape::sub(int a, int b) {
  check(a);
  check(b);
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
  Tensor Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.v[i] -= B.v[i];
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n), std::move(Y));
}

int Tape::mul(int a, int b) {
  check(a);
  check(b);
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
  Tensor Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.v[i] *= B.v[i];
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n), std::move(Y));
}

int Tape::add_row_vec(int a, int r) {
  check(a);
  check(r);
  const Tensor& A = value(a);
  const Tensor& R = value(r);
  if (R.rows != 1 || R.cols != A.cols)
    throw std::invalid_argument("add_row_vec: expected 1×cols vector");
  Tensor Y = A;
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) Y.at(i, j) += R.v[static_cast<std::size_t>(j)];
  Node n;
  n.op = Op::AddRowVec;
  n.a = a;
  n.b = r;
  n.needs_grad = needs_grad(a) || needs_grad(r);
  return push(std::move(n), std::move(Y));
}

int Tape::mul_col_vec(int a, int c) {
  check(a);
  check(c);
  const Tensor& A = value(a);
  const Tensor& C = value(c);
  if (C.cols != 1 || C.rows != A.rows)
    throw std::invalid_argument("mul_col_vec: expected rows×1 vector");
  Tensor Y = A;
  for (int i = 0; i < A.rows; ++i) {
    const double s = C.v[static_cast<std::size_t>(i)];
    for (int j = 0; j < A.cols; ++j) Y.at(i, j) *= s;
  }
  Node n;
  n.op = Op::MulColVec;
  n.a = a;
  n.b = c;
  n.needs_grad = needs_grad(a) || needs_grad(c);
  return push(std::move(n), std::move(Y));
}

int Tape::unary(Op op, int a, double s) {
  check(a);
  Tensor Y = value(a);
  switch (op) {
    case Op::Scale:
      for (auto& x : Y.v) x *= s;
      break;
    case Op::AddScalar:
      for (auto& x : Y.v) x += s;
      break;
    case Op::Ssp:
      for (auto& x : Y.v) x = ssp_scalar(x);
      break;
    case Op::Sigmoid:
      for (auto& x : Y.v) x = sigmoid_scalar(x);
      break;
    case Op::Exp:
      for (auto& x : Y.v) x = std::exp(x);
      break;
    case Op::Sqrt:
      for (auto& x : Y.v) x = std::sqrt(x);
      break;
    case Op::Cos:
      for (auto& x : Y.v) x = std::cos(x);
      break;
    case Op::Sin:
      for (auto& x : Y.v) x = std::sin(x);
      break;
    case Op::Reciprocal:
      for (auto& x : Y.v) x = 1.0 / x;
      break;
    default:
      throw std::logic_error("unary: not a unary op");
  }
  Node n;
  n.op = op;
  n.a = a;
  n.s = s;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::scale(int a, double s) { return unary(Op::Scale, a, s); }
int Tape::add_scalar(int a, double s) { return unary(Op::AddScalar, a, s); }
int Tape::ssp(int a) { return unary(Op::Ssp, a); }
int Tape::sigmoid(int a) { return unary(Op::Sigmoid, a); }
int Tape::exp(int a) { return unary(Op::Exp, a); }
int Tape::sqrt(int a) { return unary(Op::Sqrt, a); }
int Tape::cos(int a) { return unary(Op::Cos, a); }
int Tape::sin(int a) { return unary(Op::Sin, a); }
int Tape::reciprocal(int a) { return unary(Op::Reciprocal, a); }

int Tape::row_sum(int a) {
  check(a);
  const Tensor& A = value(a);
  Tensor Y(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < A.cols; ++j) acc += A.at(i, j);
    Y.v[static_cast<std::size_t>(i)] = acc;
  }
  Node n;
  n.op = Op::RowSum;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::col_sum(int a) {
  check(a);
  const Tensor& A = value(a);
  Tensor Y(1, A.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) Y.v[static_cast<std::size_t>(j)] += A.at(i, j);
  Node n;
  n.op = Op::ColSum;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::row_bcast(int a, int cols) {
  check(a);
  const Tensor& A = value(a);
  if (A.cols != 1) throw std::invalid_argument("row_bcast: expected n×1 input");
  Tensor Y(A.rows, cols);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < cols; ++j) Y.at(i, j) = A.v[static_cast<std::size_t>(i)];
  Node n;
  n.op = Op::RowBcast;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::col_bcast(int a, int rows) {
  check(a);
  const Tensor& A = value(a);
  if (A.rows != 1) throw std::invalid_argument("col_bcast: expected 1×m input");
  Tensor Y(rows, A.cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < A.cols; ++j) Y.at(i, j) = A.v[static_cast<std::size_t>(j)];
  Node n;
  n.op = Op::ColBcast;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::bcast(int a, int rows, int cols) {
  check(a);
  const Tensor& A = value(a);
  if (A.rows != 1 || A.cols != 1) throw std::invalid_argument("bcast: expected scalar input");
  Tensor Y(rows, cols);
  for (auto& x : Y.v) x = A.v[0];
  Node n;
  n.op = Op::Bcast;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::sum(int a) {
  check(a);
  const Tensor& A = value(a);
  double acc = 0.0;
  for (double x : A.v) acc += x;
  Node n;
  n.op = Op::Sum;
  n.a = a;
  n.needs_grad = needs_grad(a);
  return push(std::move(n), Tensor::scalar(acc));
}

int Tape::gather(int a, std::vector<int> idx) {
  check(a);
  const Tensor& A = value(a);
  Tensor Y(static_cast<int>(idx.size()), A.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int src = idx[r];
    if (src < 0 || src >= A.rows) throw std::invalid_argument("gather: index out of range");
    for (int j = 0; j < A.cols; ++j) Y.at(static_cast<int>(r), j) = A.at(src, j);
  }
  Node n;
  n.op = Op::Gather;
  n.a = a;
  n.idx = std::make_shared<const std::vector<int>>(std::move(idx));
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

int Tape::scatter(int a, std::vector<int> idx, int out_rows) {
  check(a);
  const Tensor& A = value(a);
  if (static_cast<int>(idx.size()) != A.rows)
    throw std::invalid_argument("scatter: index count must match rows");
  Tensor Y(out_rows, A.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int dst = idx[r];
    if (dst < 0 || dst >= out_rows) throw std::invalid_argument("scatter: index out of range");
    for (int j = 0; j < A.cols; ++j) Y.at(dst, j) += A.at(static_cast<int>(r), j);
  }
  Node n;
  n.op = Op::Scatter;
  n.a = a;
  n.idx = std::make_shared<const std::vector<int>>(std::move(idx));
  n.needs_grad = needs_grad(a);
  return push(std::move(n), std::move(Y));
}

std::vector<int> Tape::gradient(int out, std::span<const int> wrt) {
  check(out);
  const Tensor& y = value(out);
  if (y.rows != 1 || y.cols != 1)
    throw std::invalid_argument("gradient: output node must be scalar");
  for (int w : wrt) {
    check(w);
    if (w > out) throw std::invalid_argument("gradient: wrt node created after output");
  }

  const int frontier = out + 1;  // adjoints tracked for nodes below this only
  std::vector<int> adj(static_cast<std::size_t>(frontier), -1);

  auto accumulate = [&](int target, int contrib) {
    if (target < 0 || !nodes_[static_cast<std::size_t>(target)].needs_grad) return;
    int& slot = adj[static_cast<std::size_t>(target)];
    slot = slot < 0 ? contrib : add(slot, contrib);
  };

  if (!nodes_[static_cast<std::size_t>(out)].needs_grad) {
    // Output does not depend on any differentiable leaf.
    return std::vector<int>(wrt.size(), -1);
  }
  adj[static_cast<std::size_t>(out)] = constant(Tensor::scalar(1.0));

  for (int i = out; i >= 0; --i) {
    const int dy = adj[static_cast<std::size_t>(i)];
    if (dy < 0) continue;
    const Node nd = nodes_[static_cast<std::size_t>(i)];  // copy: nodes_ grows below
    const bool ga = nd.a >= 0 && nodes_[static_cast<std::size_t>(nd.a)].needs_grad;
    const bool gb = nd.b >= 0 && nodes_[static_cast<std::size_t>(nd.b)].needs_grad;
    switch (nd.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        if (ga) {
          const int da = nd.trans_a ? matmul(nd.b, dy, nd.trans_b, true)
                                    : matmul(dy, nd.b, false, !nd.trans_b);
          accumulate(nd.a, da);
        }
        if (gb) {
          const int db = nd.trans_b ? matmul(dy, nd.a, true, nd.trans_a)
                                    : matmul(nd.a, dy, !nd.trans_a, false);
          accumulate(nd.b, db);
        }
        break;
      }
      case Op::Add:
        if (ga) accumulate(nd.a, dy);
        if (gb) accumulate(nd.b, dy);
        break;
      case Op::Sub:
        if (ga) accumulate(nd.a, dy);
        if (gb) accumulate(nd.b, scale(dy, -1.0));
        break;
      case Op::Mul:
        if (ga) accumulate(nd.a, mul(dy, nd.b));
        if (gb) accumulate(nd.b, mul(dy, nd.a));
        break;
      case Op::AddRowVec:
        if (ga) accumulate(nd.a, dy);
        if (gb) accumulate(nd.b, col_sum(dy));
        break;
      case Op::MulColVec:
        if (ga) accumulate(nd.a, mul_col_vec(dy, nd.b));
        if (gb) accumulate(nd.b, row_sum(mul(dy, nd.a)));
        break;
      case Op::Scale:
        if (ga) accumulate(nd.a, scale(dy, nd.s));
        break;
      case Op::AddScalar:
        if (ga) accumulate(nd.a, dy);
        break;
      case Op::Ssp:
        if (ga) accumulate(nd.a, mul(dy, sigmoid(nd.a)));
        break;
      case Op::Sigmoid:
        if (ga) {
          // σ' = σ(1−σ), using this node's own value.
          const int one_minus = add_scalar(scale(i, -1.0), 1.0);
          accumulate(nd.a, mul(dy, mul(i, one_minus)));
        }
        break;
      case Op::Exp:
        if (ga) accumulate(nd.a, mul(dy, i));
        break;
      case Op::Sqrt:
        if (ga) accumulate(nd.a, scale(mul(dy, reciprocal(i)), 0.5));
        break;
      case Op::Cos:
        if (ga) accumulate(nd.a, scale(mul(dy, sin(nd.a)), -1.0));
        break;
      case Op::Sin:
        if (ga) accumulate(nd.a, mul(dy, cos(nd.a)));
        break;
      case Op::Reciprocal:
        if (ga) accumulate(nd.a, scale(mul(dy, mul(i, i)), -1.0));
        break;
      case Op::RowSum:
        if (ga) accumulate(nd.a, row_bcast(dy, value(nd.a).cols));
        break;
      case Op::ColSum:
        if (ga) accumulate(nd.a, col_bcast(dy, value(nd.a).rows));
        break;
      case Op::RowBcast:
        if (ga) accumulate(nd.a, row_sum(dy));
        break;
      case Op::ColBcast:
        if (ga) accumulate(nd.a, col_sum(dy));
        break;
      case Op::Bcast:
        if (ga) accumulate(nd.a, sum(dy));
        break;
      case Op::Sum:
        if (ga) {
          const Tensor& av = value(nd.a);
          accumulate(nd.a, bcast(dy, av.rows, av.cols));
        }
        break;
      case Op::Gather:
        if (ga) accumulate(nd.a, scatter(dy, *nd.idx, value(nd.a).rows));
        break;
      case Op::Scatter:
        if (ga) accumulate(nd.a, gather(dy, *nd.idx));
        break;
    }
  }

  std::vector<int> result;
  result.reserve(wrt.size());
  for (int w : wrt) result.push_back(adj[static_cast<std::size_t>(w)]);
  return result;
}

}  // namespace nnpforge
