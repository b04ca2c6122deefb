// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation as a node holding its value and a closure
// that pushes the node's gradient back into its inputs. Nodes are addressed
// by index, so growing the tape never invalidates a Var.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace ocvtp::ag {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value with no gradient.
  Var constant(Mat value);
  /// Leaf that accumulates a gradient.
  Var leaf(Mat value);
  /// Leaf bound to an external parameter matrix; its gradient is later
  /// retrieved with grad_of(&m). Binding the same matrix twice returns the
  /// same leaf.
  Var param(const Mat& m);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs all closures in
  /// reverse order.
  void backward(Var out);

  /// Gradient of a node (zero matrix if it never received one).
  Mat grad(Var v) const;
  /// Gradient for a matrix bound with param(); zero if it was never bound.
  Mat grad_of(const Mat* p) const;

  std::size_t size() const { return nodes_.size(); }

  // Internal API used by the operations below.
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;
  };
  Var push(Mat value, bool needs_grad, std::function<void(Tape&, int)> back);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  /// Gradient accumulator for an input node, allocated on first use.
  Mat& acc(int id);
  bool needs(int id) const { return node(id).needs_grad; }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Mat*, int> params_;
};

// Linear algebra.
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_bt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// alpha * a + beta
Var affine(Var a, double alpha, double beta = 0.0);
/// Adds a 1 x k row vector to every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row of a elementwise by a 1 x k row vector.
Var mul_row(Var a, Var row);

// Pointwise nonlinearities.
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);

// Normalizations.
Var softmax_rows(Var a);
Var softmax_cols(Var a);
/// Per-row layer normalization with 1 x k gain and bias.
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
/// Divides each row by (its sum + eps).
Var row_normalize(Var a, double eps);

// Reshaping.
Var gather_rows(Var a, std::span<const int> index);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(Var top, Var bottom);

/// sum_j weight[j] * mean_c (pred[j, c] - target[j, c])^2 as a 1 x 1 node.
/// The target and weights are constants.
Var weighted_row_sq_error(Var pred, const Mat& target, const Vec& weight);
/// Sum of 1 x 1 nodes.
Var sum_scalars(std::span<const Var> parts);

}  // namespace ocvtp::ag
