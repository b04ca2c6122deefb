// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/autograd.hpp"

#include "ocvtp/error.hpp"

#include <cmath>
#include <string>

namespace ocvtp::ag {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

bool any_needs(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.tape().needs(v.id())) return true;
  }
  return false;
}

}  // namespace

const Mat& Var::value() const { return tape_->node(id_).value; }

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Mat value) { return push(std::move(value), true, nullptr); }

Var Tape::param(const Mat& m) {
  if (auto it = params_.find(&m); it != params_.end()) return Var(this, it->second);
  Var v = leaf(m);
  params_.emplace(&m, v.id());
  return v;
}

Mat& Tape::acc(int id) {
  Node& n = node(id);
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward: output must be 1x1");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  acc(out.id()).setOnes();
  for (int id = out.id(); id >= 0; --id) {
    Node& n = node(id);
    if (n.back && n.grad.size() != 0) n.back(*this, id);
  }
}

Mat Tape::grad(Var v) const {
  const Node& n = node(v.id());
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat Tape::grad_of(const Mat* p) const {
  auto it = params_.find(p);
  if (it == params_.end()) return Mat::Zero(p->rows(), p->cols());
  return grad(Var(const_cast<Tape*>(this), it->second));
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() * b.value(), any_needs({a, b}), [ia, ib](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(ia)) t.acc(ia).noalias() += g * t.node(ib).value.transpose();
    if (t.needs(ib)) t.acc(ib).noalias() += t.node(ia).value.transpose() * g;
  });
}

Var matmul_bt(Var a, Var b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_bt: inner dimensions differ");
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() * b.value().transpose(), any_needs({a, b}),
                       [ia, ib](Tape& t, int self) {
                         const Mat& g = t.node(self).grad;
                         if (t.needs(ia)) t.acc(ia).noalias() += g * t.node(ib).value;
                         if (t.needs(ib)) t.acc(ib).noalias() += g.transpose() * t.node(ia).value;
                       });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() + b.value(), any_needs({a, b}), [ia, ib](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(ia)) t.acc(ia) += g;
    if (t.needs(ib)) t.acc(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() - b.value(), any_needs({a, b}), [ia, ib](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(ia)) t.acc(ia) += g;
    if (t.needs(ib)) t.acc(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value().cwiseProduct(b.value()), any_needs({a, b}),
                       [ia, ib](Tape& t, int self) {
                         const Mat& g = t.node(self).grad;
                         if (t.needs(ia)) t.acc(ia) += g.cwiseProduct(t.node(ib).value);
                         if (t.needs(ib)) t.acc(ib) += g.cwiseProduct(t.node(ia).value);
                       });
}

Var affine(Var a, double alpha, double beta) {
  const int ia = a.id();
  Mat y = (alpha * a.value().array() + beta).matrix();
  return a.tape().push(std::move(y), any_needs({a}), [ia, alpha](Tape& t, int self) {
    t.acc(ia) += alpha * t.node(self).grad;
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: expected 1 x cols row");
  const int ia = a.id(), ir = row.id();
  Mat y = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(y), any_needs({a, row}), [ia, ir](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(ia)) t.acc(ia) += g;
    if (t.needs(ir)) t.acc(ir) += g.colwise().sum();
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: expected 1 x cols row");
  const int ia = a.id(), ir = row.id();
  Mat y = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape().push(std::move(y), any_needs({a, row}), [ia, ir](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(ia)) t.acc(ia).array() += g.array().rowwise() * t.node(ir).value.row(0).array();
    if (t.needs(ir)) t.acc(ir) += g.cwiseProduct(t.node(ia).value).colwise().sum();
  });
}

Var sigmoid(Var a) {
  const int ia = a.id();
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    const Mat& y = t.node(self).value;
    t.acc(ia).array() += t.node(self).grad.array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Var a) {
  const int ia = a.id();
  Mat y = a.value().array().tanh().matrix();
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    const Mat& y = t.node(self).value;
    t.acc(ia).array() += t.node(self).grad.array() * (1.0 - y.array().square());
  });
}

Var relu(Var a) {
  const int ia = a.id();
  Mat y = a.value().cwiseMax(0.0);
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    const Mat& x = t.node(ia).value;
    t.acc(ia).array() += (x.array() > 0.0).select(t.node(self).grad.array(), 0.0);
  });
}

Var exp(Var a) {
  const int ia = a.id();
  Mat y = a.value().array().exp().matrix();
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    t.acc(ia).array() += t.node(self).grad.array() * t.node(self).value.array();
  });
}

Var softmax_rows(Var a) {
  const int ia = a.id();
  const Mat& x = a.value();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    const Mat& y = t.node(self).value;
    const Mat& g = t.node(self).grad;
    const Vec dot = g.cwiseProduct(y).rowwise().sum();
    t.acc(ia).array() += y.array() * (g.colwise() - dot).array();
  });
}

Var softmax_cols(Var a) {
  const int ia = a.id();
  const Mat& x = a.value();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).maxCoeff();
    y.col(j) = (x.col(j).array() - m).exp().matrix();
    y.col(j) /= y.col(j).sum();
  }
  return a.tape().push(std::move(y), any_needs({a}), [ia](Tape& t, int self) {
    const Mat& y = t.node(self).value;
    const Mat& g = t.node(self).grad;
    const Eigen::RowVectorXd dot = g.cwiseProduct(y).colwise().sum();
    t.acc(ia).array() += y.array() * (g.rowwise() - dot).array();
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index k = x.cols();
  if (gain.rows() != 1 || gain.cols() != k || bias.rows() != 1 || bias.cols() != k) {
    throw ShapeError("layer_norm_rows: gain/bias must be 1 x cols");
  }
  const Mat& xv = x.value();
  Mat xhat(xv.rows(), k);
  Vec inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Mat y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
          bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().push(
      std::move(y), any_needs({x, gain, bias}),
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(ig)) t.acc(ig) += g.cwiseProduct(xhat).colwise().sum();
        if (t.needs(ib)) t.acc(ib) += g.colwise().sum();
        if (t.needs(ix)) {
          const Mat dxhat = g.array().rowwise() * t.node(ig).value.row(0).array();
          const Vec mean_d = dxhat.rowwise().mean();
          const Vec mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
          Mat dx = (dxhat.colwise() - mean_d) - (xhat.array().colwise() * mean_dx.array()).matrix();
          dx.array().colwise() *= inv_std.array();
          t.acc(ix) += dx;
        }
      });
}

Var row_normalize(Var a, double eps) {
  const int ia = a.id();
  const Vec denom = (a.value().rowwise().sum().array() + eps).matrix();
  Mat y = a.value().array().colwise() / denom.array();
  return a.tape().push(std::move(y), any_needs({a}), [ia, denom](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    const Mat& y = t.node(self).value;
    const Vec dot = g.cwiseProduct(y).rowwise().sum();
    t.acc(ia).array() += (g.colwise() - dot).array().colwise() / denom.array();
  });
}

Var gather_rows(Var a, std::span<const int> index) {
  const Mat& x = a.value();
  Mat y(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= x.rows()) {
      throw BoundsError("gather_rows: index " + std::to_string(index[k]) + " outside [0," +
                        std::to_string(x.rows()) + ")");
    }
    y.row(static_cast<Eigen::Index>(k)) = x.row(index[k]);
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape().push(std::move(y), any_needs({a}), [ia, idx = std::move(idx)](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    Mat& acc = t.acc(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) acc.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw BoundsError("slice_cols: out of range");
  const int ia = a.id();
  return a.tape().push(a.value().middleCols(start, count), any_needs({a}),
                       [ia, start, count](Tape& t, int self) {
                         t.acc(ia).middleCols(start, count) += t.node(self).grad;
                       });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
    needs = needs || p.tape().needs(p.id());
  }
  Mat y(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts[0].tape().push(std::move(y), needs, [ids, offsets](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs(ids[k])) continue;
      t.acc(ids[k]) += g.middleCols(offsets[k], t.node(ids[k]).value.cols());
    }
  });
}

Var concat_rows(Var top, Var bottom) {
  if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column counts differ");
  Mat y(top.rows() + bottom.rows(), top.cols());
  y.topRows(top.rows()) = top.value();
  y.bottomRows(bottom.rows()) = bottom.value();
  const int it = top.id(), ib = bottom.id();
  const Eigen::Index nt = top.rows(), nb = bottom.rows();
  return top.tape().push(std::move(y), any_needs({top, bottom}), [it, ib, nt, nb](Tape& t, int self) {
    const Mat& g = t.node(self).grad;
    if (t.needs(it)) t.acc(it) += g.topRows(nt);
    if (t.needs(ib)) t.acc(ib) += g.bottomRows(nb);
  });
}

Var weighted_row_sq_error(Var pred, const Mat& target, const Vec& weight) {
  require_same_shape(pred.value(), target, "weighted_row_sq_error");
  if (weight.size() != pred.rows()) throw ShapeError("weighted_row_sq_error: weight length != rows");
  const double inv_c = 1.0 / static_cast<double>(pred.cols());
  Mat diff = pred.value() - target;
  Mat out(1, 1);
  out(0, 0) = (diff.array().square().rowwise().sum().matrix().cwiseProduct(weight)).sum() * inv_c;
  const int ip = pred.id();
  return pred.tape().push(std::move(out), any_needs({pred}),
                          [ip, diff = std::move(diff), weight, inv_c](Tape& t, int self) {
                            const double g = t.node(self).grad(0, 0);
                            t.acc(ip).array() +=
                                (diff.array().colwise() * weight.array()) * (2.0 * inv_c * g);
                          });
}

Var sum_scalars(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("sum_scalars: no inputs");
  Mat out = Mat::Zero(1, 1);
  bool needs = false;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.rows() != 1 || p.cols() != 1) throw ShapeError("sum_scalars: inputs must be 1x1");
    out(0, 0) += p.scalar();
    needs = needs || p.tape().needs(p.id());
    ids.push_back(p.id());
  }
  return parts[0].tape().push(std::move(out), needs, [ids](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    for (int id : ids) {
      if (t.needs(id)) t.acc(id)(0, 0) += g;
    }
  });
}

}  // namespace ocvtp::ag
