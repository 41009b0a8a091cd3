#include "mmgcn/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace mmgcn {

namespace {

constexpr Scalar kProbFloor = 1e-12;
constexpr Scalar kLayerNormEps = 1e-5;

Tape& same_tape(Var a, Var b, const char* kind) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw Error(std::string(kind) + ": operands live on different tapes");
  }
  return *a.tape;
}

void check_same_shape(const Mat& a, const Mat& b, const char* kind) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(kind) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size()) {
    throw Error("Tape: stale or foreign Var handle");
  }
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Mat value, bool needs_grad) {
  require_finite(value, "leaf");
  Node n;
  n.kind = "leaf";
  n.value = std::move(value);
  n.needs = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

const Mat& Tape::val(Var v) const { return node(v).value; }

bool Tape::needs_grad(Var v) const { return node(v).needs; }

bool Tape::grad_touched(Var v) const { return node(v).has_grad; }

Mat Tape::grad_or_zero(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Mat::Zero(n.value.rows(), n.value.cols());
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.has_grad) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::make(const char* kind, Mat value, std::vector<int> inputs, BackFn back) {
  require_finite(value, kind);
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  for (int in : n.inputs) {
    if (in < 0 || in >= size()) throw Error(std::string(kind) + ": input created after consumer");
    if (nodes_[static_cast<size_t>(in)].needs) n.needs = true;
  }
  if (n.needs) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.rows() != 1 || ln.value.cols() != 1) {
    throw ShapeError("backward: loss must be a 1x1 scalar, got " + shape_str(ln.value));
  }
  if (ran_backward_) throw Error("backward: tape already consumed");
  ran_backward_ = true;
  grad_ref(loss.id)(0, 0) = 1.0;
  for (int i = size() - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.has_grad && n.back) n.back(*this, i);
  }
}

std::vector<Tape::Record> Tape::records() const {
  std::vector<Record> out;
  out.reserve(nodes_.size());
  for (int i = 0; i < size(); ++i) {
    const Node& n = nodes_[static_cast<size_t>(i)];
    out.push_back(Record{n.kind, n.inputs, i});
  }
  return out;
}

// ---------------------------------------------------------------------------
// ops

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  check_same_shape(t.val(a), t.val(b), "add");
  const int ia = a.id, ib = b.id;
  return t.make("add", t.val(a) + t.val(b), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ia)) t.grad_ref(ia) += g;
    if (t.node_needs(ib)) t.grad_ref(ib) += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  check_same_shape(t.val(a), t.val(b), "sub");
  const int ia = a.id, ib = b.id;
  return t.make("sub", t.val(a) - t.val(b), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ia)) t.grad_ref(ia) += g;
    if (t.node_needs(ib)) t.grad_ref(ib) -= g;
  });
}

Var axpby(Scalar alpha, Var a, Scalar beta, Var b) {
  Tape& t = same_tape(a, b, "axpby");
  check_same_shape(t.val(a), t.val(b), "axpby");
  const int ia = a.id, ib = b.id;
  Mat y = alpha * t.val(a) + beta * t.val(b);
  return t.make("axpby", std::move(y), {ia, ib}, [ia, ib, alpha, beta](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ia)) t.grad_ref(ia) += alpha * g;
    if (t.node_needs(ib)) t.grad_ref(ib) += beta * g;
  });
}

Var scale(Var a, Scalar c) {
  Tape& t = *a.tape;
  const int ia = a.id;
  return t.make("scale", c * t.val(a), {ia}, [ia, c](Tape& t, int out) {
    if (t.node_needs(ia)) t.grad_ref(ia) += c * t.grad_ref(out);
  });
}

Var affine_const(Var a, Scalar mul, Scalar shift) {
  Tape& t = *a.tape;
  const int ia = a.id;
  Mat y = (mul * t.val(a).array() + shift).matrix();
  return t.make("affine_const", std::move(y), {ia}, [ia, mul](Tape& t, int out) {
    if (t.node_needs(ia)) t.grad_ref(ia) += mul * t.grad_ref(out);
  });
}

Var add_rowvec(Var x, Var row) {
  Tape& t = same_tape(x, row, "add_rowvec");
  const Mat& xv = t.val(x);
  const Mat& rv = t.val(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ShapeError("add_rowvec: row must be 1x" + std::to_string(xv.cols()) + ", got " +
                     shape_str(rv));
  }
  Mat y = xv.rowwise() + rv.row(0);
  const int ix = x.id, ir = row.id;
  return t.make("add_rowvec", std::move(y), {ix, ir}, [ix, ir](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ix)) t.grad_ref(ix) += g;
    if (t.node_needs(ir)) t.grad_ref(ir) += g.colwise().sum();
  });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Mat& av = t.val(a);
  const Mat& bv = t.val(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions do not match, " + shape_str(av) + " * " +
                     shape_str(bv));
  }
  const int ia = a.id, ib = b.id;
  return t.make("matmul", av * bv, {ia, ib}, [ia, ib](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ia)) t.grad_ref(ia) += g * t.val_of(ib).transpose();
    if (t.node_needs(ib)) t.grad_ref(ib) += t.val_of(ia).transpose() * g;
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b, "hadamard");
  check_same_shape(t.val(a), t.val(b), "hadamard");
  const int ia = a.id, ib = b.id;
  Mat y = t.val(a).cwiseProduct(t.val(b));
  return t.make("hadamard", std::move(y), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    if (t.node_needs(ia)) t.grad_ref(ia) += g.cwiseProduct(t.val_of(ib));
    if (t.node_needs(ib)) t.grad_ref(ib) += g.cwiseProduct(t.val_of(ia));
  });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  const int ix = x.id;
  Mat y = t.val(x).cwiseMax(0.0);
  return t.make("relu", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (!t.node_needs(ix)) return;
    const Mat& g = t.grad_ref(out);
    const Mat& y = t.val_of(out);
    t.grad_ref(ix).array() += g.array() * (y.array() > 0.0).cast<Scalar>();
  });
}

Var tanh(Var x) {
  Tape& t = *x.tape;
  const int ix = x.id;
  Mat y = t.val(x).array().tanh().matrix();
  return t.make("tanh", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (!t.node_needs(ix)) return;
    const Mat& g = t.grad_ref(out);
    const Mat& y = t.val_of(out);
    t.grad_ref(ix).array() += g.array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  const int ix = x.id;
  Mat y = (1.0 / (1.0 + (-t.val(x).array()).exp())).matrix();
  return t.make("sigmoid", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (!t.node_needs(ix)) return;
    const Mat& g = t.grad_ref(out);
    const Mat& y = t.val_of(out);
    t.grad_ref(ix).array() += g.array() * y.array() * (1.0 - y.array());
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  const Mat& xv = t.val(x);
  if (xv.rows() < 1 || xv.cols() < 1) throw ShapeError("softmax_rows: empty input");
  Mat y(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    Eigen::ArrayXd row = xv.row(r).array() - xv.row(r).maxCoeff();
    Eigen::ArrayXd e = row.exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  const int ix = x.id;
  return t.make("softmax_rows", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (!t.node_needs(ix)) return;
    const Mat& g = t.grad_ref(out);
    const Mat& y = t.val_of(out);
    Mat& gx = t.grad_ref(ix);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = g.row(r).cwiseProduct(y.row(r)).sum();
      gx.row(r).array() += (g.row(r).array() - dot) * y.row(r).array();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Tape& t = *parts[0].tape;
  const Eigen::Index rows = t.val(parts[0]).rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_cols");
    const Mat& v = t.val(p);
    if (v.rows() != rows) {
      throw ShapeError("concat_cols: row count mismatch " + std::to_string(rows) + " vs " +
                       shape_str(v));
    }
    ids.push_back(p.id);
    widths.push_back(v.cols());
    cols += v.cols();
  }
  Mat y(rows, cols);
  Eigen::Index off = 0;
  for (size_t k = 0; k < ids.size(); ++k) {
    y.middleCols(off, widths[k]) = t.val_of(ids[k]);
    off += widths[k];
  }
  return t.make("concat_cols", std::move(y), ids, [ids, widths](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    Eigen::Index off = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      if (t.node_needs(ids[k])) t.grad_ref(ids[k]) += g.middleCols(off, widths[k]);
      off += widths[k];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Tape& t = *parts[0].tape;
  const Eigen::Index cols = t.val(parts[0]).cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat_rows");
    const Mat& v = t.val(p);
    if (v.cols() != cols) {
      throw ShapeError("concat_rows: column count mismatch " + std::to_string(cols) + " vs " +
                       shape_str(v));
    }
    ids.push_back(p.id);
    heights.push_back(v.rows());
    rows += v.rows();
  }
  Mat y(rows, cols);
  Eigen::Index off = 0;
  for (size_t k = 0; k < ids.size(); ++k) {
    y.middleRows(off, heights[k]) = t.val_of(ids[k]);
    off += heights[k];
  }
  return t.make("concat_rows", std::move(y), ids, [ids, heights](Tape& t, int out) {
    const Mat& g = t.grad_ref(out);
    Eigen::Index off = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      if (t.node_needs(ids[k])) t.grad_ref(ids[k]) += g.middleRows(off, heights[k]);
      off += heights[k];
    }
  });
}

Var slice_rows(Var x, int first, int count) {
  Tape& t = *x.tape;
  const Mat& xv = t.val(x);
  if (first < 0 || count <= 0 || first + count > xv.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") outside " + shape_str(xv));
  }
  const int ix = x.id;
  Mat y = xv.middleRows(first, count);
  return t.make("slice_rows", std::move(y), {ix}, [ix, first, count](Tape& t, int out) {
    if (t.node_needs(ix)) t.grad_ref(ix).middleRows(first, count) += t.grad_ref(out);
  });
}

Var slice_cols(Var x, int first, int count) {
  Tape& t = *x.tape;
  const Mat& xv = t.val(x);
  if (first < 0 || count <= 0 || first + count > xv.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") outside " + shape_str(xv));
  }
  const int ix = x.id;
  Mat y = xv.middleCols(first, count);
  return t.make("slice_cols", std::move(y), {ix}, [ix, first, count](Tape& t, int out) {
    if (t.node_needs(ix)) t.grad_ref(ix).middleCols(first, count) += t.grad_ref(out);
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  Tape& t = same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const Mat& xv = t.val(x);
  const Mat& gv = t.val(gain);
  const Mat& bv = t.val(bias);
  const Eigen::Index d = xv.cols();
  if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d) {
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(d));
  }
  Mat xhat(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().mean();
    const Scalar is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std(r) = is;
    xhat.row(r) = ((xv.row(r).array() - mean) * is).matrix();
  }
  Mat y = (xhat.array().rowwise() * gv.row(0).array()).matrix().rowwise() + bv.row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return t.make(
      "layer_norm", std::move(y), {ix, ig, ib},
      [ix, ig, ib, xhat, inv_std](Tape& t, int out) {
        const Mat& g = t.grad_ref(out);
        if (t.node_needs(ig)) t.grad_ref(ig) += g.cwiseProduct(xhat).colwise().sum();
        if (t.node_needs(ib)) t.grad_ref(ib) += g.colwise().sum();
        if (!t.node_needs(ix)) return;
        const Mat& gv = t.val_of(ig);
        Mat dxhat = g.array().rowwise() * gv.row(0).array();
        Mat& gx = t.grad_ref(ix);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const Scalar m1 = dxhat.row(r).mean();
          const Scalar m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          gx.row(r).array() +=
              inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
      });
}

Var dropout(Var x, Scalar rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Tape& t = *x.tape;
  const Mat& xv = t.val(x);
  const Scalar keep_scale = 1.0 / (1.0 - rate);
  Mat mask(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r)
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  const int ix = x.id;
  Mat y = xv.cwiseProduct(mask);
  return t.make("dropout", std::move(y), {ix}, [ix, mask](Tape& t, int out) {
    if (t.node_needs(ix)) t.grad_ref(ix) += t.grad_ref(out).cwiseProduct(mask);
  });
}

Var sum_squares(Var x) {
  Tape& t = *x.tape;
  const int ix = x.id;
  Mat y(1, 1);
  y(0, 0) = t.val(x).squaredNorm();
  return t.make("sum_squares", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (t.node_needs(ix)) t.grad_ref(ix) += 2.0 * t.grad_ref(out)(0, 0) * t.val_of(ix);
  });
}

Var sqrt_scalar(Var x) {
  Tape& t = *x.tape;
  const Mat& xv = t.val(x);
  if (xv.rows() != 1 || xv.cols() != 1) throw ShapeError("sqrt_scalar: input must be 1x1");
  if (xv(0, 0) < 0.0) throw NumericError("sqrt_scalar: negative input");
  const int ix = x.id;
  Mat y(1, 1);
  y(0, 0) = std::sqrt(xv(0, 0));
  return t.make("sqrt_scalar", std::move(y), {ix}, [ix](Tape& t, int out) {
    if (!t.node_needs(ix)) return;
    const Scalar root = t.val_of(out)(0, 0);
    t.grad_ref(ix)(0, 0) += t.grad_ref(out)(0, 0) * 0.5 / std::max(root, 1e-12);
  });
}

namespace {
void check_labels(const Mat& probs, const std::vector<int>& labels, const char* kind) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw ShapeError(std::string(kind) + ": " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(probs.rows()) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= probs.cols()) {
      throw Error(std::string(kind) + ": label " + std::to_string(y) + " outside " +
                  std::to_string(probs.cols()) + " classes");
    }
  }
}
}  // namespace

Var ce_loss_mean(Var probs, const std::vector<int>& labels) {
  Tape& t = *probs.tape;
  const Mat& pv = t.val(probs);
  check_labels(pv, labels, "ce_loss_mean");
  const Scalar inv_n = 1.0 / static_cast<Scalar>(labels.size());
  Scalar loss = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    loss -= std::log(std::max(pv(static_cast<Eigen::Index>(i), labels[i]), kProbFloor));
  }
  Mat y(1, 1);
  y(0, 0) = loss * inv_n;
  const int ip = probs.id;
  return t.make("ce_loss_mean", std::move(y), {ip}, [ip, labels, inv_n](Tape& t, int out) {
    if (!t.node_needs(ip)) return;
    const Scalar g = t.grad_ref(out)(0, 0);
    const Mat& pv = t.val_of(ip);
    Mat& gp = t.grad_ref(ip);
    for (size_t i = 0; i < labels.size(); ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      const Scalar p = pv(r, labels[i]);
      if (p >= kProbFloor) gp(r, labels[i]) -= g * inv_n / p;
    }
  });
}

Var focal_loss_mean(Var probs, const std::vector<int>& labels,
                    const std::vector<Scalar>& class_weights, Scalar gamma_f) {
  Tape& t = *probs.tape;
  const Mat& pv = t.val(probs);
  check_labels(pv, labels, "focal_loss_mean");
  if (gamma_f < 0.0) throw Error("focal_loss_mean: gamma must be >= 0");
  if (static_cast<Eigen::Index>(class_weights.size()) != pv.cols()) {
    throw ShapeError("focal_loss_mean: need one weight per class");
  }
  const Scalar inv_n = 1.0 / static_cast<Scalar>(labels.size());
  Scalar loss = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const Scalar p = std::max(pv(static_cast<Eigen::Index>(i), labels[i]), kProbFloor);
    loss -= class_weights[static_cast<size_t>(labels[i])] * std::pow(1.0 - p, gamma_f) *
            std::log(p);
  }
  Mat y(1, 1);
  y(0, 0) = loss * inv_n;
  const int ip = probs.id;
  return t.make(
      "focal_loss_mean", std::move(y), {ip},
      [ip, labels, class_weights, gamma_f, inv_n](Tape& t, int out) {
        if (!t.node_needs(ip)) return;
        const Scalar g = t.grad_ref(out)(0, 0);
        const Mat& pv = t.val_of(ip);
        Mat& gp = t.grad_ref(ip);
        for (size_t i = 0; i < labels.size(); ++i) {
          const Eigen::Index r = static_cast<Eigen::Index>(i);
          const Scalar p = pv(r, labels[i]);
          if (p < kProbFloor) continue;  // clamped region, flat
          const Scalar w = class_weights[static_cast<size_t>(labels[i])];
          const Scalar q = 1.0 - p;
          // d/dp of -w*(1-p)^gf*log(p)
          Scalar d = -w * std::pow(q, gamma_f) / p;
          if (gamma_f > 0.0 && q > 0.0) d += w * gamma_f * std::pow(q, gamma_f - 1.0) * std::log(p);
          gp(r, labels[i]) += g * inv_n * d;
        }
      });
}

}  // namespace mmgcn
