#include "rdcm/autograd.hpp"

#include "rdcm/errors.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace rdcm {

const Tensor& Var::value() const {
  if (tape == nullptr) throw UsageError("Var is not attached to a tape");
  return tape->value(*this);
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw UsageError(std::string(what) + ": variable does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const ParamSet& params, std::string_view name) {
  const std::size_t index = params.index_of(name);
  const auto key = std::make_pair(static_cast<const ParamSet*>(&params), index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = params.at(index).value;
  n.requires_grad = true;
  n.params = &params;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(key, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    check_owned(in, "record");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id].requires_grad;
}

Tensor Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Tape::grad_slot(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  if (nodes_[loss.id].value.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + nodes_[loss.id].value.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_slot(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::write_param_grads(ParamSet& params) const {
  for (const auto& n : nodes_) {
    if (n.params != &params) continue;
    ParamEntry& e = params.at(n.param_index);
    if (n.grad.empty()) {
      e.grad.fill(0.0);
    } else {
      e.grad = n.grad;
    }
  }
}

void compute_gradients(Tape& tape, Var loss, ParamSet& params) {
  if (loss.tape != &tape) throw UsageError("compute_gradients: loss was not recorded on this tape");
  tape.backward(loss);
  params.zero_grad();
  tape.write_param_grads(params);
}

namespace ag {

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw UsageError("operands recorded on different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw UsageError("Var is not attached to a tape");
  return *a.tape;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor out({av.rows(), bv.cols()});
  out.mat().noalias() = av.mat() * bv.mat();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.grad_slot(a).mat().noalias() += g.mat() * tp.value(b).mat().transpose();
    if (tp.requires_grad(b)) tp.grad_slot(b).mat().noalias() += tp.value(a).mat().transpose() * g.mat();
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + av.shape_string() + " x " + bv.shape_string() + "^T");
  }
  Tensor out({av.rows(), bv.rows()});
  out.mat().noalias() = av.mat() * bv.mat().transpose();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.grad_slot(a).mat().noalias() += g.mat() * tp.value(b).mat();
    if (tp.requires_grad(b)) tp.grad_slot(b).mat().noalias() += g.mat().transpose() * tp.value(a).mat();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto ov = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    for (Var in : {a, b}) {
      if (!tp.requires_grad(in)) continue;
      auto dst = tp.grad_slot(in).values();
      auto src = g.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto ov = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    auto src = g.values();
    if (tp.requires_grad(a)) {
      auto dst = tp.grad_slot(a).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (tp.requires_grad(b)) {
      auto dst = tp.grad_slot(b).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + bv.shape_string() + " for input " + xv.shape_string());
  }
  Tensor out = xv;
  auto m = out.mat();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += bv.values()[static_cast<std::size_t>(c)];
  }
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) {
      auto dst = tp.grad_slot(x).values();
      auto src = g.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (tp.requires_grad(bias)) {
      auto dst = tp.grad_slot(bias).values();
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += g(r, c);
      }
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Tensor& g) {
    auto dst = tp.grad_slot(a).values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  auto ov = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    auto src = g.values();
    if (tp.requires_grad(a)) {
      auto other = tp.value(b).values();
      auto dst = tp.grad_slot(a).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * other[i];
    }
    if (tp.requires_grad(b)) {
      auto other = tp.value(a).values();
      auto dst = tp.grad_slot(b).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * other[i];
    }
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    auto in = tp.value(a).values();
    auto src = g.values();
    auto dst = tp.grad_slot(a).values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (in[i] > 0.0) dst[i] += src[i];
    }
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [a, self](Tape& tp, const Tensor& g) {
    auto y = tp.value(Var{&tp, self}).values();
    auto src = g.values();
    auto dst = tp.grad_slot(a).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * y[i];
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) {
    if (!(v > 0.0)) throw ValidationError("log of non-positive value");
    v = std::log(v);
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    auto x = tp.value(a).values();
    auto src = g.values();
    auto dst = tp.grad_slot(a).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] / x[i];
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts " + av.shape_string() + " vs " + bv.shape_string());
  }
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor out({av.rows(), ca + cb});
  out.mat().leftCols(static_cast<Eigen::Index>(ca)) = av.mat();
  out.mat().rightCols(static_cast<Eigen::Index>(cb)) = bv.mat();
  return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.grad_slot(a).mat() += g.mat().leftCols(static_cast<Eigen::Index>(ca));
    if (tp.requires_grad(b)) tp.grad_slot(b).mat() += g.mat().rightCols(static_cast<Eigen::Index>(cb));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() < 1 || begin + count > av.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + av.shape_string());
  }
  const std::size_t width = av.size() / av.dim(0);
  std::vector<std::size_t> shape = av.shape();
  shape[0] = count;
  Tensor out(shape);
  std::memcpy(out.values().data(), av.values().data() + begin * width, count * width * sizeof(double));
  return t.record(std::move(out), {a}, [a, begin, width](Tape& tp, const Tensor& g) {
    auto dst = tp.grad_slot(a).values();
    auto src = g.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[begin * width + i] += src[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    tape_of(parts.front(), p);
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.value().rows();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  std::vector<Var> captured = parts;
  return t.record(std::move(out), std::span<const Var>(parts), [captured](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    auto src = g.values();
    for (Var p : captured) {
      const std::size_t n = tp.value(p).size();
      if (tp.requires_grad(p)) {
        auto dst = tp.grad_slot(p).values();
        for (std::size_t i = 0; i < n; ++i) dst[i] += src[off + i];
      }
      off += n;
    }
  });
}

Var l2_normalize_rows(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out = av;
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (double v : av.row(r)) ss += v * v;
    norms[r] = std::sqrt(ss);
    if (norms[r] >= 1e-12) {
      for (double& v : out.row(r)) v /= norms[r];
    }
  }
  const std::size_t self = t.size();
  return t.record(std::move(out), {a}, [a, self, norms, cols](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, self});
    Tensor& dst = tp.grad_slot(a);
    for (std::size_t r = 0; r < norms.size(); ++r) {
      auto gr = g.row(r);
      auto dr = dst.row(r);
      if (norms[r] < 1e-12) {
        for (std::size_t c = 0; c < cols; ++c) dr[c] += gr[c];
        continue;
      }
      auto yr = y.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
      for (std::size_t c = 0; c < cols; ++c) dr[c] += (gr[c] - yr[c] * dot) / norms[r];
    }
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
    const double gv = g.values()[0];
    for (double& d : tp.grad_slot(a).values()) d += gv;
  });
}

Var mean_all(Var a) {
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean_all of empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s / n), {a}, [a, n](Tape& tp, const Tensor& g) {
    const double gv = g.values()[0] / n;
    for (double& d : tp.grad_slot(a).values()) d += gv;
  });
}

}  // namespace ag

}  // namespace rdcm
