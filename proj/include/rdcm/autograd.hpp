#pragma once

#include "rdcm/params.hpp"
#include "rdcm/tensor.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace rdcm {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Reverse-mode gradient tape over whole-tensor operations.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order; backward() walks it in reverse. Gradient buffers are
/// allocated on first accumulation, and nodes whose buffer was never touched
/// are skipped, so branches that do not reach the loss cost nothing.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Binds a parameter; repeated binds of the same entry return the same node.
  Var param(const ParamSet& params, std::string_view name);

  // Records an operation output. The node requires a gradient when any input does.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward() target w.r.t. v; zero-filled when v was not reached.
  Tensor grad(Var v) const;

  // Called from backward closures. Returns the (lazily zero-initialised) gradient buffer.
  Tensor& grad_slot(Var v);

  void backward(Var loss);
  // Writes gradients of nodes bound to `params` into its gradient slots (zero when unreached).
  void write_param_grads(ParamSet& params) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    const ParamSet* params = nullptr;
    std::size_t param_index = 0;
  };

  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamSet*, std::size_t>, std::size_t> param_nodes_;
};

/// Runs backward from a scalar loss and stores d(loss)/d(param) in `params`.
/// Parameters of `params` that the loss does not depend on receive zero gradients.
void compute_gradients(Tape& tape, Var loss, ParamSet& params);

namespace ag {

Var matmul(Var a, Var b);     // a (n x k) * b (k x m)
Var matmul_nt(Var a, Var b);  // a (n x k) * b^T, b (m x k)
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_bias(Var x, Var bias);  // bias has x.cols() entries, broadcast over rows
Var scale(Var a, double factor);
Var hadamard(Var a, Var b);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var l2_normalize_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);

}  // namespace ag

}  // namespace rdcm
