#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpn/kernels.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// A learnable tensor with its gradient accumulator and ADAM moment buffers.
template <typename T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> m;
  BasicTensor<T> v;

  BasicParam() = default;
  BasicParam(std::string param_name, Shape shape)
      : name(std::move(param_name)), value(shape), grad(shape), m(shape), v(shape) {}

  [[nodiscard]] std::size_t size() const { return value.size(); }
  void zero_grad() {
    if (grad.shape() != value.shape()) grad = BasicTensor<T>(value.shape());
    grad.fill(T{0});
  }

  template <typename U>
  [[nodiscard]] BasicParam<U> cast() const {
    BasicParam<U> out;
    out.name = name;
    out.value = value.template cast<U>();
    out.grad = grad.template cast<U>();
    out.m = m.template cast<U>();
    out.v = v.template cast<U>();
    return out;
  }
};

using Param = BasicParam<float>;
using ParamD = BasicParam<double>;

/// Handle to a value recorded on a tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
};

enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kConv3x3,
  kConv1x1,
  kMaxPool,
  kUpsample2x,
  kConcat,
  kRelu,
  kSigmoid,
  kAdd,
  kMul,
  kSum,
  kBalancedBce,
};

const char* op_name(OpKind kind);

/// Records forward operations in execution order and sweeps them backwards
/// once to produce adjoints. Single owner; not thread-safe.
template <typename T>
class BasicTape {
 public:
  using Tensor = BasicTensor<T>;

  Var input(Tensor value, bool requires_grad = false);
  /// Registers a parameter leaf. Registering the same parameter twice returns the same Var.
  Var param(BasicParam<T>& p);

  Var conv3x3(Var x, Var weight, Var bias);
  Var conv1x1(Var x, Var weight, Var bias);
  Var maxpool(Var x, int k);
  Var upsample2x(Var x);
  Var concat(Var a, Var b);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  /// Sum of every element, as a 1x1x1x1 tensor.
  Var sum(Var x);
  /// Class-balanced binary cross-entropy of sigmoid(logits) against a binary label:
  /// beta * sum_{y=1} softplus(-z) + (1 - beta) * sum_{y=0} softplus(z).
  Var balanced_bce(Var logits, Tensor label, T beta);

  [[nodiscard]] const Tensor& value(Var v) const { return node(v).value; }
  /// Adjoint of v after backward(); empty when no gradient reached it.
  [[nodiscard]] const Tensor& grad(Var v) const { return node(v).grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] OpKind kind(Var v) const { return node(v).kind; }
  /// Hash of every ReLU sign and maxpool argmax recorded so far. Two forward
  /// passes with equal signatures lie on the same smooth piece of the graph.
  [[nodiscard]] std::uint64_t branch_signature() const;

  /// Reverse sweep from a scalar loss. Parameter adjoints are added to each
  /// registered parameter's grad.
  void backward(Var loss);

  void clear() {
    nodes_.clear();
    param_ids_.clear();
  }

 private:
  struct Node {
    OpKind kind = OpKind::kInput;
    std::uint32_t inputs[3] = {0, 0, 0};
    std::uint8_t input_count = 0;
    bool requires_grad = false;
    Tensor value;
    Tensor grad;
    PoolResult pool;      // maxpool argmax
    Tensor saved;         // balanced_bce label
    T scalar{0};          // balanced_bce beta
    int k = 0;            // maxpool window
    BasicParam<T>* param = nullptr;
  };

  const Node& node(Var v) const;
  Var push(Node&& n);
  Node make(OpKind kind, std::initializer_list<Var> in);
  void accumulate(std::uint32_t id, const Tensor& g);
  void accumulate(std::uint32_t id, Tensor&& g);

  std::vector<Node> nodes_;
  std::unordered_map<const BasicParam<T>*, std::uint32_t> param_ids_;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

}  // namespace dpn
