#include "dpn/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace dpn {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kConv3x3: return "conv3x3";
    case OpKind::kConv1x1: return "conv1x1";
    case OpKind::kMaxPool: return "maxpool";
    case OpKind::kUpsample2x: return "upsample2x";
    case OpKind::kConcat: return "concat";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSum: return "sum";
    case OpKind::kBalancedBce: return "balanced_bce";
  }
  return "?";
}

template <typename T>
const typename BasicTape<T>::Node& BasicTape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw std::out_of_range("tape: value " + std::to_string(v.id) + " was not recorded on this tape");
  }
  return nodes_[v.id];
}

template <typename T>
Var BasicTape<T>::push(Node&& n) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw std::length_error("tape is full");
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
typename BasicTape<T>::Node BasicTape<T>::make(OpKind kind, std::initializer_list<Var> in) {
  Node n;
  n.kind = kind;
  for (Var v : in) {
    const Node& src = node(v);
    n.inputs[n.input_count++] = v.id;
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  return n;
}

template <typename T>
Var BasicTape<T>::input(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kInput;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::param(BasicParam<T>& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{it->second};
  Node n;
  n.kind = OpKind::kParam;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  const Var v = push(std::move(n));
  param_ids_.emplace(&p, v.id);
  return v;
}

template <typename T>
Var BasicTape<T>::conv3x3(Var x, Var weight, Var bias) {
  Node n = make(OpKind::kConv3x3, {x, weight, bias});
  n.value = dpn::conv3x3(value(x), value(weight), value(bias).data());
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::conv1x1(Var x, Var weight, Var bias) {
  Node n = make(OpKind::kConv1x1, {x, weight, bias});
  n.value = dpn::conv1x1(value(x), value(weight), value(bias).data());
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::maxpool(Var x, int k) {
  Node n = make(OpKind::kMaxPool, {x});
  n.k = k;
  n.value = dpn::maxpool(value(x), k, &n.pool);
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::upsample2x(Var x) {
  Node n = make(OpKind::kUpsample2x, {x});
  n.value = dpn::upsample2x(value(x));
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::concat(Var a, Var b) {
  Node n = make(OpKind::kConcat, {a, b});
  n.value = concat_channels(value(a), value(b));
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::relu(Var x) {
  Node n = make(OpKind::kRelu, {x});
  n.value = dpn::relu(value(x));
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::sigmoid(Var x) {
  Node n = make(OpKind::kSigmoid, {x});
  n.value = dpn::sigmoid(value(x));
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::add(Var a, Var b) {
  if (value(a).shape() != value(b).shape()) {
    throw ShapeError("add: " + value(a).shape().str() + " vs " + value(b).shape().str());
  }
  Node n = make(OpKind::kAdd, {a, b});
  n.value = value(a);
  const Tensor& rhs = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += rhs[i];
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::mul(Var a, Var b) {
  if (value(a).shape() != value(b).shape()) {
    throw ShapeError("mul: " + value(a).shape().str() + " vs " + value(b).shape().str());
  }
  Node n = make(OpKind::kMul, {a, b});
  n.value = value(a);
  const Tensor& rhs = value(b);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= rhs[i];
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::sum(Var x) {
  Node n = make(OpKind::kSum, {x});
  T total{0};
  for (T v : value(x).data()) total += v;
  n.value = Tensor(Shape{1, 1, 1, 1}, total);
  return push(std::move(n));
}

template <typename T>
Var BasicTape<T>::balanced_bce(Var logits, Tensor label, T beta) {
  const Tensor& z = value(logits);
  if (label.shape() != z.shape()) {
    throw ShapeError("balanced_bce: label " + label.shape().str() + " vs logits " + z.shape().str());
  }
  Node n = make(OpKind::kBalancedBce, {logits});
  T pos{0}, neg{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (label[i] > T(0.5)) pos += softplus(-z[i]);
    else neg += softplus(z[i]);
  }
  n.value = Tensor(Shape{1, 1, 1, 1}, beta * pos + (T{1} - beta) * neg);
  n.saved = std::move(label);
  n.scalar = beta;
  return push(std::move(n));
}

template <typename T>
std::uint64_t BasicTape<T>::branch_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kRelu) {
      const Tensor& in = nodes_[n.inputs[0]].value;
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        word = (word << 1) | (in[i] > T{0} ? 1u : 0u);
        if (i % 64 == 63) {
          mix(word);
          word = 0;
        }
      }
      mix(word);
    } else if (n.kind == OpKind::kMaxPool) {
      for (std::uint32_t a : n.pool.argmax) mix(a);
    }
  }
  return h;
}

template <typename T>
void BasicTape<T>::accumulate(std::uint32_t id, const Tensor& g) {
  Node& dst = nodes_[id];
  if (!dst.requires_grad) return;
  if (dst.grad.shape() != dst.value.shape()) {
    dst.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

template <typename T>
void BasicTape<T>::accumulate(std::uint32_t id, Tensor&& g) {
  Node& dst = nodes_[id];
  if (!dst.requires_grad) return;
  if (dst.grad.shape() != dst.value.shape()) {
    dst.grad = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

template <typename T>
void BasicTape<T>::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.shape() != (Shape{1, 1, 1, 1})) {
    throw ShapeError("backward: loss must be a scalar, got " + root.value.shape().str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss.id].grad = Tensor(Shape{1, 1, 1, 1}, T{1});

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (n.grad.empty() || !n.requires_grad) continue;
    const Tensor& g = n.grad;
    const auto in0 = n.inputs[0], in1 = n.inputs[1], in2 = n.inputs[2];
    switch (n.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kParam: {
        BasicParam<T>& p = *n.param;
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
        break;
      }
      case OpKind::kConv3x3: {
        const Tensor& x = nodes_[in0].value;
        const Tensor& w = nodes_[in1].value;
        if (nodes_[in0].requires_grad) accumulate(in0, conv3x3_grad_input(g, w));
        if (nodes_[in1].requires_grad || nodes_[in2].requires_grad) {
          Tensor gw(w.shape());
          Tensor gb(nodes_[in2].value.shape());
          conv3x3_grad_params(x, g, gw, gb.data());
          accumulate(in1, std::move(gw));
          accumulate(in2, std::move(gb));
        }
        break;
      }
      case OpKind::kConv1x1: {
        const Tensor& x = nodes_[in0].value;
        const Tensor& w = nodes_[in1].value;
        if (nodes_[in0].requires_grad) accumulate(in0, conv1x1_grad_input(g, w));
        if (nodes_[in1].requires_grad || nodes_[in2].requires_grad) {
          Tensor gw(w.shape());
          Tensor gb(nodes_[in2].value.shape());
          conv1x1_grad_params(x, g, gw, gb.data());
          accumulate(in1, std::move(gw));
          accumulate(in2, std::move(gb));
        }
        break;
      }
      case OpKind::kMaxPool:
        accumulate(in0, maxpool_grad(g, n.pool, nodes_[in0].value.shape()));
        break;
      case OpKind::kUpsample2x:
        accumulate(in0, upsample2x_grad(g));
        break;
      case OpKind::kConcat: {
        auto [ga, gb] = split_channels(g, nodes_[in0].value.c());
        accumulate(in0, std::move(ga));
        accumulate(in1, std::move(gb));
        break;
      }
      case OpKind::kRelu: {
        Tensor gi = g;
        for (std::size_t i = 0; i < gi.size(); ++i) {
          if (!(n.value[i] > T{0})) gi[i] = T{0};
        }
        accumulate(in0, std::move(gi));
        break;
      }
      case OpKind::kSigmoid: {
        Tensor gi = g;
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] *= n.value[i] * (T{1} - n.value[i]);
        accumulate(in0, std::move(gi));
        break;
      }
      case OpKind::kAdd:
        accumulate(in0, g);
        accumulate(in1, g);
        break;
      case OpKind::kMul: {
        if (nodes_[in0].requires_grad) {
          Tensor ga = g;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= nodes_[in1].value[i];
          accumulate(in0, std::move(ga));
        }
        if (nodes_[in1].requires_grad) {
          Tensor gb = g;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= nodes_[in0].value[i];
          accumulate(in1, std::move(gb));
        }
        break;
      }
      case OpKind::kSum:
        accumulate(in0, Tensor(nodes_[in0].value.shape(), g[0]));
        break;
      case OpKind::kBalancedBce: {
        const Tensor& z = nodes_[in0].value;
        const T beta = n.scalar, scale = g[0];
        Tensor gi(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) {
          const T p = stable_sigmoid(z[i]);
          gi[i] = scale * (n.saved[i] > T(0.5) ? beta * (p - T{1}) : (T{1} - beta) * p);
        }
        accumulate(in0, std::move(gi));
        break;
      }
    }
    // Intermediate adjoints are dead once propagated; leaves keep theirs for grad().
    if (n.kind != OpKind::kInput && n.kind != OpKind::kParam) n.grad = Tensor();
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace dpn
